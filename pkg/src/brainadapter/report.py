"""Clinical record templating, vocabulary building and tokenization."""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, List, Sequence

import numpy as np

PAD, UNK = 0, 1
PAD_TOKEN, UNK_TOKEN = "<pad>", "<unk>"
CDR_VALUES = (0.0, 0.5, 1.0, 2.0, 3.0)
DEFAULT_MAX_LEN = 64

# decimals such as "0.5" stay whole; every other punctuation mark is its own token
_TOKEN_RE = re.compile(r"\d+\.\d+|\w+|[^\w\s]")


@dataclass(frozen=True)
class ReportRecord:
    age: int
    sex: str
    education_years: int
    apoe4_count: int
    mmse: int
    cdr: float
    note: str = ""

    def validate(self) -> None:
        if not 0 <= self.mmse <= 30:
            raise ValueError(f"mmse must lie in [0, 30], got {self.mmse}")
        if self.apoe4_count not in (0, 1, 2):
            raise ValueError(f"apoe4_count must be 0, 1 or 2, got {self.apoe4_count}")
        if float(self.cdr) not in CDR_VALUES:
            raise ValueError(f"cdr must be one of {CDR_VALUES}, got {self.cdr}")
        if self.age < 0 or self.education_years < 0:
            raise ValueError("age and education_years must be non-negative")


def _fmt_cdr(cdr: float) -> str:
    return f"{float(cdr):g}"


def render_report(record: ReportRecord) -> str:
    record.validate()
    note = record.note.strip() or "none"
    return (
        f"Age: {record.age}. Sex: {record.sex}. Education: {record.education_years} years. "
        f"APOE4 alleles: {record.apoe4_count}. MMSE: {record.mmse}. CDR: {_fmt_cdr(record.cdr)}. "
        f"Notes: {note}"
    )


def split_words(text: str) -> List[str]:
    return _TOKEN_RE.findall(text.lower())


class Vocabulary:
    """Token to id map with PAD=0 and UNK=1 reserved."""

    def __init__(self, tokens: Sequence[str]):
        self.itos: List[str] = [PAD_TOKEN, UNK_TOKEN] + list(tokens)
        self.stoi: Dict[str, int] = {t: i for i, t in enumerate(self.itos)}
        if len(self.stoi) != len(self.itos):
            raise ValueError("duplicate tokens in vocabulary")

    def __len__(self) -> int:
        return len(self.itos)

    def __contains__(self, token: str) -> bool:
        return token in self.stoi

    def __getitem__(self, token: str) -> int:
        return self.stoi.get(token, UNK)

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocabulary) and self.itos == other.itos

    def save(self, path) -> None:
        Path(path).write_text("".join(t + "\n" for t in self.itos[2:]), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        text = Path(path).read_text(encoding="utf-8")
        return cls(text.split("\n")[:-1] if text else [])


def build_vocab(corpus: Iterable[str], max_size: int) -> Vocabulary:
    if max_size < 3:
        raise ValueError(f"max_size must be at least 3, got {max_size}")
    corpus = list(corpus)
    if not corpus:
        raise ValueError("cannot build a vocabulary from an empty corpus")
    counts = Counter(tok for text in corpus for tok in split_words(text))
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return Vocabulary([tok for tok, _ in ranked[: max_size - 2]])


def tokenize(text: str, vocab: Vocabulary, max_len: int = DEFAULT_MAX_LEN) -> np.ndarray:
    """Map ``text`` to exactly ``max_len`` ids, truncating or PAD-filling."""
    if max_len < 1:
        raise ValueError("max_len must be >= 1")
    ids = [vocab[tok] for tok in split_words(text)][:max_len]
    out = np.full(max_len, PAD, dtype=np.int64)
    out[: len(ids)] = ids
    return out


# class-conditional generator ranges; overlapping on purpose so neither
# modality alone separates the classes perfectly
_NOTES = {
    "CN": (
        "No cognitive complaints reported.",
        "Stable memory on follow-up.",
        "Independent in daily activities.",
        "Mild forgetfulness consistent with age.",
        "",
    ),
    "MCI": (
        "Subjective memory complaints confirmed by informant.",
        "Mild forgetfulness consistent with age.",
        "Occasional difficulty with word finding.",
        "Stable memory on follow-up.",
        "",
    ),
    "AD": (
        "Decline in condition likely due to comorbid worsening of health.",
        "Requires assistance with daily activities.",
        "Occasional difficulty with word finding.",
        "Subjective memory complaints confirmed by informant.",
        "",
    ),
}

_APOE4_PROBS = {"CN": (0.7, 0.25, 0.05), "MCI": (0.5, 0.4, 0.1), "AD": (0.35, 0.45, 0.2)}
_AGE_RANGE = {"CN": (60, 85), "MCI": (60, 88), "AD": (63, 90)}
# cognitive scores fall with disease severity s (about 0 for CN, 0.5 MCI, 1 AD)
_MMSE_AT_ZERO, _MMSE_SLOPE, _MMSE_NOISE = 29.5, 12.0, 1.0
_CDR_CUTS = (0.25, 0.7, 1.1)
_CDR_NOISE = 0.1


def _cdr_for(severity: float) -> float:
    return float((0.0, 0.5, 1.0, 2.0)[int(np.searchsorted(_CDR_CUTS, severity))])


def sample_record(label: str, rng: np.random.Generator, severity: float) -> ReportRecord:
    """Draw a synthetic ReportRecord for one subject.

    Age and APOE4 follow class-conditional distributions; MMSE and CDR are
    noisy functions of the subject's latent ``severity``, the same quantity
    that sets hippocampal atrophy in the paired volume.
    """
    notes = _NOTES[label]
    mmse = _MMSE_AT_ZERO - _MMSE_SLOPE * severity + _MMSE_NOISE * rng.standard_normal()
    record = ReportRecord(
        age=int(rng.integers(_AGE_RANGE[label][0], _AGE_RANGE[label][1] + 1)),
        sex=str(rng.choice(["F", "M"])),
        education_years=int(rng.integers(8, 21)),
        apoe4_count=int(rng.choice(3, p=_APOE4_PROBS[label])),
        mmse=int(np.clip(round(mmse), 0, 30)),
        cdr=_cdr_for(severity + _CDR_NOISE * rng.standard_normal()),
        note=notes[int(rng.integers(len(notes)))],
    )
    record.validate()
    return record


def record_to_lines(record: ReportRecord) -> str:
    return "".join(f"{k}={v}\n" for k, v in record.__dict__.items())


def record_from_lines(text: str) -> ReportRecord:
    fields = dict(line.split("=", 1) for line in text.splitlines() if line)
    return ReportRecord(
        age=int(fields["age"]),
        sex=fields["sex"],
        education_years=int(fields["education_years"]),
        apoe4_count=int(fields["apoe4_count"]),
        mmse=int(fields["mmse"]),
        cdr=float(fields["cdr"]),
        note=fields.get("note", ""),
    )
