"""Turn cohorts (in memory or on disk) into model-ready examples.

Both routes see identical numbers: volumes are rounded to their float32
storage precision before resampling and normalization, whether or not they
ever touch the disk.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import List, Sequence, Tuple

import numpy as np

from .report import (
    DEFAULT_MAX_LEN,
    ReportRecord,
    Vocabulary,
    build_vocab,
    record_from_lines,
    record_to_lines,
    render_report,
    tokenize,
)
from .trainer import Example
from .volume import (
    LABEL_INDEX,
    CohortConfig,
    DatasetManifest,
    ManifestEntry,
    VolumeGrid,
    VolumeFormatError,
    VolumeSample,
    load_volume,
    preprocess,
    split_dataset,
    store_volume,
    synthesize_cohort,
)

Pair = Tuple[VolumeSample, ReportRecord]


class DataFileError(ValueError):
    """A dataset file is missing, unreadable or inconsistent with the manifest."""


MANIFEST_NAME = "manifest.tsv"
VOCAB_NAME = "vocab.txt"


@dataclass
class PreparedData:
    train: List[Example]
    test: List[Example]
    vocab: Vocabulary
    manifest: DatasetManifest


def volume_path(subject_id: str) -> str:
    return f"volumes/{subject_id}.vol"


def storage_rounded(sample: VolumeSample) -> VolumeSample:
    voxels = sample.grid.voxels.astype("<f4").astype(np.float64)
    return VolumeSample(VolumeGrid(voxels), sample.subject_id, sample.label, sample.processing_tag)


def synthesize_split(cohort: CohortConfig, train_fraction: float = 0.7) -> Tuple[List[Pair], DatasetManifest]:
    """Raw (unprocessed) pairs plus a manifest carrying the per-class split."""
    pairs = [(storage_rounded(s), r) for s, r in synthesize_cohort(cohort)]
    manifest = DatasetManifest([ManifestEntry(volume_path(s.subject_id), s.label) for s, _ in pairs], cohort.seed)
    return pairs, split_dataset(manifest, train_fraction, cohort.seed)


def training_vocab(pairs: Sequence[Pair], manifest: DatasetManifest, vocab_size: int) -> Vocabulary:
    """Vocabulary from training-split reports only."""
    return build_vocab([render_report(r) for (_, r), e in zip(pairs, manifest.entries) if e.split == "train"], vocab_size)


def to_examples(pairs: Sequence[Pair], vocab: Vocabulary, max_len: int, volume_dims) -> List[Example]:
    out = []
    for s, r in pairs:
        grid = preprocess(s, volume_dims).grid
        out.append(Example(s.subject_id, LABEL_INDEX[s.label], grid.voxels, tokenize(render_report(r), vocab, max_len)))
    return out


def prepare_cohort(
    cohort: CohortConfig,
    volume_dims=(32, 32, 32),
    train_fraction: float = 0.7,
    vocab_size: int = 256,
    max_len: int = DEFAULT_MAX_LEN,
) -> PreparedData:
    """Synthesize, split per class, build the vocabulary, resample + normalize, tokenize."""
    pairs, manifest = synthesize_split(cohort, train_fraction)
    vocab = training_vocab(pairs, manifest, vocab_size)
    split = {e.path: e.split for e in manifest.entries}
    train = [p for p in pairs if split[volume_path(p[0].subject_id)] == "train"]
    test = [p for p in pairs if split[volume_path(p[0].subject_id)] == "test"]
    return PreparedData(
        to_examples(train, vocab, max_len, volume_dims), to_examples(test, vocab, max_len, volume_dims), vocab, manifest
    )


def write_dataset(pairs: Sequence[Pair], manifest: DatasetManifest, vocab: Vocabulary, out_dir) -> None:
    """Volumes (+ .meta and .report sidecars), vocabulary and manifest under ``out_dir``."""
    out_dir = Path(out_dir)
    (out_dir / "volumes").mkdir(parents=True, exist_ok=True)
    for (sample, record), entry in zip(pairs, manifest.entries):
        path = out_dir / entry.path
        store_volume(sample, path)
        path.with_suffix(".report").write_text(record_to_lines(record), encoding="utf-8")
    vocab.save(out_dir / VOCAB_NAME)
    manifest.save(out_dir / MANIFEST_NAME)


def load_split(data_dir, split: str, vocab: Vocabulary, max_len: int, volume_dims) -> List[Example]:
    """Read every manifest entry of ``split`` (volume file + report sidecar) from ``data_dir``."""
    data_dir = Path(data_dir)
    manifest = DatasetManifest.load(data_dir / MANIFEST_NAME)
    pairs = []
    for entry in manifest.subset(split):
        path = data_dir / entry.path
        try:
            sample = load_volume(path)
            report = record_from_lines(path.with_suffix(".report").read_text(encoding="utf-8"))
        except VolumeFormatError:
            raise
        except (ValueError, KeyError, OSError) as exc:
            raise DataFileError(f"{path}: {exc!s}") from exc
        if sample.label != entry.label:
            raise DataFileError(f"{path}: label {sample.label} disagrees with manifest label {entry.label}")
        pairs.append((sample, report))
    return to_examples(pairs, vocab, max_len, volume_dims)
