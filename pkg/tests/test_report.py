import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from brainadapter.report import (
    CDR_VALUES,
    PAD,
    UNK,
    ReportRecord,
    Vocabulary,
    build_vocab,
    record_from_lines,
    record_to_lines,
    render_report,
    sample_record,
    split_words,
    tokenize,
)
from brainadapter.volume import LABELS, SEVERITY_CENTER

EXAMPLE_NOTE = "Decline in condition likely due to comorbid worsening of health."

records = st.builds(
    ReportRecord,
    age=st.integers(0, 110),
    sex=st.sampled_from(["F", "M"]),
    education_years=st.integers(0, 30),
    apoe4_count=st.integers(0, 2),
    mmse=st.integers(0, 30),
    cdr=st.sampled_from(CDR_VALUES),
    note=st.sampled_from(["", EXAMPLE_NOTE, "Stable memory on follow-up."]),
)


class TestRender:
    def test_worked_example(self):
        text = render_report(ReportRecord(71, "F", 16, 1, 24, 0.5, EXAMPLE_NOTE))
        assert text == (
            "Age: 71. Sex: F. Education: 16 years. APOE4 alleles: 1. MMSE: 24. CDR: 0.5. "
            "Notes: Decline in condition likely due to comorbid worsening of health."
        )

    def test_empty_note(self):
        assert render_report(ReportRecord(60, "M", 12, 0, 29, 0.0)).endswith("Notes: none")

    @pytest.mark.parametrize(
        "kwargs",
        [dict(mmse=31), dict(apoe4_count=3), dict(cdr=0.7), dict(age=-1)],
    )
    def test_invalid_record(self, kwargs):
        base = dict(age=70, sex="F", education_years=12, apoe4_count=0, mmse=28, cdr=0.0)
        base.update(kwargs)
        with pytest.raises(ValueError):
            render_report(ReportRecord(**base))

    @settings(max_examples=100, deadline=None)
    @given(records, records)
    def test_injective(self, a, b):
        if a != b:
            assert render_report(a) != render_report(b)

    @settings(max_examples=50, deadline=None)
    @given(records)
    def test_sidecar_round_trip(self, r):
        assert record_from_lines(record_to_lines(r)) == r


class TestVocab:
    def test_frequency_then_lexicographic(self):
        v = build_vocab(["a b", "a c"], 5)
        assert v.itos == ["<pad>", "<unk>", "a", "b", "c"]
        assert v["a"] == 2

    def test_max_size_three(self):
        assert build_vocab(["a b", "a c"], 3).itos[2:] == ["a"]

    def test_errors(self):
        with pytest.raises(ValueError):
            build_vocab([], 5)
        with pytest.raises(ValueError):
            build_vocab(["a"], 2)

    def test_decimal_tokens_stay_whole(self):
        assert split_words("CDR: 0.5. Age: 7.") == ["cdr", ":", "0.5", ".", "age", ":", "7", "."]

    def test_save_load(self, tmp_path):
        v = build_vocab(["x y z", "y"], 10)
        v.save(tmp_path / "vocab.txt")
        assert Vocabulary.load(tmp_path / "vocab.txt") == v


class TestTokenize:
    def test_lookup_and_padding(self):
        v = build_vocab(["a b", "a c"], 5)
        assert tokenize("a b", v, 4).tolist() == [v["a"], v["b"], PAD, PAD]

    def test_unknown(self):
        v = build_vocab(["a b"], 5)
        assert tokenize("zebra", v, 2).tolist() == [UNK, PAD]

    def test_truncation(self):
        v = build_vocab(["a b"], 5)
        assert tokenize("a b", v, 1).tolist() == [v["a"]]

    def test_generator_corpus_has_no_unknowns(self):
        rng = np.random.default_rng(0)
        texts = [render_report(sample_record(lab, rng, SEVERITY_CENTER[lab])) for lab in LABELS for _ in range(40)]
        v = build_vocab(texts, 10_000)
        for t in texts:
            ids = tokenize(t, v, 64)
            assert UNK not in ids.tolist()
            assert ids.shape == (64,)


class TestGenerator:
    def test_mmse_falls_with_severity(self):
        rng = np.random.default_rng(1)
        mild = np.mean([sample_record("CN", rng, 0.0).mmse for _ in range(200)])
        severe = np.mean([sample_record("AD", rng, 1.0).mmse for _ in range(200)])
        assert severe < mild - 8

    def test_records_valid(self):
        rng = np.random.default_rng(2)
        for s in np.linspace(0.0, 2.5, 30):
            sample_record("AD", rng, float(s)).validate()
