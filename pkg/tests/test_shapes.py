import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from brainadapter.adapter import AdapterConfig, BrainAdapter
from brainadapter.shapes import desk_trace, fmt, full_scale_trace, trace_shapes
from brainadapter.tensor import ShapeError, Tensor


def stage_lines(trace, stage):
    return [text for name, text in trace.stages if name == stage]


class TestFullScale:
    def test_adapter_and_patch_count(self):
        trace = full_scale_trace(AdapterConfig(), proj_dim=16)
        assert stage_lines(trace, "adapter") == ["(256,256,256) -> (32,256,256)"]
        # 32/4 * 256/16 * 256/16
        assert trace.n_patches == 8 * 16 * 16 == 2048
        assert "2048 patches" in stage_lines(trace, "patchify")[0]

    def test_token_count_discrepancy_flagged(self):
        text = full_scale_trace(AdapterConfig(), proj_dim=16).to_text()
        assert "note:" in text
        assert "2048" in text and "256 tokens" in text

    def test_no_note_when_counts_agree(self):
        """A 64x reduction lands the full-scale grid on 4*16*16 / 8 = 256 patches."""
        cfg = AdapterConfig(depth_reduction=64, stage_channels=(4, 4, 4, 4, 4, 1))
        trace = full_scale_trace(cfg, proj_dim=16)
        assert trace.n_patches == 256
        assert trace.notes == []


class TestDeskScale:
    def test_default_desk_trace(self):
        trace = desk_trace(AdapterConfig(), (4, 16, 16), 32, 16)
        assert stage_lines(trace, "adapter") == ["(32,32,32) -> (4,32,32)"]
        assert trace.n_patches == 4
        assert stage_lines(trace, "summary") == ["(32,32,32) -> (4,32,32) -> 4 patches"]
        assert trace.lines()[0] == "[desk scale]"

    def test_indivisible_patch_names_stage(self):
        with pytest.raises(ShapeError, match="stage patchify"):
            desk_trace(AdapterConfig(), (3, 16, 16), 32, 16)

    def test_indivisible_depth_names_stage(self):
        with pytest.raises(ShapeError, match="stage adapter"):
            trace_shapes(AdapterConfig(), (4, 16, 16), 32, 16, "x", input_dims=(36, 32, 32))

    def test_fmt(self):
        assert fmt((1, 22, 333)) == "(1,22,333)"


@settings(max_examples=25, deadline=None)
@given(st.sampled_from([1, 2, 4, 8]), st.integers(1, 4), st.integers(2, 6), st.integers(2, 6))
def test_symbolic_trace_matches_real_forward(r, depth_mult, h, w):
    """The calculator's adapter output equals the shape of an actual forward pass."""
    n_stages = int(np.log2(r))
    cfg = AdapterConfig(input_dims=(r * depth_mult, h, w), depth_reduction=r, stage_channels=(2,) * max(0, n_stages - 1) + (1,) * min(1, n_stages))
    out = BrainAdapter(cfg, np.random.default_rng(0))(Tensor(np.zeros((1, 1) + cfg.input_dims)))
    assert out.shape[-3:] == cfg.output_dims() == (depth_mult, h, w)
