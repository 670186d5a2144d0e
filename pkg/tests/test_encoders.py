import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from brainadapter.encoders import (
    PatchSpec,
    TextEncoder,
    TextEncoderConfig,
    VisionEncoder,
    VisionEncoderConfig,
    patchify,
    unpatchify,
)
from brainadapter.tensor import ShapeError, Tensor


def vision(dims=(4, 8, 8), patch=(2, 4, 4)):
    return VisionEncoder(VisionEncoderConfig(token_dim=8, proj_dim=5, patch=patch), dims)


class TestPatchify:
    def test_grid_and_count(self):
        spec = PatchSpec((4, 16, 16))
        assert spec.grid((4, 32, 32)) == (1, 2, 2)
        assert spec.n_patches((32, 256, 256)) == 2048

    def test_patch_contents_row_major(self):
        z = np.arange(2 * 4 * 4, dtype=float).reshape(1, 2, 4, 4)
        p = patchify(Tensor(z), PatchSpec((2, 2, 2))).data
        assert p.shape == (4, 8)
        np.testing.assert_array_equal(p[1], z[0, :, 0:2, 2:4].ravel())

    def test_indivisible(self):
        with pytest.raises(ShapeError, match="axis 1"):
            patchify(Tensor(np.zeros((1, 4, 6, 8))), PatchSpec((2, 4, 4)))

    @settings(max_examples=30, deadline=None)
    @given(st.integers(1, 3), st.integers(1, 3), st.integers(1, 3), st.integers(0, 999))
    def test_round_trip(self, gd, gh, gw, seed):
        dims = (2 * gd, 3 * gh, 2 * gw)
        z = np.random.default_rng(seed).random((1,) + dims)
        spec = PatchSpec((2, 3, 2))
        back = unpatchify(patchify(Tensor(z), spec), spec, dims).data
        np.testing.assert_array_equal(back, z)


class TestVisionEncoder:
    def test_unit_norm_output(self):
        enc = vision()
        u = enc(Tensor(np.random.default_rng(0).random((3, 1, 4, 8, 8)))).data
        assert u.shape == (3, 5)
        np.testing.assert_allclose(np.linalg.norm(u, axis=1), 1.0, atol=1e-12)

    def test_only_projection_is_trainable(self):
        enc = vision()
        assert {p.name for p in enc.parameters() if p.trainable} == set()
        names = {p.name for p in enc.parameters()}
        assert {"vision.proj.weight", "vision.proj.bias"} <= names

    def test_same_seed_same_weights(self):
        a, b = vision(), vision()
        for pa, pb in zip(a.parameters(), b.parameters()):
            assert pa.data.tobytes() == pb.data.tobytes()

    def test_batch_equals_single(self):
        enc = vision()
        x = np.random.default_rng(1).random((2, 1, 4, 8, 8))
        both = enc(Tensor(x)).data
        np.testing.assert_allclose(enc(Tensor(x[1])).data[0], both[1], atol=1e-14)


class TestTextEncoder:
    cfg = TextEncoderConfig(vocab_size=20, token_dim=8, proj_dim=5)

    def test_unit_norm(self):
        v = TextEncoder(self.cfg)(np.array([[2, 3, 4, 0], [5, 0, 0, 0]])).data
        np.testing.assert_allclose(np.linalg.norm(v, axis=1), 1.0, atol=1e-12)

    def test_padding_ignored(self):
        enc = TextEncoder(self.cfg)
        short = enc(np.array([[2, 3, 4]])).data
        padded = enc(np.array([[2, 3, 4, 0, 0, 0]])).data
        np.testing.assert_allclose(short, padded, atol=1e-14)

    @settings(max_examples=30, deadline=None)
    @given(st.lists(st.integers(1, 19), min_size=2, max_size=10), st.randoms(use_true_random=False))
    def test_permutation_invariant(self, ids, rnd):
        """Mean pooling makes the encoding a function of the token multiset."""
        shuffled = list(ids)
        rnd.shuffle(shuffled)
        enc = TextEncoder(self.cfg)
        np.testing.assert_allclose(enc(np.array([ids])).data, enc(np.array([shuffled])).data, atol=1e-14)

    def test_all_pad_rejected(self):
        with pytest.raises(ValueError, match="all-PAD"):
            TextEncoder(self.cfg)(np.array([[0, 0]]))

    def test_out_of_range_ids(self):
        with pytest.raises(ValueError):
            TextEncoder(self.cfg)(np.array([[25]]))

    @settings(max_examples=30, deadline=None)
    @given(st.lists(st.integers(1, 19), min_size=1, max_size=10))
    def test_any_nonempty_sequence_is_unit_norm(self, ids):
        v = TextEncoder(self.cfg)(np.array([ids])).data
        assert abs(np.linalg.norm(v) - 1.0) < 1e-12
