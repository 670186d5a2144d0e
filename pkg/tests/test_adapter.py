import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from brainadapter import ops
from brainadapter.adapter import AdapterConfig, BrainAdapter, adapter_forward, count_trainable_params
from brainadapter.tensor import ShapeError, Tensor


def small_config(**kw):
    base = dict(input_dims=(8, 6, 6), depth_reduction=4, stage_channels=(3, 1))
    base.update(kw)
    return AdapterConfig(**base)


class TestShapes:
    def test_default_desk_output(self):
        assert AdapterConfig().output_dims() == (4, 32, 32)

    def test_full_scale_output(self):
        assert AdapterConfig().output_dims((256, 256, 256)) == (32, 256, 256)

    def test_forward_shape(self):
        ad = BrainAdapter(small_config(), np.random.default_rng(0))
        x = Tensor(np.random.default_rng(1).random((2, 1, 8, 6, 6)))
        assert adapter_forward(x, ad).shape == (2, 1, 2, 6, 6)

    def test_wrong_input_rejected(self):
        ad = BrainAdapter(small_config(), np.random.default_rng(0))
        with pytest.raises(ShapeError):
            adapter_forward(Tensor(np.zeros((1, 1, 8, 6, 5))), ad)

    @pytest.mark.parametrize(
        "kw",
        [dict(depth_reduction=3, stage_channels=(1,)), dict(stage_channels=(1,)), dict(input_dims=(6, 6, 6)), dict(kernel=(2, 3, 3))],
    )
    def test_invalid_config(self, kw):
        with pytest.raises(ValueError):
            small_config(**kw).validate()


class TestParameters:
    def test_names_and_count(self):
        cfg = AdapterConfig()
        ad = BrainAdapter(cfg, np.random.default_rng(0))
        assert all(p.name.startswith("adapter.") for p in ad.parameters())
        # 27-tap kernels: stages 1->8, 8->8, 8->1, residual 1->1 twice, each with a bias per output channel
        expected = (8 * 27 + 8) + (8 * 8 * 27 + 8) + (8 * 27 + 1) + 2 * (27 + 1)
        assert count_trainable_params(cfg) == expected == sum(p.data.size for p in ad.parameters())

    def test_zero_residual_is_identity_at_init(self):
        """With conv2 zeroed the residual block returns its input unchanged."""
        ad = BrainAdapter(small_config(), np.random.default_rng(0))
        z = Tensor(np.random.default_rng(2).random((1, 1, 2, 6, 6)))
        np.testing.assert_array_equal(ad.residual(z).data, z.data)

    def test_seeded_init(self):
        a = BrainAdapter(small_config(), np.random.default_rng([3, 1]))
        b = BrainAdapter(small_config(), np.random.default_rng([3, 1]))
        for pa, pb in zip(a.parameters(), b.parameters()):
            assert pa.data.tobytes() == pb.data.tobytes()

    def test_activation_scale_preserved(self):
        """He-style init keeps the output within an order of magnitude of the input."""
        ad = BrainAdapter(AdapterConfig(), np.random.default_rng(0))
        x = np.random.default_rng(1).random((1, 1, 32, 32, 32))
        z = adapter_forward(Tensor(x), ad).data
        assert 0.1 < z.mean() / x.mean() < 10


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_adapter_weights_receive_gradient(seed):
    rng = np.random.default_rng(seed)
    ad = BrainAdapter(small_config(), rng)
    ad.params["adapter.res.conv2.weight"].data[...] = rng.normal(0, 0.2, size=(1, 1, 3, 3, 3))
    out = adapter_forward(Tensor(rng.random((1, 1, 8, 6, 6))), ad)
    ops.sum(ops.mul(out, out)).backward()
    assert np.abs(ad.params["adapter.stage0.weight"].grad).sum() > 0
    assert np.abs(ad.params["adapter.res.conv2.weight"].grad).sum() > 0
