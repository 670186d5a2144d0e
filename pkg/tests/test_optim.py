import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from brainadapter.optim import AdamW, OptimizerState, adamw_step, group_lr
from brainadapter.tensor import Parameter


def step_with(p: Parameter, grad, state: OptimizerState):
    p.tensor.grad = np.asarray(grad, dtype=np.float64)
    adamw_step([p], state)


class TestAdamW:
    def test_hand_stepped_first_update(self):
        """m_hat = v_hat = g at step 1, so the move is lr * g / (|g| + eps)."""
        p = Parameter("w", 0.0)
        step_with(p, 1.0, OptimizerState(lambda _: 0.1, weight_decay=0.0))
        assert p.data == pytest.approx(-0.1 / (1 + 1e-8), abs=1e-15)
        assert abs(p.data + 0.1) < 1e-6

    def test_pure_decay_is_exact(self):
        lr, wd = 0.05, 0.3
        p = Parameter("w", [1.5, -2.0])
        state = OptimizerState(lambda _: lr, weight_decay=wd)
        expected = p.data.copy()
        for _ in range(7):
            step_with(p, np.zeros(2), state)
            expected = expected * (1.0 - lr * wd)
            np.testing.assert_array_equal(p.data, expected)

    def test_step_counter(self):
        p = Parameter("w", [1.0])
        state = OptimizerState(lambda _: 0.01)
        for t in range(1, 4):
            step_with(p, [0.5], state)
            assert state.step == t
        assert state.m["w"].shape == state.v["w"].shape == (1,)

    def test_frozen_parameters_untouched(self):
        frozen = Parameter("f", [3.0], trainable=False)
        frozen.tensor.grad = np.array([10.0])
        live = Parameter("w", [1.0])
        live.tensor.grad = np.array([1.0])
        adamw_step([frozen, live], OptimizerState(lambda _: 0.1))
        assert frozen.data.tolist() == [3.0]
        assert live.data[0] != 1.0

    def test_missing_gradient_rejected(self):
        with pytest.raises(RuntimeError, match="w"):
            adamw_step([Parameter("w", [1.0])], OptimizerState(lambda _: 0.1))

    def test_wrapper_matches_function(self):
        a, b = Parameter("w", [0.3, -0.2]), Parameter("w", [0.3, -0.2])
        opt = AdamW([a], lr=0.02, weight_decay=0.1)
        state = OptimizerState(lambda _: 0.02, weight_decay=0.1)
        for g in ([1.0, -2.0], [0.5, 0.5], [-3.0, 0.1]):
            a.tensor.grad = np.array(g)
            opt.step()
            step_with(b, g, state)
        np.testing.assert_array_equal(a.data, b.data)


class TestGroups:
    def test_three_groups(self):
        lr_for = group_lr(1e-3, 1e-4, 1e-2)
        assert lr_for("adapter.stage0.weight") == 1e-3
        assert lr_for("head.fc1.weight") == 1e-2
        assert lr_for("vision.proj.weight") == 1e-4
        assert lr_for("text.proj.bias") == 1e-4
        assert lr_for("temperature") == 1e-4

    def test_head_defaults_to_other_group(self):
        lr_for = group_lr(1.0, 2.0)
        assert lr_for("head.fc1.weight") == 2.0
        assert lr_for("adapter.stage0.bias") == 1.0


@settings(max_examples=50, deadline=None)
@given(st.floats(-5, 5), st.floats(1e-4, 0.5), st.floats(-5, 5).filter(lambda g: abs(g) > 1e-3))
def test_first_step_moves_by_lr_against_gradient(p0, lr, g):
    p = Parameter("w", p0)
    step_with(p, g, OptimizerState(lambda _: lr, weight_decay=0.0))
    assert p.data - p0 == pytest.approx(-lr * np.sign(g), rel=1e-6)
