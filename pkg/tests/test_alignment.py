import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from brainadapter import ops
from brainadapter.alignment import (
    ClassificationHead,
    HeadConfig,
    LossWeights,
    Temperature,
    contrastive_loss,
    cosine_similarity,
    cross_entropy,
    joint_loss,
    similarity_matrix,
)
from brainadapter.gradcheck import grad_check
from brainadapter.tensor import ShapeError, Tensor


def random_batch(seed: int, n: int, d: int = 6):
    rng = np.random.default_rng(seed)
    return rng.standard_normal((n, d)), rng.standard_normal((n, d))


def orthonormal_closed_form(n: int, tau: float) -> float:
    """Paired rows e_i / e_i: the positive scores 1/tau, every negative 0."""
    return math.log(1.0 + (n - 1) * math.exp(-1.0 / tau))


class TestCosine:
    def test_parallel_orthogonal_opposite(self):
        assert cosine_similarity([1, 2, 3], [2, 4, 6]) == pytest.approx(1.0)
        assert cosine_similarity([1, 0], [0, 5]) == 0.0
        assert cosine_similarity([1, 1], [-3, -3]) == pytest.approx(-1.0)

    def test_zero_vector_rejected(self):
        with pytest.raises(ValueError):
            cosine_similarity([0, 0], [1, 0])

    def test_matrix_agrees_with_pairwise(self):
        U, V = random_batch(3, 4)
        S = similarity_matrix(Tensor(U), Tensor(V)).data
        for i in range(4):
            for k in range(4):
                assert S[i, k] == pytest.approx(cosine_similarity(U[i], V[k]), abs=1e-14)


class TestContrastiveClosedForms:
    def test_single_pair_is_exactly_zero(self):
        U, V = random_batch(0, 1)
        assert contrastive_loss(Tensor(U), Tensor(V), 0.07).total.data == 0.0

    @pytest.mark.parametrize("n", [2, 5, 9])
    def test_equal_similarity_gives_log_n(self, n):
        U = np.ones((n, 4))
        assert contrastive_loss(Tensor(U), Tensor(U.copy()), 0.3).total.data == pytest.approx(math.log(n), abs=1e-9)

    @pytest.mark.parametrize("n", [2, 4, 8])
    @pytest.mark.parametrize("tau", [0.07, 1.0, 10.0])
    def test_orthonormal_batch(self, n, tau):
        E = np.eye(n)
        got = float(contrastive_loss(Tensor(E), Tensor(E.copy()), Temperature(tau)).total.data)
        assert abs(got - orthonormal_closed_form(n, tau)) < 1e-9

    @pytest.mark.parametrize("seed", range(5))
    def test_huge_temperature_approaches_log_n(self, seed):
        U, V = random_batch(seed, 6)
        got = float(contrastive_loss(Tensor(U), Tensor(V), Temperature(1e3)).total.data)
        assert abs(got - math.log(6)) < 1e-3

    def test_per_direction_terms_average_to_total(self):
        U, V = random_batch(1, 5)
        terms = contrastive_loss(Tensor(U), Tensor(V), 0.5)
        assert terms.image_to_text.shape == (5,)
        expected = (terms.image_to_text.data.sum() + terms.text_to_image.data.sum()) / 10
        assert terms.total.data == pytest.approx(expected, abs=1e-14)

    def test_mismatched_shapes_rejected(self):
        with pytest.raises(ShapeError):
            contrastive_loss(Tensor(np.ones((3, 4))), Tensor(np.ones((2, 4))), 1.0)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 9), st.floats(0.01, 50.0))
def test_modality_swap_is_bit_exact(seed, n, tau):
    U, V = random_batch(seed, n)
    a = contrastive_loss(Tensor(U), Tensor(V), tau).total.data
    b = contrastive_loss(Tensor(V), Tensor(U), tau).total.data
    assert a.tobytes() == b.tobytes()


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.integers(2, 8), st.floats(0.05, 20.0))
def test_loss_bounded_by_log_n_plus_two_over_tau(seed, n, tau):
    """Each row term is at most ln N + 2/tau since cosines lie in [-1, 1]."""
    U, V = random_batch(seed, n)
    total = float(contrastive_loss(Tensor(U), Tensor(V), tau).total.data)
    assert 0.0 <= total <= math.log(n) + 2.0 / tau + 1e-12


class TestTemperature:
    def test_init_and_clamp(self):
        assert Temperature().value == pytest.approx(0.07)
        t = Temperature(1.0)
        t.param.tensor.data[...] = 50.0
        assert t.value == 1e3
        assert float(t.inverse().data) == pytest.approx(1e-3)

    def test_nonpositive_rejected(self):
        with pytest.raises(ValueError):
            Temperature(0.0)

    def test_gradient_of_loss_in_raw_temperature(self):
        U, V = random_batch(7, 4)

        def f(raw):
            t = Temperature(1.0)
            t.param.tensor = raw
            return contrastive_loss(Tensor(U), Tensor(V), t).total

        assert grad_check(f, np.array(math.log(0.5))) < 1e-6


class TestCrossEntropy:
    def test_uniform_logits(self):
        assert float(cross_entropy(Tensor(np.zeros(3)), 1).data) == pytest.approx(math.log(3))

    def test_gradient_is_softmax_minus_onehot(self):
        z = np.array([0.3, -1.2, 2.0])
        t = Tensor(z, requires_grad=True)
        cross_entropy(t, 2).backward()
        p = np.exp(z) / np.exp(z).sum()
        np.testing.assert_allclose(t.grad, p - np.eye(3)[2], atol=1e-15)

    def test_batch_mean(self):
        z = np.random.default_rng(0).standard_normal((4, 3))
        labels = [0, 2, 1, 1]
        each = [float(cross_entropy(Tensor(z[i]), labels[i]).data) for i in range(4)]
        assert float(cross_entropy(Tensor(z), labels).data) == pytest.approx(np.mean(each), abs=1e-14)

    def test_label_out_of_range(self):
        with pytest.raises(ValueError):
            cross_entropy(Tensor(np.zeros((1, 3))), [3])


class TestJointLoss:
    def test_unit_weights_add(self):
        assert float(joint_loss(0.5, 0.7, LossWeights()).data) == pytest.approx(1.2, abs=1e-15)

    def test_weights_positive_and_ce_monotone(self):
        w = LossWeights()
        w.raw2.tensor.data[...] = -10.0
        lo, hi = joint_loss(0.5, 0.7, w), joint_loss(0.5, 0.8, w)
        assert w.values()[1] > 0
        assert float(hi.data) > float(lo.data)

    def test_nonfinite_rejected(self):
        with pytest.raises(ValueError):
            joint_loss(float("nan"), 0.1, LossWeights())

    def test_gradient_reaches_raw_weights(self):
        w = LossWeights(0.5, 2.0)
        joint_loss(0.4, 0.9, w).backward()
        sig = lambda x: 1.0 / (1.0 + math.exp(-x))
        assert w.raw1.grad == pytest.approx(0.4 * sig(float(w.raw1.data)))
        assert w.raw2.grad == pytest.approx(0.9 * sig(float(w.raw2.data)))


class TestHead:
    def test_single_and_batched_agree(self):
        head = ClassificationHead(HeadConfig(embed_dim=4, hidden=5), np.random.default_rng(0))
        U, V = random_batch(2, 3, d=4)
        batched = head(Tensor(U), Tensor(V)).data
        assert batched.shape == (3, 3)
        np.testing.assert_allclose(head(Tensor(U[1]), Tensor(V[1])).data, batched[1], atol=1e-15)

    def test_wrong_width_rejected(self):
        head = ClassificationHead(HeadConfig(embed_dim=4), np.random.default_rng(0))
        with pytest.raises(ShapeError):
            head(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 4))))

    def test_gradient_wrt_embedding(self):
        head = ClassificationHead(HeadConfig(embed_dim=3, hidden=4), np.random.default_rng(1))
        v = Tensor(np.array([[0.2, -0.1, 0.4]]))
        u0 = np.array([[0.5, -0.3, 0.8]])
        assert grad_check(lambda u: ops.sum(head(u, v)), u0) < 1e-6
