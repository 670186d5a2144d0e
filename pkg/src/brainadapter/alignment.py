"""Contrastive image/text alignment, the classification head and the joint loss."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, List, NamedTuple

import numpy as np

from . import ops
from .tensor import Parameter, ShapeError, Tensor, as_tensor

N_CLASSES = 3
TAU_MIN, TAU_MAX = 1e-3, 1e3
DEFAULT_TAU = 0.07


def cosine_similarity(u, v) -> float:
    u = np.asarray(u.data if isinstance(u, Tensor) else u, dtype=np.float64).reshape(-1)
    v = np.asarray(v.data if isinstance(v, Tensor) else v, dtype=np.float64).reshape(-1)
    if u.shape != v.shape:
        raise ShapeError(f"cosine_similarity: shapes differ {u.shape} vs {v.shape}")
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0 or nv == 0:
        raise ValueError("cosine similarity is undefined for a zero vector")
    return float(np.clip(u @ v / (nu * nv), -1.0, 1.0))


def similarity_matrix(U: Tensor, V: Tensor) -> Tensor:
    """S[i, k] = cos(u_i, v_k).

    Built as an elementwise product summed over the feature axis rather than
    a GEMM, so S(V, U) is bit-for-bit the transpose of S(U, V).
    """
    U, V = ops.l2_normalize(U), ops.l2_normalize(V)
    n, d = U.shape
    prod = ops.mul(ops.reshape(U, (n, 1, d)), ops.reshape(V, (1, V.shape[0], d)))
    return ops.sum(prod, axis=-1)


class Temperature:
    """tau = clip(exp(raw)) in [1e-3, 1e3]."""

    def __init__(self, tau: float = DEFAULT_TAU, trainable: bool = True, name: str = "temperature"):
        if tau <= 0:
            raise ValueError("temperature must be positive")
        self.param = Parameter(name, math.log(tau), trainable=trainable)

    @property
    def value(self) -> float:
        return float(np.clip(np.exp(self.param.data), TAU_MIN, TAU_MAX))

    def inverse(self) -> Tensor:
        """1 / tau as a differentiable scalar."""
        raw = ops.clip(self.param.tensor, math.log(TAU_MIN), math.log(TAU_MAX))
        return ops.exp(ops.mul(raw, -1.0))


class ContrastiveTerms(NamedTuple):
    total: Tensor
    image_to_text: Tensor  # per-pair, length N
    text_to_image: Tensor


def contrastive_loss(U: Tensor, V: Tensor, temp) -> ContrastiveTerms:
    """Symmetric InfoNCE over a batch of paired rows of U and V.

    ``temp`` is a :class:`Temperature` or a positive float.
    """
    U, V = as_tensor(U), as_tensor(V)
    if U.ndim != 2 or U.shape != V.shape:
        raise ShapeError(f"U and V must be matching N x d matrices, got {U.shape} and {V.shape}")
    n = U.shape[0]
    if n == 0:
        raise ValueError("contrastive loss needs at least one pair")
    inv_tau = temp.inverse() if isinstance(temp, Temperature) else 1.0 / float(temp)
    logits = ops.mul(similarity_matrix(U, V), inv_tau)
    eye = np.eye(n)
    i2t = ops.mul(ops.sum(ops.mul(ops.log_softmax_rows(logits), eye), axis=1), -1.0)
    t2i = ops.mul(ops.sum(ops.mul(ops.log_softmax_rows(ops.transpose(logits)), eye), axis=1), -1.0)
    total = ops.mul(ops.add(ops.sum(i2t), ops.sum(t2i)), 1.0 / (2 * n))
    return ContrastiveTerms(total, i2t, t2i)


def cross_entropy(logits: Tensor, labels) -> Tensor:
    """Mean of -log softmax(logits)[label] over rows; a 1-D logits vector is one row."""
    logits = as_tensor(logits)
    labels = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    if logits.ndim == 1:
        logits = ops.reshape(logits, (1, logits.shape[0]))
    n, c = logits.shape
    if labels.shape != (n,):
        raise ShapeError(f"need one label per row, got {labels.shape} for logits {logits.shape}")
    if labels.min() < 0 or labels.max() >= c:
        raise ValueError(f"labels must lie in [0, {c}), got {labels.tolist()}")
    onehot = np.eye(c)[labels]
    picked = ops.sum(ops.mul(ops.log_softmax_rows(logits), onehot))
    return ops.mul(picked, -1.0 / n)


class LossWeights:
    """lambda_k = softplus(raw_k); initialized so both weights equal 1."""

    def __init__(self, lambda1: float = 1.0, lambda2: float = 1.0, trainable: bool = True):
        def inv_softplus(y):
            return y + math.log(-math.expm1(-y))

        self.raw1 = Parameter("loss_weights.raw1", inv_softplus(lambda1), trainable=trainable)
        self.raw2 = Parameter("loss_weights.raw2", inv_softplus(lambda2), trainable=trainable)

    def lambdas(self):
        return ops.softplus(self.raw1.tensor), ops.softplus(self.raw2.tensor)

    def values(self):
        return tuple(float(np.logaddexp(0.0, p.data)) for p in (self.raw1, self.raw2))

    def parameters(self) -> List[Parameter]:
        return [self.raw1, self.raw2]


def joint_loss(contrastive, ce, weights: LossWeights) -> Tensor:
    contrastive, ce = as_tensor(contrastive), as_tensor(ce)
    if not (np.isfinite(contrastive.data).all() and np.isfinite(ce.data).all()):
        raise ValueError("joint_loss inputs must be finite")
    lam1, lam2 = weights.lambdas()
    return ops.add(ops.mul(lam1, contrastive), ops.mul(lam2, ce))


@dataclass
class HeadConfig:
    embed_dim: int = 16
    hidden: int = 32
    n_classes: int = N_CLASSES


class ClassificationHead:
    """concat(u, v) -> linear -> ReLU -> linear -> class logits."""

    def __init__(self, config: HeadConfig, rng: np.random.Generator):
        self.config = config
        d2, h, c = 2 * config.embed_dim, config.hidden, config.n_classes
        b1, b2 = 1.0 / math.sqrt(d2), 1.0 / math.sqrt(h)
        self.params: Dict[str, Parameter] = {
            "head.fc1.weight": Parameter("head.fc1.weight", rng.uniform(-b1, b1, size=(d2, h))),
            "head.fc1.bias": Parameter("head.fc1.bias", np.zeros(h)),
            "head.fc2.weight": Parameter("head.fc2.weight", rng.uniform(-b2, b2, size=(h, c))),
            "head.fc2.bias": Parameter("head.fc2.bias", np.zeros(c)),
        }

    def parameters(self) -> List[Parameter]:
        return list(self.params.values())

    def __call__(self, u: Tensor, v: Tensor) -> Tensor:
        return classification_head(u, v, self)


def classification_head(u, v, head: ClassificationHead) -> Tensor:
    u, v = as_tensor(u), as_tensor(v)
    single = u.ndim == 1
    if single:
        u, v = ops.reshape(u, (1, u.shape[0])), ops.reshape(v, (1, v.shape[0]))
    d = head.config.embed_dim
    if u.shape[-1] != d or v.shape[-1] != d or u.shape[0] != v.shape[0]:
        raise ShapeError(f"head expects two N x {d} inputs, got {u.shape} and {v.shape}")
    p = head.params
    h = ops.relu(ops.linear(ops.concat([u, v], axis=1), p["head.fc1.weight"].tensor, p["head.fc1.bias"].tensor))
    logits = ops.linear(h, p["head.fc2.weight"].tensor, p["head.fc2.bias"].tensor)
    return ops.reshape(logits, (logits.shape[1],)) if single else logits
