"""Central-difference verification of analytic gradients."""

from __future__ import annotations

from typing import Callable

import numpy as np

from .tensor import ShapeError, Tensor, backward


def numerical_gradient(f: Callable[[Tensor], Tensor], point: np.ndarray, step: float) -> np.ndarray:
    base = np.array(point, dtype=np.float64)
    grad = np.zeros_like(base)
    flat = base.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        f_plus = _scalar(f(Tensor(base)))
        flat[i] = orig - step
        f_minus = _scalar(f(Tensor(base)))
        flat[i] = orig
        grad.reshape(-1)[i] = (f_plus - f_minus) / (2.0 * step)
    return grad


def _scalar(y: Tensor) -> float:
    if y.size != 1:
        raise ShapeError(f"grad_check needs a scalar-valued function, got shape {y.shape}")
    return float(y.data.reshape(-1)[0])


def analytic_gradient(f: Callable[[Tensor], Tensor], point: np.ndarray) -> np.ndarray:
    x = Tensor(point, requires_grad=True)
    y = f(x)
    _scalar(y)
    backward(y)
    return np.zeros_like(x.data) if x.grad is None else x.grad


def grad_check(f: Callable[[Tensor], Tensor], point, step: float = 1e-4) -> float:
    """Max over coordinates of |analytic - numeric| / max(1, |analytic|, |numeric|)."""
    if step <= 0:
        raise ValueError("step must be positive")
    point = point.data if isinstance(point, Tensor) else np.asarray(point, dtype=np.float64)
    analytic = analytic_gradient(f, point)
    numeric = numerical_gradient(f, point, step)
    return relative_error(analytic, numeric)


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    denom = np.maximum(1.0, np.maximum(np.abs(analytic), np.abs(numeric)))
    return float(np.max(np.abs(analytic - numeric) / denom)) if analytic.size else 0.0


def grad_check_parameters(loss_fn: Callable[[], Tensor], params, step: float = 1e-3) -> float:
    """Same metric as :func:`grad_check`, taken jointly over model parameters.

    ``loss_fn`` rebuilds the graph from the current parameter values. Each
    parameter is perturbed in place and restored exactly afterwards.
    """
    params = list(params)
    for p in params:
        p.zero_grad()
    backward(loss_fn())
    worst = 0.0
    for p in params:
        analytic = np.zeros_like(p.data) if p.grad is None else p.grad.copy()
        numeric = np.zeros_like(p.data)
        flat = p.data.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            f_plus = _scalar(loss_fn())
            flat[i] = orig - step
            f_minus = _scalar(loss_fn())
            flat[i] = orig
            numeric.reshape(-1)[i] = (f_plus - f_minus) / (2.0 * step)
        worst = max(worst, relative_error(analytic, numeric))
    return worst
