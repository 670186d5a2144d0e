"""AdamW with decoupled weight decay and per-group learning rates."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, Optional, Tuple

import numpy as np

from .tensor import Parameter


def group_lr(lr_adapter: float, lr_other: float, lr_head: Optional[float] = None) -> Callable[[str], float]:
    """``adapter.*`` -> lr_adapter, ``head.*`` -> lr_head, everything else -> lr_other.

    ``lr_head=None`` puts the head in the ``lr_other`` group.
    """

    def lr_for(name: str) -> float:
        if name.startswith("adapter."):
            return lr_adapter
        if name.startswith("head.") and lr_head is not None:
            return lr_head
        return lr_other

    return lr_for


@dataclass
class OptimizerState:
    lr_for: Callable[[str], float]
    weight_decay: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)


def adamw_step(params: Iterable[Parameter], state: OptimizerState) -> None:
    """One AdamW update of every trainable parameter; frozen ones are skipped."""
    trainable = [p for p in params if p.trainable]
    missing = [p.name for p in trainable if p.grad is None]
    if missing:
        raise RuntimeError(f"trainable parameters without a gradient: {missing}")
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    c1, c2 = 1.0 - b1**t, 1.0 - b2**t
    for p in trainable:
        g = p.grad
        m = state.m.get(p.name)
        if m is None:
            m = state.m[p.name] = np.zeros_like(p.data)
            state.v[p.name] = np.zeros_like(p.data)
        v = state.v[p.name]
        if m.shape != p.data.shape:
            raise ValueError(f"optimizer state for {p.name} has shape {m.shape}, parameter {p.data.shape}")
        lr = state.lr_for(p.name)
        data = p.data
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        if state.weight_decay:
            data *= 1.0 - lr * state.weight_decay
        data -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)


class AdamW:
    def __init__(
        self,
        params: Iterable[Parameter],
        lr: float = 1e-3,
        weight_decay: float = 0.01,
        lr_for: Optional[Callable[[str], float]] = None,
        betas=(0.9, 0.999),
        eps: float = 1e-8,
    ):
        self.params = list(params)
        self.state = OptimizerState(
            lr_for or (lambda _name: lr), weight_decay, betas[0], betas[1], eps
        )

    def step(self) -> None:
        adamw_step(self.params, self.state)

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()
