"""Reverse-mode automatic differentiation over float64 numpy arrays.

Every primitive is a :class:`Function` subclass. Applying one records the
function on its output tensor; :func:`backward` rebuilds the graph into a
topologically ordered :class:`ComputationTape` and replays the backward
rules in reverse.

Frozen leaves (``requires_grad=False``) never receive a gradient, but an
operation whose *other* input requires a gradient still propagates through
them.
"""

from __future__ import annotations

import threading
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple, Union

import numpy as np

ArrayLike = Union[np.ndarray, float, int, Sequence]


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible."""


class NaNError(FloatingPointError):
    """Raised as soon as a primitive produces a NaN."""


_grad_mode = threading.local()


def is_grad_enabled() -> bool:
    return getattr(_grad_mode, "enabled", True)


@contextmanager
def no_grad():
    """Forward passes inside this block record nothing for backward."""
    prev = is_grad_enabled()
    _grad_mode.enabled = False
    try:
        yield
    finally:
        _grad_mode.enabled = prev


def _check_finite(arr: np.ndarray, where: str) -> None:
    if np.isnan(arr).any():
        raise NaNError(f"NaN produced by {where}")


class Tensor:
    """n-dimensional float64 array with an optional accumulated gradient."""

    __slots__ = ("data", "requires_grad", "grad", "_fn", "name")

    def __init__(self, data: ArrayLike, requires_grad: bool = False, name: Optional[str] = None):
        self.data = np.array(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self._fn: Optional[Function] = None
        self.name = name

    @classmethod
    def _wrap(cls, data: np.ndarray, requires_grad: bool, fn: Optional["Function"]) -> "Tensor":
        t = cls.__new__(cls)
        t.data = data
        t.requires_grad = requires_grad
        t.grad = None
        t._fn = fn if requires_grad else None
        t.name = None
        return t

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def is_leaf(self) -> bool:
        return self._fn is None

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        return Tensor._wrap(self.data, False, None)

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        backward(self)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    # operator sugar; every path lands on a primitive in ops.py
    def __add__(self, other):
        from . import ops
        return ops.add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        from . import ops
        return ops.mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        from . import ops
        return ops.mul(self, -1.0)

    def __sub__(self, other):
        from . import ops
        return ops.add(self, ops.mul(other, -1.0))

    def __rsub__(self, other):
        from . import ops
        return ops.add(ops.mul(self, -1.0), other)

    def __truediv__(self, other):
        from . import ops
        if isinstance(other, Tensor):
            raise TypeError("division by a Tensor is not a primitive; multiply by a reciprocal")
        return ops.mul(self, 1.0 / float(other))

    def __matmul__(self, other):
        from . import ops
        return ops.matmul(self, other)


def as_tensor(x: Union[Tensor, ArrayLike]) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor._wrap(np.asarray(x, dtype=np.float64), False, None)


class Function:
    """A differentiable primitive.

    ``forward`` receives raw arrays and returns the output array. ``backward``
    receives dL/d(output) and returns one array (or None) per input.
    """

    name = "function"

    def __init__(self, *inputs: Tensor):
        self.inputs = inputs

    def forward(self, *arrays: np.ndarray, **kwargs) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad: np.ndarray) -> Tuple[Optional[np.ndarray], ...]:
        raise NotImplementedError

    def needs_grad(self, i: int) -> bool:
        return self.inputs[i].requires_grad

    @classmethod
    def apply(cls, *inputs, **kwargs) -> Tensor:
        tensors = tuple(as_tensor(t) for t in inputs)
        fn = cls(*tensors)
        out = fn.forward(*(t.data for t in tensors), **kwargs)
        _check_finite(out, cls.name)
        requires_grad = is_grad_enabled() and any(t.requires_grad for t in tensors)
        return Tensor._wrap(out, requires_grad, fn)


@dataclass
class TapeRecord:
    op: str
    input_ids: Tuple[int, ...]
    output_id: int
    fn: Function = field(repr=False)
    output: Tensor = field(repr=False)


@dataclass
class ComputationTape:
    """Records of a graph in topological order (inputs precede users)."""

    records: list = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)


def build_tape(root: Tensor) -> ComputationTape:
    """Topologically sort the differentiable subgraph ending at ``root``."""
    tape = ComputationTape()
    if root._fn is None:
        return tape
    visited = set()
    # iterative post-order DFS; deep graphs would overflow the recursion limit
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            fn = node._fn
            tape.records.append(
                TapeRecord(fn.name, tuple(id(t) for t in fn.inputs), id(node), fn, node)
            )
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in reversed(node._fn.inputs):
            if parent._fn is not None and id(parent) not in visited:
                stack.append((parent, False))
    return tape


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into ``.grad`` of every reachable trainable leaf.

    Repeated calls add to existing gradients; use ``zero_grad`` to reset.
    """
    if loss.size != 1:
        raise ShapeError(f"backward() needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        return
    if loss._fn is None:
        loss.grad = np.ones_like(loss.data) if loss.grad is None else loss.grad + 1.0
        return

    tape = build_tape(loss)
    grads = {id(loss): np.ones_like(loss.data)}
    for rec in reversed(tape.records):
        g = grads.pop(rec.output_id, None)
        if g is None:
            continue
        in_grads = rec.fn.backward(g)
        for inp, ig in zip(rec.fn.inputs, in_grads):
            if ig is None or not inp.requires_grad:
                continue
            _check_finite(ig, f"{rec.op}.backward")
            if ig.shape != inp.shape:
                raise ShapeError(
                    f"{rec.op}.backward returned grad of shape {ig.shape} for input {inp.shape}"
                )
            if inp._fn is None:
                inp.grad = ig.copy() if inp.grad is None else inp.grad + ig
            else:
                key = id(inp)
                grads[key] = ig if key not in grads else grads[key] + ig


class Parameter:
    """A named model weight; ``trainable`` mirrors ``tensor.requires_grad``."""

    __slots__ = ("name", "tensor")

    def __init__(self, name: str, data: ArrayLike, trainable: bool = True):
        self.name = name
        self.tensor = Tensor(data, requires_grad=trainable, name=name)

    @property
    def trainable(self) -> bool:
        return self.tensor.requires_grad

    @trainable.setter
    def trainable(self, value: bool) -> None:
        self.tensor.requires_grad = bool(value)

    @property
    def data(self) -> np.ndarray:
        return self.tensor.data

    @property
    def grad(self) -> Optional[np.ndarray]:
        return self.tensor.grad

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.tensor.shape

    def zero_grad(self) -> None:
        self.tensor.grad = None

    def __repr__(self) -> str:
        return f"Parameter({self.name!r}, shape={self.shape}, trainable={self.trainable})"
