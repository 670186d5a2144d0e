"""Differentiable primitives.

The numeric closure is: conv3d, matmul, elementwise add/mul/relu/tanh/exp/log,
sum/mean reductions, concatenation, row softmax and log-softmax, and L2 row
normalization. Structural ops (reshape, transpose, take, clip) carry only
index bookkeeping.
"""

from __future__ import annotations

from typing import Optional, Sequence, Tuple, Union

import numpy as np

from .tensor import Function, NaNError, ShapeError, Tensor, as_tensor

Triple = Tuple[int, int, int]


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _triple(v: Union[int, Sequence[int]], what: str) -> Triple:
    if isinstance(v, (int, np.integer)):
        return (int(v),) * 3
    v = tuple(int(a) for a in v)
    if len(v) != 3:
        raise ShapeError(f"{what} needs 3 entries, got {v}")
    return v


def conv_output_extent(n: int, k: int, stride: int, pad: int) -> int:
    return (n + 2 * pad - k) // stride + 1


# --------------------------------------------------------------------------
# elementwise
# --------------------------------------------------------------------------


class Add(Function):
    name = "add"

    def forward(self, a, b):
        return a + b

    def backward(self, grad):
        a, b = self.inputs
        return (
            _unbroadcast(grad, a.shape) if a.requires_grad else None,
            _unbroadcast(grad, b.shape) if b.requires_grad else None,
        )


class Mul(Function):
    name = "mul"

    def forward(self, a, b):
        return a * b

    def backward(self, grad):
        a, b = self.inputs
        return (
            _unbroadcast(grad * b.data, a.shape) if a.requires_grad else None,
            _unbroadcast(grad * a.data, b.shape) if b.requires_grad else None,
        )


class ReLU(Function):
    name = "relu"

    def forward(self, x):
        return np.maximum(x, 0.0)

    def backward(self, grad):
        return (grad * (self.inputs[0].data > 0),)


class Tanh(Function):
    name = "tanh"

    def forward(self, x):
        self.out = np.tanh(x)
        return self.out

    def backward(self, grad):
        return (grad * (1.0 - self.out**2),)


class Exp(Function):
    name = "exp"

    def forward(self, x):
        self.out = np.exp(x)
        return self.out

    def backward(self, grad):
        return (grad * self.out,)


class Log(Function):
    name = "log"

    def forward(self, x):
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.log(x)

    def backward(self, grad):
        return (grad / self.inputs[0].data,)


class Clip(Function):
    name = "clip"

    def forward(self, x, lo, hi):
        self.mask = (x >= lo) & (x <= hi)
        return np.clip(x, lo, hi)

    def backward(self, grad):
        return (grad * self.mask,)


def add(a, b) -> Tensor:
    return Add.apply(a, b)


def mul(a, b) -> Tensor:
    return Mul.apply(a, b)


def relu(x) -> Tensor:
    return ReLU.apply(x)


def tanh(x) -> Tensor:
    return Tanh.apply(x)


def exp(x) -> Tensor:
    return Exp.apply(x)


def log(x) -> Tensor:
    return Log.apply(x)


def clip(x, lo: float, hi: float) -> Tensor:
    return Clip.apply(x, lo=lo, hi=hi)


def softplus(x) -> Tensor:
    return log(add(exp(x), 1.0))


# --------------------------------------------------------------------------
# reductions and structure
# --------------------------------------------------------------------------


def _expand_reduced(grad: np.ndarray, shape, axis, keepdims) -> np.ndarray:
    if axis is not None and not keepdims:
        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        axes = tuple(a % len(shape) for a in axes)
        for a in sorted(axes):
            grad = np.expand_dims(grad, a)
    return np.broadcast_to(grad, shape)


class Sum(Function):
    name = "sum"

    def forward(self, x, axis=None, keepdims=False):
        self.axis, self.keepdims = axis, keepdims
        return np.asarray(x.sum(axis=axis, keepdims=keepdims))

    def backward(self, grad):
        shape = self.inputs[0].shape
        return (np.array(_expand_reduced(grad, shape, self.axis, self.keepdims)),)


class Mean(Function):
    name = "mean"

    def forward(self, x, axis=None, keepdims=False):
        self.axis, self.keepdims = axis, keepdims
        out = np.asarray(x.mean(axis=axis, keepdims=keepdims))
        self.count = x.size // max(out.size, 1)
        return out

    def backward(self, grad):
        shape = self.inputs[0].shape
        return (_expand_reduced(grad, shape, self.axis, self.keepdims) / self.count,)


class Reshape(Function):
    name = "reshape"

    def forward(self, x, shape):
        return x.reshape(shape)

    def backward(self, grad):
        return (grad.reshape(self.inputs[0].shape),)


class Transpose(Function):
    name = "transpose"

    def forward(self, x, axes):
        self.axes = tuple(range(x.ndim))[::-1] if axes is None else tuple(axes)
        return np.ascontiguousarray(x.transpose(self.axes))

    def backward(self, grad):
        return (np.ascontiguousarray(grad.transpose(np.argsort(self.axes))),)


class Take(Function):
    """Row gather ``table[ids]`` (embedding lookup)."""

    name = "take"

    def forward(self, table, ids):
        self.ids = ids
        return table[ids]

    def backward(self, grad):
        table = self.inputs[0]
        if not table.requires_grad:
            return (None,)
        g = np.zeros_like(table.data)
        np.add.at(g, self.ids, grad)
        return (g,)


class Concat(Function):
    name = "concat"

    def forward(self, *arrays, axis=0):
        self.axis = axis
        self.sizes = [a.shape[axis] for a in arrays]
        return np.concatenate(arrays, axis=axis)

    def backward(self, grad):
        cuts = np.cumsum(self.sizes)[:-1]
        return tuple(np.split(grad, cuts, axis=self.axis))


def sum(x, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    return Sum.apply(x, axis=axis, keepdims=keepdims)


def mean(x, axis=None, keepdims: bool = False) -> Tensor:
    return Mean.apply(x, axis=axis, keepdims=keepdims)


def reshape(x, shape) -> Tensor:
    return Reshape.apply(x, shape=tuple(shape))


def transpose(x, axes=None) -> Tensor:
    return Transpose.apply(x, axes=axes)


def take(table, ids) -> Tensor:
    ids = np.asarray(ids, dtype=np.int64)
    n = as_tensor(table).shape[0]
    if ids.size and (ids.min() < 0 or ids.max() >= n):
        raise IndexError(f"ids must lie in [0, {n}), got range [{ids.min()}, {ids.max()}]")
    return Take.apply(table, ids=ids)


def concat(tensors: Sequence, axis: int = 0) -> Tensor:
    return Concat.apply(*tensors, axis=axis)


# --------------------------------------------------------------------------
# linear algebra
# --------------------------------------------------------------------------


class MatMul(Function):
    name = "matmul"

    def forward(self, a, b):
        if a.ndim < 2 or b.ndim < 2:
            raise ShapeError(f"matmul needs operands with ndim >= 2, got {a.shape} and {b.shape}")
        if a.shape[-1] != b.shape[-2]:
            raise ShapeError(f"matmul inner extents differ: {a.shape} @ {b.shape}")
        return np.matmul(a, b)

    def backward(self, grad):
        a, b = self.inputs
        ga = gb = None
        if a.requires_grad:
            ga = _unbroadcast(np.matmul(grad, np.swapaxes(b.data, -1, -2)), a.shape)
        if b.requires_grad:
            gb = _unbroadcast(np.matmul(np.swapaxes(a.data, -1, -2), grad), b.shape)
        return ga, gb


def matmul(a, b) -> Tensor:
    return MatMul.apply(a, b)


class Conv3d(Function):
    """Cross-correlation over (N, C, D, H, W) with per-axis stride and zero padding.

    Works channel-major internally so each of the kD*kH*kW kernel offsets is
    a single (C_out x C_in) tensordot against a strided view of the input.
    """

    name = "conv3d"

    def forward(self, x, k, stride, padding):
        self.stride, self.padding = stride, padding
        n, c, d, h, w = x.shape
        o, kc, kd, kh, kw = k.shape
        out_dims = tuple(
            conv_output_extent(e, kk, s, p) for e, kk, s, p in zip((d, h, w), (kd, kh, kw), stride, padding)
        )
        self.out_dims = out_dims
        pd, ph, pw = padding
        xt = np.ascontiguousarray(x.transpose(1, 0, 2, 3, 4))
        self.xpad = np.pad(xt, ((0, 0), (0, 0), (pd, pd), (ph, ph), (pw, pw)))
        out = np.zeros((o, n) + out_dims)
        for a, b, cc, view in self._views(self.xpad, k.shape):
            out += np.tensordot(k[:, :, a, b, cc], view, axes=([1], [0]))
        return np.ascontiguousarray(out.transpose(1, 0, 2, 3, 4))

    def _views(self, xpad, kshape):
        sd, sh, sw = self.stride
        do, ho, wo = self.out_dims
        for a in range(kshape[2]):
            for b in range(kshape[3]):
                for cc in range(kshape[4]):
                    yield a, b, cc, xpad[
                        :,
                        :,
                        a : a + sd * (do - 1) + 1 : sd,
                        b : b + sh * (ho - 1) + 1 : sh,
                        cc : cc + sw * (wo - 1) + 1 : sw,
                    ]

    def backward(self, grad):
        x, k = self.inputs
        gt = np.ascontiguousarray(grad.transpose(1, 0, 2, 3, 4))
        gx = gk = None
        if k.requires_grad:
            gk = np.zeros_like(k.data)
            for a, b, cc, view in self._views(self.xpad, k.shape):
                gk[:, :, a, b, cc] = np.tensordot(gt, view, axes=([1, 2, 3, 4], [1, 2, 3, 4]))
        if x.requires_grad:
            gpad = np.zeros_like(self.xpad)
            for a, b, cc, view in self._views(gpad, k.shape):
                view += np.tensordot(k.data[:, :, a, b, cc].T, gt, axes=([1], [0]))
            pd, ph, pw = self.padding
            d, h, w = x.shape[2:]
            gx = np.ascontiguousarray(
                gpad[:, :, pd : pd + d, ph : ph + h, pw : pw + w].transpose(1, 0, 2, 3, 4)
            )
        return gx, gk


def conv3d(x, kernel, stride=1, padding=0) -> Tensor:
    """3D cross-correlation.

    ``x`` is C_in x D x H x W, or N x C_in x D x H x W for a batch; ``kernel``
    is C_out x C_in x kD x kH x kW.
    """
    x, kernel = as_tensor(x), as_tensor(kernel)
    stride, padding = _triple(stride, "stride"), _triple(padding, "padding")
    if kernel.ndim != 5:
        raise ShapeError(f"kernel must be C_out x C_in x kD x kH x kW, got {kernel.shape}")
    if any(s < 1 for s in stride) or any(p < 0 for p in padding):
        raise ShapeError(f"bad stride {stride} / padding {padding}")
    batched = x.ndim == 5
    if x.ndim not in (4, 5):
        raise ShapeError(f"input must be C x D x H x W (optionally batched), got {x.shape}")
    c_in = x.shape[-4]
    if c_in != kernel.shape[1]:
        raise ShapeError(f"conv3d channel mismatch: input has C_in={c_in}, kernel expects {kernel.shape[1]}")
    out_dims = [
        conv_output_extent(e, kk, s, p) for e, kk, s, p in zip(x.shape[-3:], kernel.shape[2:], stride, padding)
    ]
    if min(out_dims) < 1:
        raise ShapeError(f"conv3d output extents {tuple(out_dims)} from input {x.shape} are empty")
    if not batched:
        x = reshape(x, (1,) + x.shape)
    out = Conv3d.apply(x, kernel, stride=stride, padding=padding)
    return out if batched else reshape(out, out.shape[1:])


# --------------------------------------------------------------------------
# normalizations
# --------------------------------------------------------------------------


def _reject_nan(x: np.ndarray, where: str) -> None:
    if np.isnan(x).any():
        raise NaNError(f"NaN input to {where}")


class SoftmaxRows(Function):
    name = "softmax_rows"

    def forward(self, x):
        _reject_nan(x, self.name)
        x = np.ascontiguousarray(x)
        e = np.exp(x - x.max(axis=-1, keepdims=True))
        self.out = e / e.sum(axis=-1, keepdims=True)
        return self.out

    def backward(self, grad):
        s = self.out
        return (s * (grad - (grad * s).sum(axis=-1, keepdims=True)),)


class LogSoftmaxRows(Function):
    name = "log_softmax_rows"

    def forward(self, x):
        _reject_nan(x, self.name)
        x = np.ascontiguousarray(x)
        shifted = x - x.max(axis=-1, keepdims=True)
        self.out = shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
        return self.out

    def backward(self, grad):
        return (grad - np.exp(self.out) * grad.sum(axis=-1, keepdims=True),)


class L2Normalize(Function):
    name = "l2_normalize"

    def forward(self, x):
        self.norm = np.sqrt((x * x).sum(axis=-1, keepdims=True))
        if (self.norm == 0).any():
            raise ZeroDivisionError("l2_normalize: zero-norm row")
        self.out = x / self.norm
        return self.out

    def backward(self, grad):
        y = self.out
        return ((grad - y * (grad * y).sum(axis=-1, keepdims=True)) / self.norm,)


def softmax_rows(x) -> Tensor:
    return SoftmaxRows.apply(x)


def log_softmax_rows(x) -> Tensor:
    return LogSoftmaxRows.apply(x)


def l2_normalize(x) -> Tensor:
    """Scale every row (last axis) to unit Euclidean norm."""
    return L2Normalize.apply(x)


def linear(x, weight, bias: Optional[Tensor] = None) -> Tensor:
    out = matmul(x, weight)
    return out if bias is None else add(out, bias)


def layer_norm(x, eps: float = 1e-5) -> Tensor:
    """Standardize the last axis to zero mean and unit variance (no affine)."""
    x = as_tensor(x)
    centered = add(x, mul(mean(x, axis=-1, keepdims=True), -1.0))
    var = mean(mul(centered, centered), axis=-1, keepdims=True)
    return mul(centered, exp(mul(log(add(var, eps)), -0.5)))
