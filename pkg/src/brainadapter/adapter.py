"""Residual 3D-convolution bottleneck that shrinks the depth axis of a volume.

Each downsampling stage is a stride-(2, 1, 1) convolution followed by ReLU,
so ``log2(depth_reduction)`` stages take (D, H, W) to (D / r, H, W). A
residual block ``out = z + conv(relu(conv(z)))`` runs at the reduced
resolution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import ops
from .tensor import Parameter, ShapeError, Tensor


@dataclass
class AdapterConfig:
    input_dims: Tuple[int, int, int] = (32, 32, 32)
    depth_reduction: int = 8
    stage_channels: Tuple[int, ...] = (8, 8, 1)
    kernel: Tuple[int, int, int] = (3, 3, 3)
    residual_block: bool = True
    in_channels: int = 1

    def validate(self) -> None:
        r = self.depth_reduction
        if r < 1 or r & (r - 1):
            raise ValueError(f"depth_reduction must be a power of two, got {r}")
        n_stages = int(math.log2(r))
        if len(self.stage_channels) != n_stages:
            raise ValueError(
                f"depth_reduction {r} needs {n_stages} stages, got stage_channels {tuple(self.stage_channels)}"
            )
        if self.input_dims[0] % r:
            raise ValueError(f"input depth {self.input_dims[0]} is not divisible by depth_reduction {r}")
        if any(k % 2 == 0 for k in self.kernel):
            raise ValueError(f"kernel extents must be odd for same padding, got {self.kernel}")

    @property
    def padding(self) -> Tuple[int, int, int]:
        return tuple((k - 1) // 2 for k in self.kernel)

    @property
    def out_channels(self) -> int:
        return self.stage_channels[-1] if self.stage_channels else self.in_channels

    def output_dims(self, input_dims: Optional[Sequence[int]] = None) -> Tuple[int, int, int]:
        """Shape propagation through every stage without allocating buffers."""
        dims = tuple(input_dims or self.input_dims)
        if dims[0] % self.depth_reduction:
            raise ShapeError(f"adapter: depth {dims[0]} is not divisible by {self.depth_reduction}")
        for _ in self.stage_channels:
            dims = tuple(
                ops.conv_output_extent(n, k, s, p)
                for n, k, s, p in zip(dims, self.kernel, (2, 1, 1), self.padding)
            )
        return dims


def count_trainable_params(config: AdapterConfig) -> int:
    ksize = int(np.prod(config.kernel))
    total = 0
    c_in = config.in_channels
    for c_out in config.stage_channels:
        total += c_out * c_in * ksize + c_out
        c_in = c_out
    if config.residual_block:
        total += 2 * (c_in * c_in * ksize + c_in)
    return total


DIRAC_NOISE = 0.1


def dirac_init(shape: Tuple[int, ...], rng: np.random.Generator, noise: float = DIRAC_NOISE) -> np.ndarray:
    """Center-tap identity kernel plus small He-uniform noise.

    Output channel o copies input channel o mod c_in when channels grow and
    averages the input channels i with i mod c_out == o when they shrink, so
    each stride-(2,1,1) stage starts as a depth subsampler of its input.
    """
    c_out, c_in = shape[:2]
    fan_in = c_in * int(np.prod(shape[2:]))
    bound = noise * math.sqrt(6.0 / fan_in)
    w = rng.uniform(-bound, bound, size=shape)
    center = tuple(k // 2 for k in shape[2:])
    for o in range(c_out):
        sources = [o % c_in] if c_out >= c_in else list(range(o, c_in, c_out))
        for i in sources:
            w[(o, i) + center] += 1.0 / len(sources)
    return w


class BrainAdapter:
    """Trainable weights plus forward pass; every parameter is named ``adapter.*``."""

    def __init__(self, config: AdapterConfig, rng: np.random.Generator, zero_init_residual: bool = True):
        config.validate()
        self.config = config
        self.params: Dict[str, Parameter] = {}
        kD, kH, kW = config.kernel
        c_in = config.in_channels
        for i, c_out in enumerate(config.stage_channels):
            self._add_conv(f"adapter.stage{i}", c_out, c_in, rng)
            c_in = c_out
        if config.residual_block:
            self._add_conv("adapter.res.conv1", c_in, c_in, rng)
            self._add_conv("adapter.res.conv2", c_in, c_in, rng, zero=zero_init_residual)

    def _add_conv(self, prefix: str, c_out: int, c_in: int, rng, zero: bool = False) -> None:
        shape = (c_out, c_in) + tuple(self.config.kernel)
        w = np.zeros(shape) if zero else dirac_init(shape, rng)
        # Zero biases keep every ReLU live on the nonnegative volumes.
        b = np.zeros((c_out, 1, 1, 1))
        self.params[f"{prefix}.weight"] = Parameter(f"{prefix}.weight", w)
        self.params[f"{prefix}.bias"] = Parameter(f"{prefix}.bias", b)

    def parameters(self) -> List[Parameter]:
        return list(self.params.values())

    def _conv(self, prefix: str, x: Tensor, stride) -> Tensor:
        w = self.params[f"{prefix}.weight"].tensor
        b = self.params[f"{prefix}.bias"].tensor
        return ops.add(ops.conv3d(x, w, stride=stride, padding=self.config.padding), b)

    def residual(self, z: Tensor) -> Tensor:
        branch = self._conv("adapter.res.conv1", z, 1)
        branch = self._conv("adapter.res.conv2", ops.relu(branch), 1)
        return ops.add(z, branch)

    def __call__(self, x: Tensor) -> Tensor:
        return adapter_forward(x, self)


def adapter_forward(x: Tensor, adapter: BrainAdapter) -> Tensor:
    """Map C x D x H x W (or N x C x D x H x W) to the depth-reduced volume."""
    cfg = adapter.config
    if tuple(x.shape[-3:]) != tuple(cfg.input_dims) or x.shape[-4] != cfg.in_channels:
        raise ShapeError(
            f"adapter expects {cfg.in_channels} x {tuple(cfg.input_dims)} input, got {x.shape}"
        )
    z = x
    for i in range(len(cfg.stage_channels)):
        z = ops.relu(adapter._conv(f"adapter.stage{i}", z, (2, 1, 1)))
    if cfg.residual_block:
        z = adapter.residual(z)
    return z
