"""Frozen vision/text encoder stubs with trainable linear projections.

The stubs stand in for pretrained backbones: their weights are pure
functions of ``(seed, architecture)`` and are never trained. Only the
``*.proj`` layers can be unfrozen.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

import numpy as np

from . import ops
from .adapter import BrainAdapter, adapter_forward
from .report import PAD
from .tensor import Parameter, ShapeError, Tensor

FULL_SCALE_PATCH = (4, 16, 16)
FULL_SCALE_TOKEN_DIM = 768


@dataclass
class PatchSpec:
    patch_dims: Tuple[int, int, int] = (4, 16, 16)

    def grid(self, dims: Sequence[int]) -> Tuple[int, int, int]:
        out = []
        for axis, (n, p) in enumerate(zip(dims, self.patch_dims)):
            if n % p:
                raise ShapeError(f"patchify: axis {axis} extent {n} is not divisible by patch extent {p}")
            out.append(n // p)
        return tuple(out)

    def n_patches(self, dims: Sequence[int]) -> int:
        return int(np.prod(self.grid(dims)))

    @property
    def patch_size(self) -> int:
        return int(np.prod(self.patch_dims))


@dataclass
class VisionEncoderConfig:
    token_dim: int = 32
    n_frozen_blocks: int = 2
    proj_dim: int = 16
    seed: int = 1234
    patch: Tuple[int, int, int] = (4, 16, 16)

    def validate(self) -> None:
        if self.token_dim < 2 or self.proj_dim < 2:
            raise ValueError("token_dim and proj_dim must be >= 2")


@dataclass
class TextEncoderConfig:
    vocab_size: int = 256
    token_dim: int = 32
    n_frozen_blocks: int = 2
    proj_dim: int = 16
    seed: int = 5678

    def validate(self) -> None:
        if self.token_dim < 2 or self.proj_dim < 2:
            raise ValueError("token_dim and proj_dim must be >= 2")
        if self.vocab_size < 3:
            raise ValueError("vocab_size must cover PAD, UNK and at least one token")


def patchify(z: Tensor, spec: PatchSpec) -> Tensor:
    """1 x D x H x W -> N x (pD*pH*pW); a leading batch axis is carried through.

    Patches are enumerated row-major over the (D/pD, H/pH, W/pW) patch grid.
    """
    batched = z.ndim == 5
    if z.ndim not in (4, 5) or z.shape[-4] != 1:
        raise ShapeError(f"patchify expects a single-channel volume, got {z.shape}")
    dims = z.shape[-3:]
    gd, gh, gw = spec.grid(dims)
    pd, ph, pw = spec.patch_dims
    n = z.shape[0] if batched else 1
    x = ops.reshape(z, (n, gd, pd, gh, ph, gw, pw))
    x = ops.transpose(x, (0, 1, 3, 5, 2, 4, 6))
    x = ops.reshape(x, (n, gd * gh * gw, spec.patch_size))
    return x if batched else ops.reshape(x, x.shape[1:])


def unpatchify(patches: Tensor, spec: PatchSpec, dims: Sequence[int]) -> Tensor:
    batched = patches.ndim == 3
    gd, gh, gw = spec.grid(dims)
    pd, ph, pw = spec.patch_dims
    n = patches.shape[0] if batched else 1
    x = ops.reshape(patches, (n, gd, gh, gw, pd, ph, pw))
    x = ops.transpose(x, (0, 1, 4, 2, 5, 3, 6))
    x = ops.reshape(x, (n, 1) + tuple(dims))
    return x if batched else ops.reshape(x, x.shape[1:])


def _uniform(rng, fan_in: int, shape) -> np.ndarray:
    bound = 1.0 / math.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


class VisionEncoder:
    """Patch embedding + residual token/feature-mixing blocks + mean pool, all frozen."""

    def __init__(self, config: VisionEncoderConfig, input_dims: Sequence[int]):
        config.validate()
        self.config = config
        self.spec = PatchSpec(tuple(config.patch))
        self.input_dims = tuple(input_dims)
        n_tok = self.spec.n_patches(self.input_dims)
        t, p = config.token_dim, self.spec.patch_size
        rng = np.random.default_rng([config.seed, 1])
        self.params: Dict[str, Parameter] = {}

        def add(name, data, trainable=False):
            self.params[name] = Parameter(name, data, trainable=trainable)

        add("vision.patch_embed.weight", rng.normal(0.0, 1.0 / math.sqrt(p), size=(p, t)))
        add("vision.patch_embed.bias", rng.normal(0.0, 0.1, size=(t,)))
        for i in range(config.n_frozen_blocks):
            add(f"vision.block{i}.token_mix", rng.normal(0.0, 1.0 / math.sqrt(n_tok), size=(n_tok, n_tok)))
            add(f"vision.block{i}.weight", rng.normal(0.0, 1.0 / math.sqrt(t), size=(t, t)))
            add(f"vision.block{i}.bias", rng.normal(0.0, 0.1, size=(t,)))
        add("vision.proj.weight", _uniform(rng, t, (t, config.proj_dim)))
        add("vision.proj.bias", _uniform(rng, t, (config.proj_dim,)))

    def parameters(self) -> List[Parameter]:
        return list(self.params.values())

    def _p(self, name: str) -> Tensor:
        return self.params[name].tensor

    def features(self, z: Tensor) -> Tensor:
        """Pooled token features before projection, N x token_dim."""
        if z.ndim == 4:
            z = ops.reshape(z, (1,) + z.shape)
        tokens = patchify(z, self.spec)
        h = ops.linear(tokens, self._p("vision.patch_embed.weight"), self._p("vision.patch_embed.bias"))
        for i in range(self.config.n_frozen_blocks):
            mixed = ops.matmul(self._p(f"vision.block{i}.token_mix"), ops.layer_norm(h))
            mixed = ops.linear(mixed, self._p(f"vision.block{i}.weight"), self._p(f"vision.block{i}.bias"))
            h = ops.add(h, ops.relu(mixed))
        return ops.layer_norm(ops.mean(h, axis=1))

    def project(self, feats: Tensor) -> Tensor:
        out = ops.linear(feats, self._p("vision.proj.weight"), self._p("vision.proj.bias"))
        return ops.l2_normalize(out)

    def __call__(self, z: Tensor) -> Tensor:
        return self.project(self.features(z))


def vision_encode(x: Tensor, adapter: BrainAdapter, encoder: VisionEncoder) -> Tensor:
    """Volume(s) -> unit-norm image embedding(s) u, one row per volume."""
    return encoder(adapter_forward(x, adapter))


class TextEncoder:
    """Embedding lookup + masked mean pool + residual linear/ReLU blocks, all frozen."""

    def __init__(self, config: TextEncoderConfig):
        config.validate()
        self.config = config
        t = config.token_dim
        rng = np.random.default_rng([config.seed, 2])
        self.params: Dict[str, Parameter] = {}

        def add(name, data, trainable=False):
            self.params[name] = Parameter(name, data, trainable=trainable)

        add("text.embed.weight", rng.normal(0.0, 1.0, size=(config.vocab_size, t)))
        for i in range(config.n_frozen_blocks):
            add(f"text.block{i}.weight", rng.normal(0.0, 1.0 / math.sqrt(t), size=(t, t)))
            add(f"text.block{i}.bias", rng.normal(0.0, 0.1, size=(t,)))
        add("text.proj.weight", _uniform(rng, t, (t, config.proj_dim)))
        add("text.proj.bias", _uniform(rng, t, (config.proj_dim,)))

    def parameters(self) -> List[Parameter]:
        return list(self.params.values())

    def _p(self, name: str) -> Tensor:
        return self.params[name].tensor

    def features(self, tokens) -> Tensor:
        ids = np.atleast_2d(np.asarray(tokens, dtype=np.int64))
        if ids.size and (ids.min() < 0 or ids.max() >= self.config.vocab_size):
            raise ValueError(f"token id out of range for vocab_size {self.config.vocab_size}")
        mask = (ids != PAD).astype(np.float64)
        counts = mask.sum(axis=1, keepdims=True)
        if (counts == 0).any():
            raise ValueError("cannot encode an all-PAD token sequence")
        weights = Tensor((mask / counts)[:, None, :])  # N x 1 x L
        emb = ops.take(self._p("text.embed.weight"), ids)  # N x L x t
        h = ops.reshape(ops.matmul(weights, emb), (ids.shape[0], self.config.token_dim))
        for i in range(self.config.n_frozen_blocks):
            mixed = ops.linear(ops.layer_norm(h), self._p(f"text.block{i}.weight"), self._p(f"text.block{i}.bias"))
            h = ops.add(h, ops.relu(mixed))
        return ops.layer_norm(h)

    def project(self, feats: Tensor) -> Tensor:
        out = ops.linear(feats, self._p("text.proj.weight"), self._p("text.proj.bias"))
        return ops.l2_normalize(out)

    def __call__(self, tokens) -> Tensor:
        return self.project(self.features(tokens))


def text_encode(tokens, encoder: TextEncoder) -> Tensor:
    """Token ids (L or N x L) -> unit-norm text embedding(s) v."""
    return encoder(tokens)
