"""Symbolic shape propagation through adapter -> patchify -> tokens -> projection.

Nothing here allocates a volume, so the full 256^3 configuration can be
checked on any machine.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

from .adapter import AdapterConfig
from .encoders import FULL_SCALE_PATCH, FULL_SCALE_TOKEN_DIM, PatchSpec
from .tensor import ShapeError

FULL_SCALE_INPUT = (256, 256, 256)
REPORTED_TOKEN_COUNT = 256


def fmt(shape: Sequence[int]) -> str:
    return "(" + ",".join(str(int(n)) for n in shape) + ")"


@dataclass
class ShapeTrace:
    title: str
    stages: List[Tuple[str, str]] = field(default_factory=list)
    n_patches: int = 0
    notes: List[str] = field(default_factory=list)

    def add(self, stage: str, text: str) -> None:
        self.stages.append((stage, text))

    def lines(self) -> List[str]:
        out = [f"[{self.title}]"]
        out += [f"{stage}: {text}" for stage, text in self.stages]
        out += [f"note: {n}" for n in self.notes]
        return out

    def to_text(self) -> str:
        return "\n".join(self.lines()) + "\n"


def trace_shapes(
    adapter: AdapterConfig,
    patch: Sequence[int],
    token_dim: int,
    proj_dim: int,
    title: str,
    input_dims: Optional[Sequence[int]] = None,
) -> ShapeTrace:
    dims = tuple(input_dims or adapter.input_dims)
    trace = ShapeTrace(title)
    try:
        z = adapter.output_dims(dims)
    except (ShapeError, ValueError) as exc:
        raise ShapeError(f"stage adapter: {exc}") from None
    trace.add("input", fmt(dims))
    trace.add("adapter", f"{fmt(dims)} -> {fmt(z)}")
    spec = PatchSpec(tuple(patch))
    try:
        grid = spec.grid(z)
    except ShapeError as exc:
        raise ShapeError(f"stage patchify: {exc}") from None
    n = spec.n_patches(z)
    trace.n_patches = n
    trace.add("patchify", f"{fmt(z)} / {fmt(patch)} -> grid {fmt(grid)} = {n} patches of {spec.patch_size}")
    trace.add("tokens", f"{fmt((n, spec.patch_size))} -> {fmt((n, token_dim))}")
    trace.add("pool", f"{fmt((n, token_dim))} -> {fmt((token_dim,))}")
    trace.add("projection", f"{fmt((token_dim,))} -> {fmt((proj_dim,))}")
    trace.add("summary", f"{fmt(dims)} -> {fmt(z)} -> {n} patches")
    return trace


def full_scale_trace(adapter: AdapterConfig, proj_dim: int) -> ShapeTrace:
    cfg = AdapterConfig(
        input_dims=FULL_SCALE_INPUT,
        depth_reduction=adapter.depth_reduction,
        stage_channels=tuple(adapter.stage_channels),
        kernel=tuple(adapter.kernel),
        residual_block=adapter.residual_block,
        in_channels=adapter.in_channels,
    )
    trace = trace_shapes(cfg, FULL_SCALE_PATCH, FULL_SCALE_TOKEN_DIM, proj_dim, "full scale")
    if trace.n_patches != REPORTED_TOKEN_COUNT:
        trace.notes.append(
            f"patch count {trace.n_patches} differs from the {REPORTED_TOKEN_COUNT} tokens stated for this "
            f"configuration; {fmt(adapter.output_dims(FULL_SCALE_INPUT))} split into {fmt(FULL_SCALE_PATCH)} "
            f"patches gives {trace.n_patches}"
        )
    return trace


def desk_trace(adapter: AdapterConfig, patch: Sequence[int], token_dim: int, proj_dim: int) -> ShapeTrace:
    return trace_shapes(adapter, patch, token_dim, proj_dim, "desk scale")
