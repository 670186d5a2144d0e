"""Fine-tuning loop, freeze plans, evaluation, embedding export and checkpoints."""

from __future__ import annotations

import hashlib
import math
import struct
import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Set

import numpy as np

from .metrics import MetricsReport, classification_report
from .model import BrainAdapterModel
from .optim import AdamW, group_lr
from .tensor import backward, no_grad
from .volume import LABELS

FPM, TLP = "fpm", "tlp"
# The head starts from scratch and reads unit-norm embeddings whose class
# differences are small, so it gets its own, larger step.
HEAD_LR = 1e-2


@dataclass
class TrainConfig:
    epochs: int = 9
    batch_size: int = 8
    lr_adapter: float = 1e-3
    lr_projection: float = 1e-4
    lr_head: float = HEAD_LR
    weight_decay: float = 0.01
    seed: int = 0
    mode: str = TLP

    def validate(self) -> None:
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if min(self.lr_adapter, self.lr_projection, self.lr_head) <= 0:
            raise ValueError("learning rates must be positive")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be non-negative")
        if self.mode not in (FPM, TLP):
            raise ValueError(f"mode must be {FPM!r} or {TLP!r}, got {self.mode!r}")


@dataclass
class Example:
    subject_id: str
    label: int
    volume: np.ndarray  # D x H x W, normalized
    tokens: np.ndarray  # L token ids


# --------------------------------------------------------------------------
# freeze plans
# --------------------------------------------------------------------------


def _is_projection(name: str) -> bool:
    return name.startswith(("vision.", "text.")) and ".proj." in name


class FreezePlan:
    """FPM trains adapter, head, temperature and loss weights; TLP adds the two projections."""

    def __init__(self, mode: str):
        if mode not in (FPM, TLP):
            raise ValueError(f"unknown freeze mode {mode!r}")
        self.mode = mode

    def is_trainable(self, name: str, model: BrainAdapterModel) -> bool:
        if name.startswith(("adapter.", "head.")) or name == "temperature":
            return True
        if name.startswith("loss_weights."):
            return model.config.learn_loss_weights
        return self.mode == TLP and _is_projection(name)

    def trainable_names(self, model: BrainAdapterModel) -> Set[str]:
        return {n for n in model.named_parameters() if self.is_trainable(n, model)}

    def apply(self, model: BrainAdapterModel) -> None:
        for name, p in model.named_parameters().items():
            p.trainable = self.is_trainable(name, model)


# --------------------------------------------------------------------------
# training
# --------------------------------------------------------------------------


@dataclass
class EpochRecord:
    epoch: int
    contrastive: float
    ce: float
    joint: float
    accuracy: float

    def to_line(self) -> str:
        return (
            f"epoch={self.epoch} contrastive={self.contrastive!r} ce={self.ce!r} "
            f"joint={self.joint!r} accuracy={self.accuracy!r}"
        )


def batches_per_epoch(n: int, batch_size: int) -> int:
    return math.ceil(n / batch_size)


def stack_batch(examples: Sequence[Example]):
    volumes = np.stack([e.volume for e in examples])
    tokens = np.stack([e.tokens for e in examples])
    labels = np.array([e.label for e in examples], dtype=np.int64)
    return volumes, tokens, labels


def train(
    config: TrainConfig,
    examples: Sequence[Example],
    model: BrainAdapterModel,
    on_epoch_end: Optional[Callable[[int, BrainAdapterModel], None]] = None,
    batch_log: Optional[List[str]] = None,
) -> List[EpochRecord]:
    """Fine-tune ``model`` in place and return one record per epoch.

    Each epoch shuffles with a seeded generator, then cuts fixed-size
    batches (the last short batch is kept). Per-batch loss is the weighted
    sum of the contrastive and cross-entropy terms.
    """
    config.validate()
    if not examples:
        raise ValueError("cannot train on an empty manifest")
    FreezePlan(config.mode).apply(model)
    params = [p for p in model.parameters() if p.trainable]
    opt = AdamW(
        params,
        weight_decay=config.weight_decay,
        lr_for=group_lr(config.lr_adapter, config.lr_projection, config.lr_head),
    )
    rng = np.random.default_rng([config.seed, 2])
    history = []
    n = len(examples)
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(n)
        sums = np.zeros(3)
        correct = 0
        for step, start in enumerate(range(0, n, config.batch_size)):
            batch = [examples[i] for i in order[start : start + config.batch_size]]
            volumes, tokens, labels = stack_batch(batch)
            opt.zero_grad()
            out = model.forward(volumes, tokens)
            terms = model.loss(out, labels)
            backward(terms.joint)
            opt.step()
            k = len(batch)
            vals = (terms.contrastive.total.item(), terms.ce.item(), terms.joint.item())
            sums += k * np.array(vals)
            correct += int((out.logits.data.argmax(axis=1) == labels).sum())
            if batch_log is not None:
                batch_log.append(
                    f"batch epoch={epoch} step={step} size={k} contrastive={vals[0]!r} "
                    f"ce={vals[1]!r} joint={vals[2]!r}"
                )
        rec = EpochRecord(epoch, *(float(x) for x in sums / n), correct / n)
        history.append(rec)
        if on_epoch_end is not None:
            on_epoch_end(epoch, model)
    opt.zero_grad()
    return history


# --------------------------------------------------------------------------
# evaluation and embeddings
# --------------------------------------------------------------------------


def infer(model: BrainAdapterModel, examples: Sequence[Example], batch_size: int = 16):
    """(u, v, logits) arrays for every example, in input order."""
    us, vs, logits = [], [], []
    with no_grad():
        for start in range(0, len(examples), batch_size):
            volumes, tokens, _ = stack_batch(examples[start : start + batch_size])
            out = model.forward(volumes, tokens)
            us.append(out.u.data)
            vs.append(out.v.data)
            logits.append(out.logits.data)
    return np.concatenate(us), np.concatenate(vs), np.concatenate(logits)


def evaluate(model: BrainAdapterModel, examples: Sequence[Example]) -> MetricsReport:
    if not examples:
        raise ValueError("cannot evaluate on an empty test set")
    _, _, logits = infer(model, examples)
    labels = np.array([e.label for e in examples])
    return classification_report(labels, logits.argmax(axis=1), LABELS)


def pca_2d(x: np.ndarray) -> np.ndarray:
    """Project rows onto the top two principal axes, with a deterministic sign per axis."""
    centered = x - x.mean(axis=0)
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    axes = vt[:2]
    signs = np.sign(axes[np.arange(len(axes)), np.abs(axes).argmax(axis=1)])
    coords = centered @ (axes * signs[:, None]).T
    if coords.shape[1] < 2:
        coords = np.pad(coords, ((0, 0), (0, 2 - coords.shape[1])))
    return coords


def separation_score(embeddings: np.ndarray, labels: Sequence[int]) -> float:
    """Mean distance between class centroids over mean distance of samples to their own centroid.

    Returns ``inf`` when every sample sits on its centroid.
    """
    labels = np.asarray(labels)
    classes = np.unique(labels)
    centroids = np.stack([embeddings[labels == c].mean(axis=0) for c in classes])
    within = np.mean(
        [np.linalg.norm(embeddings[i] - centroids[np.searchsorted(classes, labels[i])]) for i in range(len(labels))]
    )
    pairs = [
        np.linalg.norm(centroids[a] - centroids[b])
        for a in range(len(classes))
        for b in range(a + 1, len(classes))
    ]
    between = float(np.mean(pairs)) if pairs else 0.0
    if within == 0:
        return math.inf
    return between / float(within)


@dataclass
class EmbeddingExport:
    ids: List[str]
    labels: np.ndarray
    embeddings: np.ndarray  # N x 2d fused (u then v)
    coords: np.ndarray  # N x 2 PCA
    separation: float

    def to_csv(self) -> str:
        d = self.embeddings.shape[1]
        header = ["id", "label"] + [f"e{i}" for i in range(d)] + ["pc1", "pc2"]
        lines = [",".join(header)]
        for sid, lab, emb, pc in zip(self.ids, self.labels, self.embeddings, self.coords):
            vals = [f"{x:.17g}" for x in np.concatenate([emb, pc])]
            lines.append(",".join([sid, LABELS[int(lab)]] + vals))
        return "\n".join(lines) + "\n"


def export_embeddings(model: BrainAdapterModel, examples: Sequence[Example], epoch: int, path=None) -> EmbeddingExport:
    """Fused (u, v) embeddings with a 2D PCA view and the class separation score.

    When ``path`` is given the rows are written there as CSV.
    """
    if not examples:
        raise ValueError("cannot export embeddings for an empty manifest")
    u, v, _ = infer(model, examples)
    fused = np.concatenate([u, v], axis=1)
    labels = np.array([e.label for e in examples])
    export = EmbeddingExport([e.subject_id for e in examples], labels, fused, pca_2d(fused), separation_score(fused, labels))
    if path is not None:
        path = Path(path)
        try:
            path.write_text(export.to_csv(), encoding="utf-8")
        except OSError as exc:
            raise OSError(f"cannot write embeddings for epoch {epoch} to {path}: {exc}") from exc
    return export


# --------------------------------------------------------------------------
# checkpoints
# --------------------------------------------------------------------------

CHECKPOINT_MANIFEST = "checkpoint.tsv"


class CheckpointError(ValueError):
    pass


def encode_array(arr: np.ndarray) -> bytes:
    header = struct.pack(f"<I{arr.ndim}I", arr.ndim, *arr.shape)
    return header + np.ascontiguousarray(arr, dtype="<f8").tobytes()


def decode_array(blob: bytes, where: str = "<bytes>") -> np.ndarray:
    if len(blob) < 4:
        raise CheckpointError(f"{where}: truncated header")
    (rank,) = struct.unpack_from("<I", blob)
    head = 4 + 4 * rank
    if len(blob) < head:
        raise CheckpointError(f"{where}: truncated shape")
    shape = struct.unpack_from(f"<{rank}I", blob, 4)
    n = int(np.prod(shape)) if rank else 1
    if len(blob) != head + 8 * n:
        raise CheckpointError(f"{where}: payload of {len(blob) - head} bytes does not match shape {shape}")
    return np.frombuffer(blob, dtype="<f8", offset=head).astype(np.float64).reshape(shape)


def save_checkpoint(model: BrainAdapterModel, directory) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    lines = ["name\tshape\ttrainable\tcrc32"]
    for name, p in model.named_parameters().items():
        blob = encode_array(p.data)
        (directory / f"{name}.bin").write_bytes(blob)
        shape = "x".join(str(s) for s in p.shape) or "scalar"
        lines.append(f"{name}\t{shape}\t{int(p.trainable)}\t{zlib.crc32(blob):08x}")
    (directory / CHECKPOINT_MANIFEST).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_checkpoint(model: BrainAdapterModel, directory) -> None:
    """Overwrite ``model``'s weights and trainable flags from ``directory``."""
    directory = Path(directory)
    params = model.named_parameters()
    rows = (directory / CHECKPOINT_MANIFEST).read_text(encoding="utf-8").splitlines()[1:]
    seen = set()
    for row in rows:
        name, shape, trainable, crc = row.split("\t")
        if name not in params:
            raise CheckpointError(f"checkpoint parameter {name!r} is not part of the model")
        blob = (directory / f"{name}.bin").read_bytes()
        if f"{zlib.crc32(blob):08x}" != crc:
            raise CheckpointError(f"{name}: checksum mismatch")
        arr = decode_array(blob, name)
        p = params[name]
        if arr.shape != p.shape:
            raise CheckpointError(f"{name}: checkpoint shape {arr.shape} != model shape {p.shape}")
        p.data[...] = arr
        p.trainable = trainable == "1"
        seen.add(name)
    missing = set(params) - seen
    if missing:
        raise CheckpointError(f"checkpoint lacks parameters {sorted(missing)}")


def history_text(history: Sequence[EpochRecord], batch_log: Sequence[str] = ()) -> str:
    return "".join(line + "\n" for line in list(batch_log) + [r.to_line() for r in history])


def parameter_digest(model: BrainAdapterModel) -> Dict[str, str]:
    """sha256 of every parameter's bytes, for before/after freeze census."""
    return {name: hashlib.sha256(p.data.tobytes()).hexdigest() for name, p in model.named_parameters().items()}
