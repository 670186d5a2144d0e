"""Volume preprocessing, synthetic cohort generation, splitting and storage."""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Sequence, Tuple

import numpy as np
from scipy.ndimage import gaussian_filter

from .report import ReportRecord, sample_record

LABELS: Tuple[str, ...] = ("AD", "CN", "MCI")
LABEL_INDEX: Dict[str, int] = {name: i for i, name in enumerate(LABELS)}
ADNI_CLASS_COUNTS = (4661, 5025, 7111)

PROCESSING_TAGS: Tuple[str, ...] = (
    "MPR",
    "MPR; GradWarp",
    "MPR; GradWarp; B1 Correction",
    "MPR; GradWarp; B1 Correction; N3",
    "MPR; GradWarp; B1 Correction; N3; Scaled",
)
# gaussian sigma (voxels) applied per processing tag
_TAG_SMOOTHING = dict(zip(PROCESSING_TAGS, (0.0, 0.3, 0.5, 0.7, 0.9)))
# class centre of the latent disease severity shared by volume and record
SEVERITY_CENTER = {"CN": 0.0, "MCI": 0.5, "AD": 1.0}
# hippocampus radius multiplier = 1 - ATROPHY_SLOPE * severity
ATROPHY_SLOPE = 0.32


@dataclass
class VolumeGrid:
    voxels: np.ndarray

    def __post_init__(self):
        self.voxels = np.asarray(self.voxels, dtype=np.float64)
        if self.voxels.ndim != 3 or min(self.voxels.shape) < 1:
            raise ValueError(f"a volume grid needs three positive extents, got {self.voxels.shape}")

    @property
    def dims(self) -> Tuple[int, int, int]:
        return tuple(self.voxels.shape)


@dataclass
class VolumeSample:
    grid: VolumeGrid
    subject_id: str
    label: str
    processing_tag: str = PROCESSING_TAGS[0]

    def __post_init__(self):
        if self.label not in LABEL_INDEX:
            raise ValueError(f"label must be one of {LABELS}, got {self.label!r}")


# --------------------------------------------------------------------------
# preprocessing
# --------------------------------------------------------------------------


def _interp_axis(v: np.ndarray, axis: int, m: int) -> np.ndarray:
    n = v.shape[axis]
    if n == m:
        return v
    pos = np.arange(m) * ((n - 1) / (m - 1))
    lo = np.minimum(np.floor(pos).astype(np.int64), n - 2)
    frac = pos - lo
    v0 = np.take(v, lo, axis=axis)
    v1 = np.take(v, lo + 1, axis=axis)
    shape = [1] * v.ndim
    shape[axis] = m
    return v0 + frac.reshape(shape) * (v1 - v0)


def resample_trilinear(grid: VolumeGrid, target_dims: Sequence[int]) -> VolumeGrid:
    """Trilinear resampling on corner-aligned grids (sample i sits at i/(n-1)).

    Trilinear interpolation is the tensor product of three 1D linear
    interpolations, so it is applied one axis at a time.
    """
    target_dims = tuple(int(t) for t in target_dims)
    if len(target_dims) != 3:
        raise ValueError("target_dims needs three extents")
    if min(target_dims) < 2 or min(grid.dims) < 2:
        raise ValueError(f"source and target extents must be >= 2, got {grid.dims} -> {target_dims}")
    v = grid.voxels
    for axis, m in enumerate(target_dims):
        v = _interp_axis(v, axis, m)
    # interpolation is convex; clip away last-ulp rounding outside the source range
    return VolumeGrid(np.clip(v, grid.voxels.min(), grid.voxels.max()))


def normalize_intensity(grid: VolumeGrid) -> VolumeGrid:
    """Min-max rescale to [0, 1]; a constant grid maps to zeros."""
    v = grid.voxels
    lo, hi = v.min(), v.max()
    if hi == lo:
        return VolumeGrid(np.zeros_like(v))
    return VolumeGrid(np.clip((v - lo) / (hi - lo), 0.0, 1.0))


def preprocess(sample: VolumeSample, target_dims: Sequence[int]) -> VolumeSample:
    grid = normalize_intensity(resample_trilinear(sample.grid, target_dims))
    return VolumeSample(grid, sample.subject_id, sample.label, sample.processing_tag)


# --------------------------------------------------------------------------
# synthetic cohort
# --------------------------------------------------------------------------


@dataclass
class CohortConfig:
    """Counts are ordered as LABELS (AD, CN, MCI)."""

    counts: Tuple[int, int, int] = (150, 150, 150)
    dims: Tuple[int, int, int] = (40, 36, 36)
    seed: int = 0
    noise: float = 0.06
    severity_jitter: float = 0.12
    radius_jitter: float = 0.03

    @classmethod
    def adni_proportional(cls, scale: float, **kwargs) -> "CohortConfig":
        counts = tuple(max(1, int(round(c * scale))) for c in ADNI_CLASS_COUNTS)
        return cls(counts=counts, **kwargs)


def _ellipsoid_mask(dims, center, radii) -> np.ndarray:
    axes = [((np.arange(n) - c) / r) ** 2 for n, c, r in zip(dims, center, radii)]
    return axes[0][:, None, None] + axes[1][None, :, None] + axes[2][None, None, :] <= 1.0


def _hippocampus_radii(dims) -> np.ndarray:
    return np.array([0.14 * dims[0], 0.12 * dims[1], 0.09 * dims[2]])


def draw_severity(label: str, jitter: float, rng: np.random.Generator) -> float:
    return max(0.0, SEVERITY_CENTER[label] + jitter * rng.standard_normal())


def _synth_volume(severity: float, dims, tag: str, cfg: CohortConfig, rng: np.random.Generator) -> np.ndarray:
    d, h, w = dims
    center = np.array([(d - 1) / 2, (h - 1) / 2, (w - 1) / 2])
    vol = np.zeros(dims)
    # brain-like tissue envelope
    vol[_ellipsoid_mask(dims, center, 0.42 * np.array(dims))] = 0.45
    scale = (1.0 - ATROPHY_SLOPE * severity) * (1.0 + cfg.radius_jitter * rng.standard_normal())
    radii = np.maximum(_hippocampus_radii(dims) * scale, 0.75)
    shift = rng.normal(0.0, 0.02, size=3) * np.array(dims)
    for side in (-1, 1):
        c = center + np.array([0.0, 0.08 * h, side * 0.2 * w]) + shift
        vol[_ellipsoid_mask(dims, c, radii)] = 1.0
    vol += cfg.noise * rng.standard_normal(dims)
    sigma = _TAG_SMOOTHING[tag]
    if sigma > 0:
        vol = gaussian_filter(vol, sigma, mode="nearest")
    if tag.endswith("Scaled"):
        vol = 1.1 * vol
    return vol


def synthesize_cohort(cfg: CohortConfig) -> List[Tuple[VolumeSample, ReportRecord]]:
    """Generate paired volumes and clinical records, class by class.

    Every subject draws a latent severity around its class centre. The
    severity shrinks a bilateral "hippocampus" ellipsoid (CN > MCI > AD) on
    top of a tissue envelope and gaussian noise, and lowers the MMSE/CDR
    fields of the paired record.
    """
    if len(cfg.counts) != len(LABELS) or min(cfg.counts) < 1:
        raise ValueError(f"need at least one sample per class, got counts {cfg.counts}")
    dims = tuple(int(x) for x in cfg.dims)
    if len(dims) != 3 or min(dims) < 8:
        raise ValueError(f"dims must be three extents >= 8 to hold the ellipsoids, got {dims}")
    rng = np.random.default_rng([cfg.seed, 0])
    cohort = []
    for label, count in zip(LABELS, cfg.counts):
        for i in range(count):
            tag = PROCESSING_TAGS[int(rng.integers(len(PROCESSING_TAGS)))]
            severity = draw_severity(label, cfg.severity_jitter, rng)
            vol = _synth_volume(severity, dims, tag, cfg, rng)
            sample = VolumeSample(VolumeGrid(vol), f"{label}_{i:04d}", label, tag)
            cohort.append((sample, sample_record(label, rng, severity)))
    return cohort


def signal_volume(grid: VolumeGrid, threshold: float = 0.75) -> int:
    """Voxel count of the bright hippocampal signal, measured after min-max normalization."""
    return int((normalize_intensity(grid).voxels > threshold).sum())


# --------------------------------------------------------------------------
# manifests and splits
# --------------------------------------------------------------------------


@dataclass
class ManifestEntry:
    path: str
    label: str
    split: str = ""


@dataclass
class DatasetManifest:
    entries: List[ManifestEntry]
    seed: int = 0
    class_counts: Dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        if not self.class_counts:
            self.class_counts = {lab: sum(e.label == lab for e in self.entries) for lab in LABELS}

    def subset(self, split: str) -> List[ManifestEntry]:
        return [e for e in self.entries if e.split == split]

    def save(self, path) -> None:
        lines = [f"# seed={self.seed}", "path\tlabel\tsplit"]
        lines += [f"{e.path}\t{e.label}\t{e.split}" for e in self.entries]
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "DatasetManifest":
        seed = 0
        entries = []
        for line in Path(path).read_text(encoding="utf-8").splitlines():
            if line.startswith("# seed="):
                seed = int(line.split("=", 1)[1])
            elif line and not line.startswith("#") and line != "path\tlabel\tsplit":
                p, label, split = line.split("\t")
                if label not in LABEL_INDEX:
                    raise ValueError(f"{path}: unknown label {label!r}")
                entries.append(ManifestEntry(p, label, split))
        return cls(entries, seed)


def split_dataset(manifest: DatasetManifest, train_fraction: float = 0.7, seed: int = 0) -> DatasetManifest:
    """Stratified shuffle-then-cut; each class keeps round(fraction * size) for training."""
    if not 0.0 < train_fraction < 1.0:
        raise ValueError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    entries = [ManifestEntry(e.path, e.label, "test") for e in manifest.entries]
    for k, label in enumerate(LABELS):
        idx = [i for i, e in enumerate(entries) if e.label == label]
        if not idx:
            continue
        if len(idx) < 2:
            raise ValueError(f"class {label} has {len(idx)} sample(s); at least 2 are needed to split")
        order = np.random.default_rng([seed, k]).permutation(len(idx))
        n_train = int(math.floor(train_fraction * len(idx) + 0.5))
        for j in order[:n_train]:
            entries[idx[j]].split = "train"
    return DatasetManifest(entries, seed)


# --------------------------------------------------------------------------
# binary volume format
# --------------------------------------------------------------------------

MAGIC = b"VOLGRID1"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4I")
_CHECKSUM = struct.Struct("<I")


class VolumeFormatError(ValueError):
    pass


class TruncatedVolumeError(VolumeFormatError):
    pass


class VolumeLengthError(VolumeFormatError):
    pass


class UnsupportedVersionError(VolumeFormatError):
    pass


class ChecksumError(VolumeFormatError):
    pass


def _byte_sum(payload: bytes) -> int:
    return int(np.frombuffer(payload, dtype=np.uint8).sum(dtype=np.uint64)) & 0xFFFFFFFF


def encode_volume(grid: VolumeGrid) -> bytes:
    d, h, w = grid.dims
    payload = grid.voxels.astype("<f4").tobytes()
    checksum = _byte_sum(payload)
    return MAGIC + _HEADER.pack(FORMAT_VERSION, d, h, w) + payload + _CHECKSUM.pack(checksum)


def decode_volume(blob: bytes, where: str = "<bytes>") -> VolumeGrid:
    head = len(MAGIC) + _HEADER.size
    if len(blob) < head:
        raise TruncatedVolumeError(f"{where}: truncated header ({len(blob)} bytes)")
    if blob[: len(MAGIC)] != MAGIC:
        raise VolumeFormatError(f"{where}: bad magic {blob[:len(MAGIC)]!r}")
    version, d, h, w = _HEADER.unpack_from(blob, len(MAGIC))
    if version != FORMAT_VERSION:
        raise UnsupportedVersionError(f"{where}: unsupported version {version}")
    n_bytes = 4 * d * h * w
    expected = head + n_bytes + _CHECKSUM.size
    if len(blob) < expected:
        raise TruncatedVolumeError(f"{where}: truncated payload, {len(blob)} of {expected} bytes")
    if len(blob) > expected:
        raise VolumeLengthError(f"{where}: {len(blob) - expected} trailing bytes beyond dims {d}x{h}x{w}")
    payload = blob[head : head + n_bytes]
    (stored,) = _CHECKSUM.unpack_from(blob, head + n_bytes)
    if stored != _byte_sum(payload):
        raise ChecksumError(f"{where}: checksum mismatch")
    voxels = np.frombuffer(payload, dtype="<f4").astype(np.float64).reshape(d, h, w)
    return VolumeGrid(voxels)


def _sidecar(path: Path) -> Path:
    return path.with_suffix(".meta")


def store_volume(sample: VolumeSample, path) -> None:
    """Write ``path`` (binary grid, float32 payload) and its ``.meta`` sidecar."""
    path = Path(path)
    path.write_bytes(encode_volume(sample.grid))
    meta = f"subject_id={sample.subject_id}\nlabel={sample.label}\nprocessing_tag={sample.processing_tag}\n"
    _sidecar(path).write_text(meta, encoding="utf-8")


def load_volume(path) -> VolumeSample:
    path = Path(path)
    grid = decode_volume(path.read_bytes(), str(path))
    meta = dict(
        line.split("=", 1) for line in _sidecar(path).read_text(encoding="utf-8").splitlines() if line
    )
    return VolumeSample(grid, meta["subject_id"], meta["label"], meta.get("processing_tag", ""))
