"""Self-checks run by ``brainadapter verify``.

Each check returns a :class:`CheckResult`; the suite passes only if every
check does. ``inject_grad_fault`` corrupts one backward rule so the suite
can be shown to fail loudly.
"""

from __future__ import annotations

import contextlib
import math
import time
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Dict, Iterator, List, Optional, Tuple

import numpy as np

from . import ops
from .adapter import AdapterConfig
from .alignment import contrastive_loss
from .encoders import TextEncoderConfig, VisionEncoderConfig
from .gradcheck import grad_check, grad_check_parameters
from .metrics import classification_report
from .model import BrainAdapterModel, ModelConfig
from .optim import AdamW, group_lr
from .tensor import Tensor, build_tape
from .trainer import FPM, TLP, FreezePlan

PRIMITIVE_TOL = 1e-6
PRIMITIVE_STEP = 1e-4
END_TO_END_TOL = 1e-4
END_TO_END_STEP = 1e-3
N_POINTS = 10


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str = ""

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}" + (f"  {self.detail}" if self.detail else "")


# --------------------------------------------------------------------------
# gradient checks
# --------------------------------------------------------------------------


def _away_from_zero(rng, shape, margin=0.1) -> np.ndarray:
    """Random values with |x| >= margin, keeping finite differences off ReLU/clip kinks."""
    x = rng.normal(size=shape)
    return np.sign(x) * (margin + np.abs(x))


def _weighted(fn: Callable[[Tensor], Tensor], w: np.ndarray) -> Callable[[Tensor], Tensor]:
    """Scalarize ``fn`` with a fixed random weighting so every output coordinate matters."""
    return lambda t: ops.sum(ops.mul(fn(t), w))


def primitive_cases(rng: np.random.Generator) -> List[Tuple[str, Callable[[Tensor], Tensor], np.ndarray]]:
    """(name, scalar function, evaluation point) for one random draw of every primitive."""
    cases = []

    def case(name, fn, point, out_shape):
        cases.append((name, _weighted(fn, rng.normal(size=out_shape)), point))

    k = rng.normal(size=(2, 2, 3, 3, 3))
    x = rng.normal(size=(2, 4, 3, 3))
    case("conv3d.input", lambda t: ops.conv3d(t, Tensor(k), (2, 1, 1), 1), x, (2, 2, 3, 3))
    case("conv3d.kernel", lambda t: ops.conv3d(Tensor(x), t, (2, 1, 1), 1), k, (2, 2, 3, 3))
    b = rng.normal(size=(4, 3))
    a = rng.normal(size=(2, 4))
    case("matmul.left", lambda t: ops.matmul(t, Tensor(b)), a, (2, 3))
    case("matmul.right", lambda t: ops.matmul(Tensor(a), t), b, (2, 3))
    case("softmax_rows", ops.softmax_rows, rng.normal(size=(3, 4)), (3, 4))
    case("log_softmax_rows", ops.log_softmax_rows, rng.normal(size=(3, 4)), (3, 4))
    case("relu", ops.relu, _away_from_zero(rng, (3, 4)), (3, 4))
    case("tanh", ops.tanh, rng.normal(size=(3, 4)), (3, 4))
    case("exp", ops.exp, rng.normal(size=(3, 4)), (3, 4))
    case("log", ops.log, 0.5 + rng.random((3, 4)), (3, 4))
    case("clip", lambda t: ops.clip(t, -0.05, 0.05), _away_from_zero(rng, (3, 4), 0.0) * 0.2, (3, 4))
    case("l2_normalize", ops.l2_normalize, rng.normal(size=(3, 4)), (3, 4))
    case("layer_norm", ops.layer_norm, rng.normal(size=(3, 5)), (3, 5))
    other = rng.normal(size=(2, 3))
    case("concat", lambda t: ops.concat([t, Tensor(other)], axis=0), rng.normal(size=(3, 3)), (5, 3))
    case("sum", lambda t: ops.sum(t, axis=1, keepdims=True), rng.normal(size=(3, 4)), (3, 1))
    case("mean", lambda t: ops.mean(t, axis=0), rng.normal(size=(3, 4)), (4,))
    case("reshape", lambda t: ops.reshape(t, (4, 3)), rng.normal(size=(3, 4)), (4, 3))
    case("transpose", lambda t: ops.transpose(t, (2, 0, 1)), rng.normal(size=(2, 3, 4)), (4, 2, 3))
    ids = np.array([[0, 2, 2], [1, 0, 3]])
    case("take", lambda t: ops.take(t, ids), rng.normal(size=(4, 3)), (2, 3, 3))
    y, full = rng.normal(size=(1, 4)), rng.normal(size=(3, 4))
    case("add.broadcast", lambda t: ops.add(t, Tensor(y)), rng.normal(size=(3, 4)), (3, 4))
    case("mul.broadcast", lambda t: ops.mul(Tensor(full), t), y, (3, 4))
    return cases


def check_primitive_gradients(seed: int = 0, n_points: int = N_POINTS) -> List[CheckResult]:
    worst: Dict[str, float] = {}
    for point_idx in range(n_points):
        rng = np.random.default_rng([seed, 100, point_idx])
        for name, fn, point in primitive_cases(rng):
            err = grad_check(fn, point, PRIMITIVE_STEP)
            worst[name] = max(worst.get(name, 0.0), err)
    return [
        CheckResult(f"grad_check {name}", err < PRIMITIVE_TOL, f"max rel err {err:.2e} over {n_points} points")
        for name, err in worst.items()
    ]


def toy_model_config() -> ModelConfig:
    """A small but complete model: every stage of the real pipeline, tiny extents."""
    return ModelConfig(
        adapter=AdapterConfig(input_dims=(4, 2, 4), depth_reduction=2, stage_channels=(1,)),
        vision=VisionEncoderConfig(token_dim=6, n_frozen_blocks=1, proj_dim=4, patch=(2, 2, 2)),
        text=TextEncoderConfig(vocab_size=12, token_dim=6, n_frozen_blocks=1, proj_dim=4),
        tau_init=0.5,
    )


def relu_masks(loss: Tensor) -> np.ndarray:
    """Concatenated on/off pattern of every ReLU in the graph of ``loss``."""
    masks = [(r.fn.inputs[0].data > 0).ravel() for r in build_tape(loss).records if r.op == "relu"]
    return np.concatenate(masks) if masks else np.zeros(0, dtype=bool)


def kink_free(loss_fn: Callable[[], Tensor], params, step: float) -> bool:
    """True if no single-coordinate +-step perturbation flips any ReLU.

    A central difference across a flip measures the kink rather than the
    derivative, so such points say nothing about the backward rules.
    """
    base = relu_masks(loss_fn())
    for p in params:
        flat = p.data.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            try:
                for delta in (step, -step):
                    flat[i] = orig + delta
                    if not np.array_equal(relu_masks(loss_fn()), base):
                        return False
            finally:
                flat[i] = orig
    return True


def toy_problem(seed: int = 0, step: float = END_TO_END_STEP, max_draws: int = 50):
    """A 2-sample toy model and batch on which a step-``step`` check is kink-free.

    Draws are deterministic in ``seed``; the first kink-free one is used.
    Volumes are scaled so normalized activations sit at unit-order variance.
    """
    for draw in range(max_draws):
        model = BrainAdapterModel(toy_model_config(), init_seed=seed + draw)
        FreezePlan(TLP).apply(model)
        rng = np.random.default_rng([seed, 101, draw])
        # A nonzero residual branch so its first conv also receives gradient.
        model.adapter.params["adapter.res.conv2.weight"].data[...] = rng.normal(0.0, 0.3, size=(1, 1, 3, 3, 3))
        volumes = 2.0 * rng.random((2, 4, 2, 4))
        tokens = np.array([[2, 5, 7, 0], [3, 3, 9, 11]])
        labels = np.array([0, 2])

        def loss_fn(model=model, volumes=volumes) -> Tensor:
            return model.loss(model.forward(volumes, tokens), labels).joint

        if kink_free(loss_fn, [p for p in model.parameters() if p.trainable], step):
            return model, loss_fn
    raise RuntimeError(f"no kink-free toy problem within {max_draws} draws")


def check_end_to_end_gradient(seed: int = 0) -> CheckResult:
    """Joint loss of a 2-sample toy model against central differences over every trainable parameter."""
    model, loss_fn = toy_problem(seed)
    trainable = [p for p in model.parameters() if p.trainable]
    err = grad_check_parameters(loss_fn, trainable, END_TO_END_STEP)
    n = sum(p.data.size for p in trainable)
    return CheckResult("grad_check end-to-end joint loss", err < END_TO_END_TOL, f"max rel err {err:.2e} over {n} params")


# --------------------------------------------------------------------------
# contrastive closed forms
# --------------------------------------------------------------------------


def check_contrastive_closed_forms(seed: int = 0) -> List[CheckResult]:
    out = []
    rng = np.random.default_rng([seed, 102])
    u1 = rng.normal(size=(1, 5))
    single = contrastive_loss(Tensor(u1), Tensor(rng.normal(size=(1, 5))), 0.07).total.item()
    out.append(CheckResult("contrastive N=1 is 0", single == 0.0, f"loss {single!r}"))

    worst = 0.0
    for n in (2, 4, 8):
        u = np.tile(rng.normal(size=(1, 6)), (n, 1))
        v = np.tile(rng.normal(size=(1, 6)), (n, 1))
        worst = max(worst, abs(contrastive_loss(Tensor(u), Tensor(v), 0.3).total.item() - math.log(n)))
    out.append(CheckResult("contrastive equal similarity = ln N", worst < 1e-9, f"max abs err {worst:.1e}"))

    worst = 0.0
    for n in (2, 4, 8):
        eye = np.eye(n, 8)
        for tau in (0.07, 1.0, 10.0):
            expected = math.log1p((n - 1) * math.exp(-1.0 / tau))
            worst = max(worst, abs(contrastive_loss(Tensor(eye), Tensor(eye), tau).total.item() - expected))
    out.append(CheckResult("contrastive orthonormal closed form", worst < 1e-9, f"max abs err {worst:.1e}"))

    worst = 0.0
    for n in (2, 4, 8):
        u, v = rng.normal(size=(n, 6)), rng.normal(size=(n, 6))
        worst = max(worst, abs(contrastive_loss(Tensor(u), Tensor(v), 1e3).total.item() - math.log(n)))
    out.append(CheckResult("contrastive tau=1e3 near ln N", worst < 1e-3, f"max abs err {worst:.1e}"))

    same = True
    for b in range(20):
        r = np.random.default_rng([seed, 103, b])
        u, v = r.normal(size=(8, 16)), r.normal(size=(8, 16))
        same &= contrastive_loss(Tensor(u), Tensor(v), 0.07).total.item() == contrastive_loss(
            Tensor(v), Tensor(u), 0.07
        ).total.item()
    out.append(CheckResult("contrastive modality symmetry", bool(same), "20 batches, bit-exact"))
    return out


# --------------------------------------------------------------------------
# freeze census
# --------------------------------------------------------------------------


def freeze_census(mode: str, config: Optional[ModelConfig] = None, steps: int = 10, seed: int = 0):
    """Run ``steps`` AdamW steps in ``mode``; return (changed names, plan names, adapter grad norm)."""
    config = config or ModelConfig()
    model = BrainAdapterModel(config, init_seed=seed)
    plan = FreezePlan(mode)
    plan.apply(model)
    before = {n: p.data.tobytes() for n, p in model.named_parameters().items()}
    rng = np.random.default_rng([seed, 104])
    n, dims = 4, config.adapter.input_dims
    volumes = rng.random((n,) + tuple(dims))
    tokens = rng.integers(2, config.text.vocab_size, size=(n, 12))
    labels = np.arange(n) % 3
    opt = AdamW(model.parameters(), weight_decay=0.01, lr_for=group_lr(1e-3, 1e-4, 1e-2))
    adapter_grad = 0.0
    for _ in range(steps):
        model.zero_grad()
        model.loss(model.forward(volumes, tokens), labels).joint.backward()
        adapter_grad = max(
            adapter_grad, max(float(np.abs(p.grad).max()) for p in model.adapter.parameters() if p.grad is not None)
        )
        opt.step()
    changed = {n for n, p in model.named_parameters().items() if p.data.tobytes() != before[n]}
    return changed, plan.trainable_names(model), adapter_grad


def check_freeze_census(config: Optional[ModelConfig] = None) -> List[CheckResult]:
    out = []
    for mode in (FPM, TLP):
        changed, expected, adapter_grad = freeze_census(mode, config)
        detail = f"{len(changed)} changed, {len(expected)} in plan"
        if changed != expected:
            detail += f"; unexpected {sorted(changed - expected)}, unchanged {sorted(expected - changed)}"
        out.append(CheckResult(f"freeze census {mode}", changed == expected, detail))
        if mode == FPM:
            out.append(
                CheckResult("adapter gradient through frozen encoder", adapter_grad > 0, f"max |grad| {adapter_grad:.2e}")
            )
    return out


# --------------------------------------------------------------------------
# metrics oracle
# --------------------------------------------------------------------------


def brute_force_metrics(labels, preds, k: int):
    """Exact rational PRE/SEN/F1 from explicit counting, rounded to float once at the end."""
    labels, preds = list(labels), list(preds)
    pre, sen, f1, support = [], [], [], []
    for c in range(k):
        tp = sum(1 for y, p in zip(labels, preds) if y == c and p == c)
        fp = sum(1 for y, p in zip(labels, preds) if y != c and p == c)
        fn = sum(1 for y, p in zip(labels, preds) if y == c and p != c)
        p_c = Fraction(tp, tp + fp) if tp + fp else Fraction(0)
        s_c = Fraction(tp, tp + fn) if tp + fn else Fraction(0)
        f_c = 2 * p_c * s_c / (p_c + s_c) if p_c + s_c else Fraction(0)
        pre.append(p_c)
        sen.append(s_c)
        f1.append(f_c)
        support.append(tp + fn)
    total = sum(support)
    macro = {key: sum(vals) / k for key, vals in (("PRE", pre), ("SEN", sen), ("F1", f1))}
    weighted = {
        key: sum(Fraction(s, total) * x for s, x in zip(support, vals))
        for key, vals in (("PRE", pre), ("SEN", sen), ("F1", f1))
    }
    return pre, sen, f1, macro, weighted


def check_metrics_oracle(seed: int = 0, trials: int = 100, length: int = 50, tol: float = 1e-15) -> List[CheckResult]:
    """Per-class values must agree exactly; averages to a few ulps of the exact rational value."""
    names = ("AD", "CN", "MCI")
    per_class_ok, avg_err = True, 0.0
    for t in range(trials):
        rng = np.random.default_rng([seed, 105, t])
        labels, preds = rng.integers(0, 3, length), rng.integers(0, 3, length)
        rep = classification_report(labels, preds, names)
        pre, sen, f1, macro, weighted = brute_force_metrics(labels, preds, 3)
        per_class_ok &= list(rep.precision) == [float(x) for x in pre]
        per_class_ok &= list(rep.sensitivity) == [float(x) for x in sen]
        per_class_ok &= bool(np.all(np.abs(rep.f1 - np.array([float(x) for x in f1])) <= tol))
        for key in ("PRE", "SEN", "F1"):
            avg_err = max(avg_err, abs(rep.macro[key] - float(macro[key])), abs(rep.weighted[key] - float(weighted[key])))
    equal_ok = True
    for t in range(trials):
        rng = np.random.default_rng([seed, 106, t])
        labels = rng.permutation(np.repeat(np.arange(3), 10))
        rep = classification_report(labels, rng.integers(0, 3, labels.size), names)
        equal_ok &= all(abs(rep.macro[k] - rep.weighted[k]) <= tol for k in ("PRE", "SEN", "F1"))
    return [
        CheckResult("metrics per-class oracle", bool(per_class_ok), f"{trials} random label/prediction vectors"),
        CheckResult("metrics averages oracle", avg_err <= tol, f"max abs err {avg_err:.1e}"),
        CheckResult("metrics W-Avg = M-Avg at equal support", bool(equal_ok)),
    ]


# --------------------------------------------------------------------------
# fault injection and the suite
# --------------------------------------------------------------------------


@contextlib.contextmanager
def inject_grad_fault(scale: float = 1.01) -> Iterator[None]:
    """Temporarily scale every gradient returned by the conv3d backward rule."""
    original = ops.Conv3d.backward

    def faulty(self, grad):
        return tuple(None if g is None else g * scale for g in original(self, grad))

    ops.Conv3d.backward = faulty
    try:
        yield
    finally:
        ops.Conv3d.backward = original


def run_suite(
    seed: int = 0,
    census_config: Optional[ModelConfig] = None,
    inject_fault: bool = False,
    report: Callable[[str], None] = print,
) -> List[CheckResult]:
    start = time.perf_counter()
    ctx = inject_grad_fault() if inject_fault else contextlib.nullcontext()
    results: List[CheckResult] = []
    with ctx:
        for group in (
            lambda: check_primitive_gradients(seed),
            lambda: [check_end_to_end_gradient(seed)],
            lambda: check_contrastive_closed_forms(seed),
            lambda: check_freeze_census(census_config),
            lambda: check_metrics_oracle(seed),
        ):
            for res in group():
                results.append(res)
                report(res.line())
    failed = [r.name for r in results if not r.passed]
    report(f"{len(results) - len(failed)}/{len(results)} checks passed in {time.perf_counter() - start:.1f}s")
    if failed:
        report("failed: " + ", ".join(failed))
    return results
