"""Command-line entry point: synth, train, eval, export-embeddings, verify, shapes.

Exit codes: 0 success, 1 configuration/validation error, 2 data error,
3 verification failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import List, Optional

from .config import ConfigError, RunConfig, load_config
from .dataset import MANIFEST_NAME, DataFileError, VOCAB_NAME, load_split, synthesize_split, training_vocab, write_dataset
from .model import BrainAdapterModel
from .report import Vocabulary
from .shapes import desk_trace, full_scale_trace
from .tensor import ShapeError
from .trainer import (
    CheckpointError,
    evaluate,
    export_embeddings,
    history_text,
    load_checkpoint,
    save_checkpoint,
    train,
)
from .verify import run_suite
from .volume import LABELS, DatasetManifest, VolumeFormatError

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_VERIFY = 0, 1, 2, 3
CONFIG_ECHO = "config.resolved"


class DataError(Exception):
    pass


def _global_flags(parser: argparse.ArgumentParser, suppress: bool) -> None:
    default = argparse.SUPPRESS if suppress else None
    parser.add_argument("--config", metavar="PATH", default=default, help="key=value run configuration")
    parser.add_argument("--seed", type=int, default=default, help="overrides the config seed")
    parser.add_argument("--out", metavar="DIR", default=default, help="output directory")
    parser.add_argument("--threads", type=int, default=argparse.SUPPRESS if suppress else 1, help="worker bound")
    parser.add_argument("--mode", choices=("fpm", "tlp"), default=default, help="freeze plan")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="brainadapter", description=__doc__.splitlines()[0])
    _global_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)

    def command(name, help_text):
        p = sub.add_parser(name, help=help_text)
        _global_flags(p, suppress=True)
        return p

    command("synth", "write a synthetic cohort (volumes, reports, vocabulary, manifest)")
    p = command("train", "train on a synthesized dataset, then evaluate on its test split")
    p.add_argument("--data", metavar="DIR", required=True)
    p.add_argument("--epochs", type=int, help="overrides train.epochs")
    p = command("eval", "score a checkpoint on a dataset split")
    p.add_argument("--data", metavar="DIR", required=True)
    p.add_argument("--checkpoint", metavar="DIR", required=True)
    p.add_argument("--split", default="test", choices=("train", "test"))
    p = command("export-embeddings", "write fused embeddings and their 2D projection as CSV")
    p.add_argument("--data", metavar="DIR", required=True)
    p.add_argument("--checkpoint", metavar="DIR", required=True)
    p.add_argument("--split", default="test", choices=("train", "test"))
    p = command("verify", "run gradient, closed-form, freeze-census and metrics checks")
    p.add_argument("--inject-grad-fault", action="store_true", help="corrupt the conv3d backward rule (test hook)")
    command("shapes", "print symbolic shape traces at desk and full scale")
    return parser


def resolve_config(args) -> RunConfig:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.mode is not None:
        cfg.train.mode = args.mode
    if getattr(args, "epochs", None) is not None:
        cfg.train.epochs = args.epochs
    if args.threads < 1:
        raise ConfigError(f"--threads must be >= 1, got {args.threads}")
    return cfg.resolved()


def _out_dir(args, default: str) -> Path:
    out = Path(args.out or default)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {out}: {exc}") from None
    return out


def _write(path: Path, text: str) -> None:
    path.write_text(text, encoding="utf-8")


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------


def cmd_synth(cfg: RunConfig, out: Path) -> int:
    pairs, manifest = synthesize_split(cfg.cohort, cfg.data.train_fraction)
    vocab = training_vocab(pairs, manifest, cfg.model.text.vocab_size)
    write_dataset(pairs, manifest, vocab, out)
    _write(out / CONFIG_ECHO, cfg.to_text())
    for label in LABELS:
        n_train = sum(1 for e in manifest.entries if e.label == label and e.split == "train")
        n_test = sum(1 for e in manifest.entries if e.label == label and e.split == "test")
        print(f"{label}\ttotal={n_train + n_test}\ttrain={n_train}\ttest={n_test}")
    print(f"train={len(manifest.subset('train'))} test={len(manifest.subset('test'))} vocab={len(vocab)}")
    return EXIT_OK


def _load_data(cfg: RunConfig, data_dir: Path, splits):
    manifest_path = data_dir / MANIFEST_NAME
    if not manifest_path.is_file():
        raise DataError(f"{manifest_path}: no manifest (run synth first)")
    manifest = DatasetManifest.load(manifest_path)
    if manifest.seed != cfg.seed:
        raise ConfigError(f"{manifest_path} was synthesized with seed {manifest.seed}, config seed is {cfg.seed}")
    vocab = Vocabulary.load(data_dir / VOCAB_NAME)
    if len(vocab) > cfg.model.text.vocab_size:
        raise ConfigError(f"vocabulary has {len(vocab)} tokens but text.vocab_size is {cfg.model.text.vocab_size}")
    dims = cfg.model.adapter.input_dims
    return [load_split(data_dir, s, vocab, cfg.data.max_len, dims) for s in splits]


def cmd_train(cfg: RunConfig, data_dir: Path, out: Path) -> int:
    train_set, test_set = _load_data(cfg, data_dir, ("train", "test"))
    model = BrainAdapterModel(cfg.model, init_seed=cfg.seed)
    _write(out / CONFIG_ECHO, cfg.to_text())
    emb_dir = out / "embeddings"
    emb_dir.mkdir(exist_ok=True)
    separations = []

    def on_epoch_end(epoch, m):
        export = export_embeddings(m, test_set, epoch, emb_dir / f"epoch_{epoch:02d}.csv")
        separations.append(f"epoch={epoch} separation={export.separation!r}")
        print(f"epoch {epoch}: separation {export.separation:.4f}", flush=True)

    batch_log: List[str] = []
    history = train(cfg.train, train_set, model, on_epoch_end=on_epoch_end, batch_log=batch_log)
    report = evaluate(model, test_set)
    save_checkpoint(model, out / "checkpoint")
    _write(out / "history.txt", history_text(history, batch_log))
    _write(out / "metrics.txt", report.to_text())
    _write(out / "separation.txt", "\n".join(separations) + "\n")
    for rec in history:
        print(rec.to_line())
    print(report.to_text(), end="")
    return EXIT_OK


def _restored_model(cfg: RunConfig, checkpoint: Path) -> BrainAdapterModel:
    model = BrainAdapterModel(cfg.model, init_seed=cfg.seed)
    load_checkpoint(model, checkpoint)
    return model


def cmd_eval(cfg: RunConfig, data_dir: Path, checkpoint: Path, split: str, out: Optional[Path]) -> int:
    (examples,) = _load_data(cfg, data_dir, (split,))
    report = evaluate(_restored_model(cfg, checkpoint), examples)
    print(report.to_text(), end="")
    if out is not None:
        _write(out / f"metrics_{split}.txt", report.to_text())
    return EXIT_OK


def cmd_export(cfg: RunConfig, data_dir: Path, checkpoint: Path, split: str, out: Path) -> int:
    (examples,) = _load_data(cfg, data_dir, (split,))
    export = export_embeddings(_restored_model(cfg, checkpoint), examples, 0, out / f"embeddings_{split}.csv")
    print(f"wrote {len(examples)} rows to {out / f'embeddings_{split}.csv'}; separation {export.separation:.4f}")
    return EXIT_OK


def cmd_verify(cfg: RunConfig, inject_fault: bool) -> int:
    results = run_suite(cfg.seed, census_config=cfg.model, inject_fault=inject_fault)
    return EXIT_OK if all(r.passed for r in results) else EXIT_VERIFY


def cmd_shapes(cfg: RunConfig) -> int:
    v = cfg.model.vision
    print(desk_trace(cfg.model.adapter, v.patch, v.token_dim, v.proj_dim).to_text())
    print(full_scale_trace(cfg.model.adapter, v.proj_dim).to_text(), end="")
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "shapes":
            # Shape tracing must report indivisible dims by stage, not reject them up front.
            cfg = load_config(args.config)
            return cmd_shapes(cfg)
        cfg = resolve_config(args)
        if args.command == "synth":
            return cmd_synth(cfg, _out_dir(args, "data"))
        if args.command == "train":
            return cmd_train(cfg, Path(args.data), _out_dir(args, "run"))
        if args.command == "eval":
            out = _out_dir(args, ".") if args.out else None
            return cmd_eval(cfg, Path(args.data), Path(args.checkpoint), args.split, out)
        if args.command == "export-embeddings":
            return cmd_export(cfg, Path(args.data), Path(args.checkpoint), args.split, _out_dir(args, "."))
        if args.command == "verify":
            return cmd_verify(cfg, args.inject_grad_fault)
    except (ConfigError, ShapeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, DataFileError, VolumeFormatError, CheckpointError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    raise AssertionError(f"unhandled command {args.command}")
