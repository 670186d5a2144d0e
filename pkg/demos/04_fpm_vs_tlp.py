"""Train the same model twice: projections frozen (FPM) and trainable (TLP).

Prints test macro-F1 and the embedding separation score after each epoch.
Takes a few minutes at the default cohort size on one core.
Run: python3 demos/04_fpm_vs_tlp.py [epochs]
"""
import sys
import time

from brainadapter.dataset import prepare_cohort
from brainadapter.model import BrainAdapterModel, ModelConfig
from brainadapter.trainer import TrainConfig, evaluate, export_embeddings, train
from brainadapter.volume import CohortConfig


def run(mode: str, data, epochs: int) -> float:
    model = BrainAdapterModel(ModelConfig(), init_seed=0)
    start = time.perf_counter()

    def report(epoch, m):
        sep = export_embeddings(m, data.test, epoch).separation
        f1 = evaluate(m, data.test).macro["F1"]
        print(f"  {mode} epoch {epoch}: test macro-F1 {f1:.3f}, separation {sep:.3f} ({time.perf_counter() - start:.0f}s)")

    train(TrainConfig(mode=mode, epochs=epochs), data.train, model, on_epoch_end=report)
    return evaluate(model, data.test).macro["F1"]


def main() -> None:
    epochs = int(sys.argv[1]) if len(sys.argv) > 1 else 9
    data = prepare_cohort(CohortConfig(seed=0))
    print(f"{len(data.train)} train / {len(data.test)} test subjects")
    scores = {mode: run(mode, data, epochs) for mode in ("fpm", "tlp")}
    print(f"final macro-F1: FPM {scores['fpm']:.3f}, TLP {scores['tlp']:.3f}")


if __name__ == "__main__":
    main()
