"""Residual 3D-conv adapter in front of frozen vision/text encoder stubs,
trained with a contrastive + cross-entropy objective on synthetic volumes
and clinical reports.

Submodules are imported lazily so that ``python -m brainadapter --threads N``
can cap BLAS threads before numpy loads.
"""

import importlib

__version__ = "0.1.0"

_EXPORTS = {
    "Tensor": "tensor",
    "Parameter": "tensor",
    "no_grad": "tensor",
    "grad_check": "gradcheck",
    "AdapterConfig": "adapter",
    "BrainAdapter": "adapter",
    "ModelConfig": "model",
    "BrainAdapterModel": "model",
    "contrastive_loss": "alignment",
    "CohortConfig": "volume",
    "prepare_cohort": "dataset",
    "TrainConfig": "trainer",
    "FreezePlan": "trainer",
    "train": "trainer",
    "evaluate": "trainer",
    "export_embeddings": "trainer",
    "classification_report": "metrics",
    "RunConfig": "config",
    "load_config": "config",
}

__all__ = sorted(_EXPORTS) + ["__version__"]


def __getattr__(name):
    module = _EXPORTS.get(name)
    if module is None:
        raise AttributeError(f"module 'brainadapter' has no attribute {name!r}")
    value = getattr(importlib.import_module(f".{module}", __name__), name)
    globals()[name] = value
    return value
