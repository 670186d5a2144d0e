"""Walk a volume through the adapter and the patch encoder, at desk and full scale.

The full-scale trace never allocates a 256^3 buffer; it is pure shape arithmetic.
Run: python3 demos/01_shape_contract.py
"""
import numpy as np

from brainadapter.adapter import AdapterConfig, BrainAdapter
from brainadapter.model import ModelConfig
from brainadapter.shapes import desk_trace, full_scale_trace


def main() -> None:
    cfg = ModelConfig()
    print(full_scale_trace(cfg.adapter, cfg.vision.proj_dim).to_text())
    print(desk_trace(cfg.adapter, cfg.vision.patch, cfg.vision.token_dim, cfg.vision.proj_dim).to_text())

    # The symbolic trace and a real forward pass agree on the adapter output.
    small = AdapterConfig(input_dims=(16, 16, 16), depth_reduction=4, stage_channels=(2, 2))
    adapter = BrainAdapter(small, np.random.default_rng(0))
    z = adapter(np.random.default_rng(1).random((1, 16, 16, 16)))
    print(f"real forward (16,16,16) -> {z.shape[1:]}, predicted {small.output_dims((16, 16, 16))}")


if __name__ == "__main__":
    main()
