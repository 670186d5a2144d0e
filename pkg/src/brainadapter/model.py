"""Full image/text model: adapter, frozen encoders, head, temperature and loss weights."""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Dict, NamedTuple

import numpy as np

from .adapter import AdapterConfig, BrainAdapter, adapter_forward
from .alignment import (
    ClassificationHead,
    ContrastiveTerms,
    DEFAULT_TAU,
    HeadConfig,
    LossWeights,
    Temperature,
    classification_head,
    contrastive_loss,
    cross_entropy,
    joint_loss,
)
from .encoders import PatchSpec, TextEncoder, TextEncoderConfig, VisionEncoder, VisionEncoderConfig
from .tensor import Parameter, Tensor


@dataclass
class ModelConfig:
    adapter: AdapterConfig = field(default_factory=AdapterConfig)
    vision: VisionEncoderConfig = field(default_factory=VisionEncoderConfig)
    text: TextEncoderConfig = field(default_factory=TextEncoderConfig)
    head_hidden: int = 0  # 0 -> 2 * proj_dim
    tau_init: float = DEFAULT_TAU
    learn_loss_weights: bool = True
    lambda1: float = 1.0
    lambda2: float = 1.0

    def validate(self) -> None:
        self.adapter.validate()
        if self.vision.proj_dim != self.text.proj_dim:
            raise ValueError(
                f"vision.proj_dim ({self.vision.proj_dim}) must equal text.proj_dim ({self.text.proj_dim})"
            )
        if self.adapter.out_channels != 1:
            raise ValueError("the vision encoder patchifies a single-channel volume; last stage must have 1 channel")
        PatchSpec(tuple(self.vision.patch)).grid(self.adapter.output_dims())


class Outputs(NamedTuple):
    u: Tensor
    v: Tensor
    logits: Tensor


class LossTerms(NamedTuple):
    joint: Tensor
    contrastive: ContrastiveTerms
    ce: Tensor


class BrainAdapterModel:
    def __init__(self, config: ModelConfig, init_seed: int = 0):
        config.validate()
        self.config = config
        rng = np.random.default_rng([init_seed, 1])
        self.adapter = BrainAdapter(config.adapter, rng)
        self.vision = VisionEncoder(config.vision, config.adapter.output_dims())
        self.text = TextEncoder(config.text)
        d = config.vision.proj_dim
        self.head = ClassificationHead(HeadConfig(d, config.head_hidden or 2 * d), rng)
        self.temperature = Temperature(config.tau_init)
        self.loss_weights = LossWeights(config.lambda1, config.lambda2, trainable=config.learn_loss_weights)

    def named_parameters(self) -> "OrderedDict[str, Parameter]":
        out: Dict[str, Parameter] = OrderedDict()
        for group in (
            self.adapter.parameters(),
            self.vision.parameters(),
            self.text.parameters(),
            self.head.parameters(),
            [self.temperature.param],
            self.loss_weights.parameters(),
        ):
            for p in group:
                if p.name in out:
                    raise ValueError(f"duplicate parameter name {p.name}")
                out[p.name] = p
        return out

    def parameters(self):
        return list(self.named_parameters().values())

    def census(self) -> Dict[str, int]:
        params = self.parameters()
        return {
            "total": sum(p.data.size for p in params),
            "trainable": sum(p.data.size for p in params if p.trainable),
            "adapter": sum(p.data.size for p in self.adapter.parameters()),
        }

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def forward(self, volumes: np.ndarray, tokens: np.ndarray) -> Outputs:
        """``volumes`` is N x D x H x W, ``tokens`` is N x L."""
        x = Tensor(np.asarray(volumes, dtype=np.float64)[:, None])
        u = self.vision(adapter_forward(x, self.adapter))
        v = self.text(tokens)
        return Outputs(u, v, classification_head(u, v, self.head))

    def loss(self, out: Outputs, labels) -> LossTerms:
        con = contrastive_loss(out.u, out.v, self.temperature)
        ce = cross_entropy(out.logits, labels)
        return LossTerms(joint_loss(con.total, ce, self.loss_weights), con, ce)
