"""Bottleneck adapters for the vision tower.

Each adapter is a down-project / ReLU / up-project branch running parallel
to a block's MLP, scaled by a fixed residual factor. The up-projection is
zero-initialized, so a freshly installed (or dry-run) adapter leaves the
backbone's outputs untouched; training moves it away from identity.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import torch
from torch import nn

from .model import DualEncoder


@dataclass(frozen=True)
class AdapterConfig:
    bottleneck: int = 64
    scale: float = 0.1

    def __post_init__(self):
        if self.bottleneck < 1:
            raise ValueError("bottleneck must be at least 1")
        if self.scale <= 0:
            raise ValueError("scale must be positive")

    def to_dict(self) -> dict:
        return asdict(self)


class BottleneckAdapter(nn.Module):
    def __init__(self, width: int, config: AdapterConfig):
        super().__init__()
        self.down = nn.Linear(width, config.bottleneck)
        self.up = nn.Linear(config.bottleneck, width)
        self.act = nn.ReLU()
        self.scale = config.scale
        nn.init.zeros_(self.up.weight)
        nn.init.zeros_(self.up.bias)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.scale * self.up(self.act(self.down(x)))


def install_adapters(model: DualEncoder, config: AdapterConfig,
                     seed: int = 0) -> nn.ModuleList:
    """Attach one adapter per vision block; returns the trainable modules.

    Down-projections are seeded for reproducibility; up-projections start
    at zero (identity behavior). The backbone stays frozen.
    """
    gen = torch.Generator().manual_seed(seed)
    adapters = nn.ModuleList()
    width = model.config.vision_width
    for block in model.visual.blocks:
        adapter = BottleneckAdapter(width, config)
        with torch.no_grad():
            adapter.down.weight.copy_(
                torch.randn(adapter.down.weight.shape, generator=gen)
                * (width ** -0.5))
            adapter.down.bias.zero_()
        block.adapter = adapter
        adapters.append(adapter)
    return adapters


def remove_adapters(model: DualEncoder) -> None:
    for block in model.visual.blocks:
        block.adapter = None


def adapter_state_dict(adapters: nn.ModuleList) -> dict:
    return {k: v.cpu() for k, v in adapters.state_dict().items()}


def load_adapter_state(adapters: nn.ModuleList, state: dict) -> None:
    adapters.load_state_dict(state)
