"""Depth and pose networks."""

from __future__ import annotations

from dataclasses import dataclass

import torch.nn as nn

from .decoder import DisparityHead, FusionDecoder, FusionStage
from .encoder import HighResEncoder
from .pose import PoseNet

__all__ = [
    "DepthNet",
    "DepthNetConfig",
    "DisparityHead",
    "FusionDecoder",
    "FusionStage",
    "HighResEncoder",
    "PoseNet",
    "PoseNetConfig",
    "build_pose_net",
    "count_parameters",
]


@dataclass(frozen=True)
class DepthNetConfig:
    """Depth network hyperparameters.

    branch_channels are the widths of the four encoder resolution levels
    (strides 4, 8, 16, 32); fusion_stages must retire the levels down to
    one; head_channels is the width of the disparity head's hidden conv.
    """

    branch_channels: tuple = (18, 36, 72, 144)
    fusion_stages: int = 3
    head_channels: int = 64
    stage_modules: tuple = (1, 3, 2)
    blocks_per_module: int = 2

    def __post_init__(self):
        if len(self.branch_channels) != 4:
            raise ValueError("branch_channels must have 4 entries")
        if self.fusion_stages != len(self.branch_channels) - 1:
            raise ValueError("fusion_stages must equal number of levels - 1")

    @staticmethod
    def default() -> "DepthNetConfig":
        return DepthNetConfig()

    @staticmethod
    def toy() -> "DepthNetConfig":
        """Small widths for CPU-scale experiments and tests."""
        return DepthNetConfig(branch_channels=(8, 16, 32, 64), head_channels=16,
                              stage_modules=(1, 1, 1), blocks_per_module=1)

    @staticmethod
    def preset(name: str) -> "DepthNetConfig":
        presets = {"default": DepthNetConfig.default, "toy": DepthNetConfig.toy}
        if name not in presets:
            raise ValueError("unknown model preset '{}' (choose from {})".format(name, sorted(presets)))
        return presets[name]()


@dataclass(frozen=True)
class PoseNetConfig:
    widths: tuple = (64, 64, 128, 256, 512)
    blocks: tuple = (2, 2, 2, 2)

    @staticmethod
    def default() -> "PoseNetConfig":
        return PoseNetConfig()

    @staticmethod
    def toy() -> "PoseNetConfig":
        return PoseNetConfig(widths=(16, 16, 32, 48, 64), blocks=(1, 1, 1, 1))

    @staticmethod
    def preset(name: str) -> "PoseNetConfig":
        presets = {"default": PoseNetConfig.default, "toy": PoseNetConfig.toy}
        if name not in presets:
            raise ValueError("unknown model preset '{}' (choose from {})".format(name, sorted(presets)))
        return presets[name]()


class DepthNet(nn.Module):
    """Single-image depth network: multi-resolution encoder, fusion
    decoder, one sigmoid disparity output at input resolution.

    The architecture is fully convolutional: the same weights accept any
    input size divisible by 32 and return a disparity map of matching
    size, which is what makes one trained model usable across test
    resolutions.
    """

    def __init__(self, config: DepthNetConfig | None = None):
        super().__init__()
        self.config = config or DepthNetConfig()
        self.encoder = HighResEncoder(
            branch_channels=self.config.branch_channels,
            stage_modules=self.config.stage_modules,
            blocks_per_module=self.config.blocks_per_module,
        )
        self.decoder = FusionDecoder(self.config.branch_channels, num_stages=self.config.fusion_stages)
        self.head = DisparityHead(self.config.branch_channels[0], self.config.head_channels)

    def forward(self, img):
        return self.head(self.decoder(self.encoder(img)))


def count_parameters(module: nn.Module) -> int:
    return sum(p.numel() for p in module.parameters())


def build_pose_net(config: PoseNetConfig | None = None) -> PoseNet:
    config = config or PoseNetConfig()
    return PoseNet(widths=config.widths, blocks=config.blocks)
