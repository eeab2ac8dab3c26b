"""Fusion decoder and disparity head.

Each decoder stage projects every incoming level with a 3x3 conv and adds
to each level the 1x1-projected, bilinearly upsampled features of all
coarser levels; the coarsest level then retires. Three stages reduce the
four encoder levels to a single stride-4 feature, from which the head
predicts one sigmoid disparity map at full input resolution.
"""

from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F


class FusionStage(nn.Module):
    """One round of project-and-aggregate over `n` resolution levels.

    Produces n - 1 outputs: level i (finest first) receives its own 3x3
    projection plus one upsampled 1x1 projection from every coarser
    level k > i.
    """

    def __init__(self, channels):
        super().__init__()
        n = len(channels)
        if n < 2:
            raise ValueError("fusion stage needs at least two levels")
        self.project = nn.ModuleList(
            nn.Sequential(nn.Conv2d(c, c, 3, padding=1), nn.ELU(inplace=True)) for c in channels
        )
        # lateral[i][k - i - 1] maps level k down to level i's width
        self.lateral = nn.ModuleList(
            nn.ModuleList(nn.Conv2d(channels[k], channels[i], 1) for k in range(i + 1, n))
            for i in range(n - 1)
        )

    def forward(self, feats):
        projected = [proj(f) for proj, f in zip(self.project, feats)]
        fused = []
        for i, laterals in enumerate(self.lateral):
            acc = projected[i]
            for offset, conv in enumerate(laterals):
                k = i + 1 + offset
                up = F.interpolate(
                    projected[k], size=projected[i].shape[-2:], mode="bilinear", align_corners=False
                )
                acc = acc + conv(up)
            fused.append(acc)
        return fused


class FusionDecoder(nn.Module):
    """Stack of fusion stages retiring one level each until one remains."""

    def __init__(self, in_channels, num_stages=None):
        super().__init__()
        n = len(in_channels)
        if num_stages is None:
            num_stages = n - 1
        if num_stages != n - 1:
            raise ValueError("{} levels need exactly {} fusion stages".format(n, n - 1))
        self.stages = nn.ModuleList(FusionStage(in_channels[: n - s]) for s in range(num_stages))

    def forward(self, feats):
        for stage in self.stages:
            feats = stage(feats)
        return feats[0]


class DisparityHead(nn.Module):
    """3x3 convs + sigmoid at stride 4, bilinearly upsampled x4."""

    def __init__(self, in_channels, head_channels):
        super().__init__()
        self.conv1 = nn.Conv2d(in_channels, head_channels, 3, padding=1)
        self.conv2 = nn.Conv2d(head_channels, 1, 3, padding=1)

    def forward(self, x):
        x = F.elu(self.conv1(x), inplace=True)
        disp = torch.sigmoid(self.conv2(x))
        return F.interpolate(disp, scale_factor=4, mode="bilinear", align_corners=False)
