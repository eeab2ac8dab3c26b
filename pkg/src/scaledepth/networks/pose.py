"""Pose network: residual encoder over a concatenated image pair, then a
small convolutional head regressing axis-angle rotation and translation."""

from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F

from .encoder import BasicBlock


class _DownBlock(nn.Module):
    def __init__(self, c_in, c_out, stride):
        super().__init__()
        self.conv = nn.Conv2d(c_in, c_out, 3, stride=stride, padding=1, bias=False)
        self.bn = nn.BatchNorm2d(c_out)

    def forward(self, x):
        return F.relu(self.bn(self.conv(x)), inplace=True)


class PoseNet(nn.Module):
    """Predicts the 6-dof relative pose of an image pair.

    Input is the 6-channel concatenation (temporal order) of two frames;
    output is a (B, 6) vector: axis-angle rotation then translation, both
    scaled by 0.01 so a freshly initialized network starts near identity.
    """

    def __init__(self, widths=(64, 64, 128, 256, 512), blocks=(2, 2, 2, 2)):
        super().__init__()
        if len(widths) != 5 or len(blocks) != 4:
            raise ValueError("expected 5 widths and 4 block counts")
        self.stem = nn.Sequential(
            nn.Conv2d(6, widths[0], 7, stride=2, padding=3, bias=False),
            nn.BatchNorm2d(widths[0]),
            nn.ReLU(inplace=True),
            nn.MaxPool2d(3, stride=2, padding=1),
        )
        layers = []
        c = widths[0]
        for w, n, stride in zip(widths[1:], blocks, (1, 2, 2, 2)):
            layers.append(_DownBlock(c, w, stride=stride))
            layers.extend(BasicBlock(w) for _ in range(n - 1))
            c = w
        self.body = nn.Sequential(*layers)
        self.head = nn.Sequential(
            nn.Conv2d(c, 256, 1),
            nn.ReLU(inplace=True),
            nn.Conv2d(256, 256, 3, padding=1),
            nn.ReLU(inplace=True),
            nn.Conv2d(256, 256, 3, padding=1),
            nn.ReLU(inplace=True),
            nn.Conv2d(256, 6, 1),
        )

    def forward(self, img_a, img_b):
        if img_a.shape != img_b.shape:
            raise ValueError(
                "pose inputs disagree in shape: {} vs {}".format(tuple(img_a.shape), tuple(img_b.shape))
            )
        x = torch.cat([img_a, img_b], dim=1)
        x = self.body(self.stem(x))
        x = self.head(x)
        return 0.01 * x.mean(dim=(2, 3))
