"""Multi-resolution encoder.

HRNet-style body: after a stride-4 stem, parallel branches at strides
4/8/16/32 are grown one per stage, each stage running residual blocks on
every branch and then exchanging information across all resolutions
(strided convs downward, 1x1 conv + bilinear upsample upward).
"""

from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F


def conv_bn_relu(c_in, c_out, stride=1):
    return nn.Sequential(
        nn.Conv2d(c_in, c_out, 3, stride=stride, padding=1, bias=False),
        nn.BatchNorm2d(c_out),
        nn.ReLU(inplace=True),
    )


class BasicBlock(nn.Module):
    def __init__(self, channels):
        super().__init__()
        self.conv1 = nn.Conv2d(channels, channels, 3, padding=1, bias=False)
        self.bn1 = nn.BatchNorm2d(channels)
        self.conv2 = nn.Conv2d(channels, channels, 3, padding=1, bias=False)
        self.bn2 = nn.BatchNorm2d(channels)

    def forward(self, x):
        out = F.relu(self.bn1(self.conv1(x)), inplace=True)
        out = self.bn2(self.conv2(out))
        return F.relu(out + x, inplace=True)


class ExchangeUnit(nn.Module):
    """Cross-resolution fusion: every branch receives every other branch."""

    def __init__(self, channels):
        super().__init__()
        n = len(channels)
        self.paths = nn.ModuleList()
        for i in range(n):
            row = nn.ModuleList()
            for j in range(n):
                if j == i:
                    row.append(nn.Identity())
                elif j > i:
                    # coarse -> fine: project then upsample at forward time
                    row.append(
                        nn.Sequential(
                            nn.Conv2d(channels[j], channels[i], 1, bias=False),
                            nn.BatchNorm2d(channels[i]),
                        )
                    )
                else:
                    # fine -> coarse: chain of stride-2 convs
                    steps = []
                    c = channels[j]
                    for k in range(i - j):
                        c_out = channels[i] if k == i - j - 1 else channels[j]
                        steps.append(nn.Conv2d(c, c_out, 3, stride=2, padding=1, bias=False))
                        steps.append(nn.BatchNorm2d(c_out))
                        if k < i - j - 1:
                            steps.append(nn.ReLU(inplace=True))
                        c = c_out
                    row.append(nn.Sequential(*steps))
            self.paths.append(row)

    def forward(self, xs):
        outs = []
        for i, row in enumerate(self.paths):
            acc = None
            for j, path in enumerate(row):
                y = path(xs[j])
                if j > i:
                    y = F.interpolate(y, size=xs[i].shape[-2:], mode="bilinear", align_corners=False)
                acc = y if acc is None else acc + y
            outs.append(F.relu(acc, inplace=True))
        return outs


class Stage(nn.Module):
    """Residual blocks on every branch followed by one exchange unit."""

    def __init__(self, channels, blocks_per_branch, num_modules):
        super().__init__()
        self.modules_list = nn.ModuleList()
        for _ in range(num_modules):
            branches = nn.ModuleList(
                nn.Sequential(*[BasicBlock(c) for _ in range(blocks_per_branch)]) for c in channels
            )
            self.modules_list.append(nn.ModuleList([branches, ExchangeUnit(channels)]))

    def forward(self, xs):
        for branches, exchange in self.modules_list:
            xs = [branch(x) for branch, x in zip(branches, xs)]
            xs = exchange(xs)
        return xs


class HighResEncoder(nn.Module):
    """Produces 4 feature levels at strides 4, 8, 16, 32.

    Input height and width must be divisible by 32.
    """

    def __init__(self, branch_channels=(18, 36, 72, 144), stage_modules=(1, 3, 2), blocks_per_module=2):
        super().__init__()
        if len(branch_channels) != 4:
            raise ValueError("expected 4 branch widths, got {}".format(branch_channels))
        self.branch_channels = tuple(branch_channels)
        c1, c2, c3, c4 = branch_channels

        self.stem = nn.Sequential(conv_bn_relu(3, c1, stride=2), conv_bn_relu(c1, c1, stride=2))
        self.stage1 = nn.Sequential(BasicBlock(c1), BasicBlock(c1))
        self.trans2 = conv_bn_relu(c1, c2, stride=2)
        self.stage2 = Stage((c1, c2), blocks_per_module, stage_modules[0])
        self.trans3 = conv_bn_relu(c2, c3, stride=2)
        self.stage3 = Stage((c1, c2, c3), blocks_per_module, stage_modules[1])
        self.trans4 = conv_bn_relu(c3, c4, stride=2)
        self.stage4 = Stage((c1, c2, c3, c4), blocks_per_module, stage_modules[2])

    def forward(self, x):
        h, w = x.shape[-2:]
        if h % 32 or w % 32:
            raise ValueError("input size ({}, {}) must be divisible by 32".format(h, w))
        x = self.stem(x)
        x = self.stage1(x)
        xs = [x, self.trans2(x)]
        xs = self.stage2(xs)
        xs = xs + [self.trans3(xs[-1])]
        xs = self.stage3(xs)
        xs = xs + [self.trans4(xs[-1])]
        xs = self.stage4(xs)
        return xs
