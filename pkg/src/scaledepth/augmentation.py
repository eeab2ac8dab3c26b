"""Arbitrary-scale data augmentation.

Each training frame is expanded into three same-resolution views of the
scene at different scales: a zoomed-out view built by resizing below the
target size and tiling the bottom/right bands, the plain resize to the
target size, and a zoomed-in view built by resizing above the target size
and taking a random crop. Scale factors and crop offsets are recorded so
depth predictions on the three views can later be put in pixel
correspondence.

All resizes in this repository use one convention: bilinear with
pixel-area alignment (`align_corners=False`), i.e. pixel (i, j) is the
unit square centered at (i + 0.5, j + 0.5). Intrinsics are scaled
proportionally with no half-pixel correction; the projection tests pin
that convention down.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F
from torch import Tensor

from .geometry import Intrinsics

LOW_SCALE_RANGE = (0.7, 0.9)
HIGH_SCALE_RANGE = (1.1, 2.0)


@dataclass(frozen=True)
class ScalePair:
    """Scale factors for the zoomed-out and zoomed-in views."""

    s_low: float
    s_high: float

    def __post_init__(self):
        lo, hi = LOW_SCALE_RANGE, HIGH_SCALE_RANGE
        if not (lo[0] <= self.s_low <= lo[1]):
            raise ValueError("s_low {} outside [{}, {}]".format(self.s_low, *lo))
        if not (hi[0] <= self.s_high <= hi[1]):
            raise ValueError("s_high {} outside [{}, {}]".format(self.s_high, *hi))


@dataclass(frozen=True)
class CropWindow:
    """Crop placement inside the enlarged intermediate image."""

    x0: int
    y0: int
    width: int
    height: int

    def __post_init__(self):
        if self.x0 < 0 or self.y0 < 0 or self.width <= 0 or self.height <= 0:
            raise ValueError("invalid crop window {}".format(self))


@dataclass
class AugmentedInstance:
    """The three scale views of one (prev, target, next) frame triple.

    `low`, `mid` and `high` are (3, c, h, w) tensors holding the frames
    in temporal order. One ScalePair and one CropWindow were applied to
    all three frames, and `intrinsics` records the camera parameters
    valid for each scale.
    """

    low: Tensor
    mid: Tensor
    high: Tensor
    scales: ScalePair
    crop: CropWindow
    intrinsics: dict

    def __post_init__(self):
        if not (self.low.shape == self.mid.shape == self.high.shape):
            raise ValueError("scale views disagree in shape")


def sample_scales(rng: np.random.Generator) -> ScalePair:
    """Draw the two scale factors uniformly from their closed ranges."""
    return ScalePair(
        s_low=float(rng.uniform(*LOW_SCALE_RANGE)),
        s_high=float(rng.uniform(*HIGH_SCALE_RANGE)),
    )


def scaled_size(target_shape, scale: float) -> tuple[int, int]:
    """Integer (h, w) after scaling, truncated like int(h * s)."""
    h, w = target_shape
    return int(h * scale), int(w * scale)


def sample_crop(rng: np.random.Generator, enlarged_shape, target_shape) -> CropWindow:
    """Uniform crop placement of target_shape inside enlarged_shape."""
    hh, wh = enlarged_shape
    h, w = target_shape
    if hh < h or wh < w:
        raise ValueError("enlarged shape {} smaller than crop {}".format(enlarged_shape, target_shape))
    return CropWindow(
        x0=int(rng.integers(0, wh - w + 1)),
        y0=int(rng.integers(0, hh - h + 1)),
        width=w,
        height=h,
    )


def resize_image(img: Tensor, size) -> Tensor:
    """Bilinear resize of (c, h, w) or (b, c, h, w) to `size` = (h, w).

    The single resize convention used across augmentation, correspondence
    extraction, and evaluation.
    """
    squeeze = img.dim() == 3
    if squeeze:
        img = img.unsqueeze(0)
    out = F.interpolate(img, size=tuple(int(s) for s in size), mode="bilinear", align_corners=False)
    return out.squeeze(0) if squeeze else out


def augment_frame(img: Tensor, scales: ScalePair, crop: CropWindow, target_shape) -> tuple[Tensor, Tensor, Tensor]:
    """Produce the (low, mid, high) views of one (c, h0, w0) frame.

    The low view places the sub-target resize in the top-left corner and
    fills the remaining bottom/right bands with copies of the adjacent
    rows/columns of that resize. The high view crops the super-target
    resize at `crop`.
    """
    h, w = target_shape
    hl, wl = scaled_size(target_shape, scales.s_low)
    hh, wh = scaled_size(target_shape, scales.s_high)
    if hl < h - hl or wl < w - wl:
        raise ValueError(
            "target shape {} too small to stitch at s_low={} (resized block {})".format(
                target_shape, scales.s_low, (hl, wl)
            )
        )
    if crop.width != w or crop.height != h or crop.x0 > wh - w or crop.y0 > hh - h:
        raise ValueError("crop {} invalid for enlarged shape {}".format(crop, (hh, wh)))

    t_low = resize_image(img, (hl, wl))
    mid = resize_image(img, (h, w))
    t_high = resize_image(img, (hh, wh))

    low = img.new_zeros((img.shape[0], h, w))
    low[:, :hl, :wl] = t_low
    low[:, hl:h, :wl] = t_low[:, 2 * hl - h : hl, :wl]
    low[:, :hl, wl:w] = t_low[:, :hl, 2 * wl - w : wl]
    low[:, hl:h, wl:w] = t_low[:, 2 * hl - h : hl, 2 * wl - w : wl]

    high = t_high[:, crop.y0 : crop.y0 + h, crop.x0 : crop.x0 + w]
    return low, mid, high.contiguous()


def adjust_intrinsics(K: Intrinsics, resize_ratio, crop: CropWindow | None = None) -> Intrinsics:
    """Intrinsics after resizing by (ry, rx) and optionally cropping.

    Focal lengths and principal point scale proportionally; a crop then
    shifts the principal point by its top-left offset.
    """
    ry, rx = resize_ratio
    if ry <= 0 or rx <= 0:
        raise ValueError("resize ratios must be positive")
    x0 = crop.x0 if crop is not None else 0
    y0 = crop.y0 if crop is not None else 0
    return Intrinsics(
        fx=K.fx * rx,
        fy=K.fy * ry,
        cx=K.cx * rx - x0,
        cy=K.cy * ry - y0,
    )


def augment_instance(frames, K: Intrinsics, rng: np.random.Generator, target_shape) -> AugmentedInstance:
    """Apply one sampled ScalePair + CropWindow to a frame triple.

    `frames` holds (prev, target, next) tensors of identical (c, h0, w0)
    shape; all three get the same transform so the shared camera motion
    stays geometrically consistent across scales. Deterministic given the
    rng state.
    """
    if len(frames) != 3:
        raise ValueError("expected a (prev, target, next) frame triple")
    shape0 = frames[0].shape
    for f in frames[1:]:
        if f.shape != shape0:
            raise ValueError("frames disagree in shape: {} vs {}".format(tuple(shape0), tuple(f.shape)))

    h, w = target_shape
    h0, w0 = shape0[1], shape0[2]
    scales = sample_scales(rng)
    hl, wl = scaled_size(target_shape, scales.s_low)
    hh, wh = scaled_size(target_shape, scales.s_high)
    crop = sample_crop(rng, (hh, wh), target_shape)

    views = [augment_frame(f, scales, crop, target_shape) for f in frames]
    low, mid, high = (torch.stack([v[i] for v in views]) for i in range(3))

    intrinsics = {
        "low": adjust_intrinsics(K, (hl / h0, wl / w0)),
        "mid": adjust_intrinsics(K, (h / h0, w / w0)),
        "high": adjust_intrinsics(K, (hh / h0, wh / w0), crop=crop),
    }
    return AugmentedInstance(low=low, mid=mid, high=high, scales=scales, crop=crop, intrinsics=intrinsics)
