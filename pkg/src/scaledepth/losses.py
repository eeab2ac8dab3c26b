"""Training objectives.

Photometric error (SSIM + L1 mix), per-pixel minimum reprojection over
the two temporal sources, edge-aware smoothness on mean-normalized
disparity, and the cross-scale depth consistency terms computed on the
geometrically corresponding regions of the three scale views.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
import torch.nn.functional as F
from torch import Tensor

from .augmentation import CropWindow, resize_image

_SSIM_C1 = 0.01**2
_SSIM_C2 = 0.03**2


class NonFiniteLossError(RuntimeError):
    """A loss component came out NaN/inf; carries the component name."""

    def __init__(self, component: str, value: float):
        super().__init__("loss component '{}' is non-finite ({})".format(component, value))
        self.component = component


@dataclass(frozen=True)
class LossWeights:
    """Weights of the total objective and the SSIM/L1 mixing factor."""

    photometric: float = 1.0
    smoothness: float = 0.001
    consistency: float = 1.0
    ssim_mix: float = 0.85

    def __post_init__(self):
        if min(self.photometric, self.smoothness, self.consistency) < 0:
            raise ValueError("loss weights must be nonnegative")
        if not 0.0 <= self.ssim_mix <= 1.0:
            raise ValueError("ssim_mix must lie in [0, 1]")


@dataclass
class CorrespondencePair:
    """Two same-size depth windows that should depict identical geometry."""

    region_a: Tensor
    resized_b: Tensor

    def __post_init__(self):
        if self.region_a.shape != self.resized_b.shape:
            raise ValueError(
                "correspondence members disagree in shape: {} vs {}".format(
                    tuple(self.region_a.shape), tuple(self.resized_b.shape)
                )
            )


def _mean_filter_3x3(x: Tensor) -> Tensor:
    padded = F.pad(x, (1, 1, 1, 1), mode="reflect")
    return F.avg_pool2d(padded, kernel_size=3, stride=1)


def ssim_map(a: Tensor, b: Tensor) -> Tensor:
    """Per-pixel structural similarity of two (B, C, H, W) tensors.

    Local statistics from a 3x3 mean filter with reflection padding;
    values in [-1, 1], symmetric in the two arguments.
    """
    if a.shape != b.shape:
        raise ValueError("shape mismatch: {} vs {}".format(tuple(a.shape), tuple(b.shape)))
    mu_a = _mean_filter_3x3(a)
    mu_b = _mean_filter_3x3(b)
    var_a = _mean_filter_3x3(a * a) - mu_a * mu_a
    var_b = _mean_filter_3x3(b * b) - mu_b * mu_b
    cov = _mean_filter_3x3(a * b) - mu_a * mu_b
    num = (2 * mu_a * mu_b + _SSIM_C1) * (2 * cov + _SSIM_C2)
    den = (mu_a * mu_a + mu_b * mu_b + _SSIM_C1) * (var_a + var_b + _SSIM_C2)
    return num / den


def photometric_error(a: Tensor, b: Tensor, alpha: float = 0.85) -> Tensor:
    """Per-pixel photometric error map (B, 1, H, W).

    alpha/2 * (1 - SSIM) + (1 - alpha) * |a - b|, averaged over channels.
    """
    if a.shape != b.shape:
        raise ValueError("shape mismatch: {} vs {}".format(tuple(a.shape), tuple(b.shape)))
    ssim_term = 0.5 * alpha * (1 - ssim_map(a, b))
    l1_term = (1 - alpha) * (a - b).abs()
    return (ssim_term + l1_term).mean(dim=1, keepdim=True)


def min_reprojection_loss(target: Tensor, warped, masks=None, alpha: float = 0.85) -> Tensor:
    """Mean over valid pixels of the per-pixel minimum photometric error.

    `warped` is a list of candidate reconstructions of `target`; `masks`
    optionally gives each candidate's validity map (1 inside the source
    frame). A pixel is scored by its best valid candidate and pixels with
    no valid candidate drop out of the mean.
    """
    if len(warped) == 0:
        raise ValueError("need at least one warped candidate")
    errs = torch.cat([photometric_error(target, wp, alpha) for wp in warped], dim=1)
    if masks is None:
        return errs.min(dim=1).values.mean()
    mask = torch.cat(list(masks), dim=1)
    big = errs.detach().abs().max() + 1.0
    errs = torch.where(mask > 0, errs, errs * 0 + big)
    per_pixel = errs.min(dim=1).values
    any_valid = (mask > 0).any(dim=1).to(per_pixel.dtype)
    denom = any_valid.sum().clamp(min=1)
    return (per_pixel * any_valid).sum() / denom


def smoothness_loss(disp: Tensor, img: Tensor) -> Tensor:
    """Edge-aware first-order smoothness of mean-normalized disparity.

    Disparity gradients are down-weighted by exp(-|image gradient|)
    (channel-meaned); normalizing by the per-sample disparity mean makes
    the loss invariant to a global rescaling of the disparity.
    """
    mean_disp = disp.mean(dim=(2, 3), keepdim=True)
    if (mean_disp == 0).any():
        raise ValueError("disparity mean is zero; cannot normalize")
    d = disp / mean_disp

    grad_d_x = (d[:, :, :, :-1] - d[:, :, :, 1:]).abs()
    grad_d_y = (d[:, :, :-1, :] - d[:, :, 1:, :]).abs()
    grad_i_x = (img[:, :, :, :-1] - img[:, :, :, 1:]).abs().mean(dim=1, keepdim=True)
    grad_i_y = (img[:, :, :-1, :] - img[:, :, 1:, :]).abs().mean(dim=1, keepdim=True)

    loss = disp.sum() * 0  # keeps dtype/device and the autograd link
    if grad_d_x.numel():
        loss = loss + (grad_d_x * torch.exp(-grad_i_x)).mean()
    if grad_d_y.numel():
        loss = loss + (grad_d_y * torch.exp(-grad_i_y)).mean()
    return loss


def _round_half_down(x: float) -> int:
    return int(math.ceil(x - 0.5))


def extract_correspondence_mid_high(depth_mid: Tensor, depth_high: Tensor, crop: CropWindow, s_high: float) -> CorrespondencePair:
    """Pair the mid-scale window that the zoomed-in view covers.

    The zoomed-in view was cropped at `crop` from the mid image enlarged
    by s_high, so its footprint in the mid-scale map is the rectangle at
    crop/s_high of size (h/s_high, w/s_high). The high-scale map is
    resized onto that window. Offsets round half-down, sizes floor.
    """
    h, w = depth_mid.shape[-2:]
    rh, rw = int(h / s_high), int(w / s_high)
    if rh < 1 or rw < 1:
        raise ValueError("degenerate correspondence region for s_high={}".format(s_high))
    ry = min(_round_half_down(crop.y0 / s_high), h - rh)
    rx = min(_round_half_down(crop.x0 / s_high), w - rw)
    region = depth_mid[..., ry : ry + rh, rx : rx + rw]
    return CorrespondencePair(region_a=region, resized_b=resize_image(depth_high, (rh, rw)))


def extract_correspondence_low_mid(depth_low: Tensor, depth_mid: Tensor, s_low: float) -> CorrespondencePair:
    """Pair the genuine-content region of the zoomed-out view with the mid map.

    The sub-target resize sits in the top-left (h*s_low, w*s_low) block of
    the stitched low view; the whole mid-scale map corresponds to exactly
    that block and is resized onto it.
    """
    h, w = depth_low.shape[-2:]
    rh, rw = int(h * s_low), int(w * s_low)
    if rh < 1 or rw < 1:
        raise ValueError("degenerate correspondence region for s_low={}".format(s_low))
    region = depth_low[..., :rh, :rw]
    return CorrespondencePair(region_a=region, resized_b=resize_image(depth_mid, (rh, rw)))


def cross_scale_loss(pair: CorrespondencePair, alpha: float = 0.85, normalize: bool = False) -> Tensor:
    """SSIM + L1 discrepancy between the two members of a correspondence.

    Computed on raw metric depths by default; `normalize` divides both
    members by the mean of the first, for experiments where the depth
    magnitude should not influence the SSIM statistics.
    """
    a, b = pair.region_a, pair.resized_b
    if normalize:
        scale = a.mean().clamp(min=1e-8)
        a, b = a / scale, b / scale
    ssim_term = 0.5 * alpha * (1 - ssim_map(a, b))
    l1_term = (1 - alpha) * (a - b).abs()
    return (ssim_term + l1_term).mean()


TOTAL_LOSS_COMPONENTS = (
    "ph_low",
    "ph_mid",
    "ph_high",
    "sm_low",
    "sm_mid",
    "sm_high",
    "cs_low_mid",
    "cs_mid_high",
)


def total_loss(components: dict, weights: LossWeights) -> Tensor:
    """Weighted sum of photometric, smoothness and consistency terms.

    `components` maps names from TOTAL_LOSS_COMPONENTS to scalar tensors;
    missing entries simply contribute nothing (ablated terms). Any
    non-finite component aborts with NonFiniteLossError naming it.
    """
    unknown = set(components) - set(TOTAL_LOSS_COMPONENTS)
    if unknown:
        raise ValueError("unknown loss components: {}".format(sorted(unknown)))
    for name, value in components.items():
        v = float(value.detach()) if torch.is_tensor(value) else float(value)
        if not math.isfinite(v):
            raise NonFiniteLossError(name, v)

    def total_of(prefix):
        parts = [v for k, v in components.items() if k.startswith(prefix)]
        return sum(parts) if parts else 0.0

    return (
        weights.photometric * total_of("ph_")
        + weights.smoothness * total_of("sm_")
        + weights.consistency * total_of("cs_")
    )
