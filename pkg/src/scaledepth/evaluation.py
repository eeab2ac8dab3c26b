"""Depth evaluation: standard error/accuracy metrics, median scaling,
and the fixed-model multi-resolution sweep."""

from __future__ import annotations

import csv
import dataclasses
import json
from dataclasses import dataclass

import numpy as np
import torch

from .augmentation import resize_image
from .geometry import disp_to_depth

# fractional bounds of the crop used by the standard outdoor benchmark
# evaluation protocol (rows then columns)
EIGEN_CROP = (0.40810811, 0.99189189, 0.03594771, 0.96405229)


@dataclass(frozen=True)
class MetricReport:
    abs_rel: float
    sq_rel: float
    rmse: float
    rmse_log: float
    delta1: float
    delta2: float
    delta3: float
    resolution: tuple
    n_images: int

    def as_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["resolution"] = list(self.resolution)
        return d

    def row(self) -> list:
        return [
            "{}x{}".format(self.resolution[1], self.resolution[0]),
            self.abs_rel,
            self.sq_rel,
            self.rmse,
            self.rmse_log,
            self.delta1,
            self.delta2,
            self.delta3,
            self.n_images,
        ]


CSV_HEADER = ["resolution", "abs_rel", "sq_rel", "rmse", "rmse_log", "delta1", "delta2", "delta3", "n_images"]


def median_scale(pred, gt, mask=None):
    """Rescale pred so its masked median matches the ground truth median."""
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    m = np.ones(gt.shape, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    if not m.any():
        raise ValueError("median scaling needs a nonempty mask")
    med_pred = np.median(pred[m])
    if med_pred == 0:
        raise ValueError("prediction median is zero; cannot scale")
    return pred * (np.median(gt[m]) / med_pred)


def compute_metrics(pred, gt, mask=None, min_depth=1e-3, max_depth=80.0, resolution=None) -> MetricReport:
    """Error and accuracy metrics over the masked pixels.

    Both maps are clipped to [min_depth, max_depth] first; `pred` must
    already be at the ground-truth resolution (resize it beforehand).
    """
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ValueError("pred shape {} != gt shape {}".format(pred.shape, gt.shape))
    m = np.ones(gt.shape, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    if not m.any():
        raise ValueError("empty evaluation mask")

    p = np.clip(pred[m], min_depth, max_depth)
    g = np.clip(gt[m], min_depth, max_depth)

    thresh = np.maximum(p / g, g / p)
    return MetricReport(
        abs_rel=float(np.mean(np.abs(p - g) / g)),
        sq_rel=float(np.mean((p - g) ** 2 / g)),
        rmse=float(np.sqrt(np.mean((p - g) ** 2))),
        rmse_log=float(np.sqrt(np.mean((np.log(p) - np.log(g)) ** 2))),
        delta1=float(np.mean(thresh < 1.25)),
        delta2=float(np.mean(thresh < 1.25**2)),
        delta3=float(np.mean(thresh < 1.25**3)),
        resolution=tuple(resolution) if resolution is not None else gt.shape,
        n_images=1,
    )


def average_reports(reports, resolution=None) -> MetricReport:
    if not reports:
        raise ValueError("no reports to average")
    fields = ("abs_rel", "sq_rel", "rmse", "rmse_log", "delta1", "delta2", "delta3")
    means = {f: float(np.mean([getattr(r, f) for r in reports])) for f in fields}
    return MetricReport(
        resolution=tuple(resolution) if resolution is not None else reports[0].resolution,
        n_images=sum(r.n_images for r in reports),
        **means,
    )


def eigen_crop_mask(shape) -> np.ndarray:
    h, w = shape
    mask = np.zeros((h, w), dtype=bool)
    r0, r1, c0, c1 = EIGEN_CROP
    mask[int(r0 * h) : int(r1 * h), int(c0 * w) : int(c1 * w)] = True
    return mask


@torch.no_grad()
def predict_depth(model, image, resolution, min_depth=0.1, max_depth=100.0, device="cpu"):
    """Run the depth network on an image resized to `resolution` = (h, w).

    Returns the depth map at `resolution` as a numpy array. The input can
    be (c, h0, w0) or a batch (b, c, h0, w0); batched input gives (b, h, w).
    """
    single = image.dim() == 3
    batch = image.unsqueeze(0) if single else image
    batch = resize_image(batch.to(device), resolution)
    model.eval()
    disp = model(batch)
    depth = disp_to_depth(disp, min_depth, max_depth)
    depth = depth[:, 0].cpu().numpy()
    return depth[0] if single else depth


def evaluate_frames(
    model,
    frames,
    resolution,
    min_depth=0.1,
    max_depth=100.0,
    eval_min_depth=1e-3,
    eval_max_depth=80.0,
    median_scaling=True,
    eigen_crop=False,
    device="cpu",
) -> MetricReport:
    """Per-image metrics of a fixed model at one inference resolution.

    Predictions are made at `resolution` (h, w), converted to inverse
    depth, bilinearly resized to the ground-truth resolution and inverted
    back, optionally median-scaled, then scored. Per-image reports are
    averaged.
    """
    h, w = resolution
    if h % 32 or w % 32:
        raise ValueError("resolution ({}, {}) must be divisible by 32".format(h, w))
    reports = []
    for item in frames:
        gt = item["depth_gt"].numpy() if torch.is_tensor(item["depth_gt"]) else item["depth_gt"]
        depth = predict_depth(model, item["image"], resolution, min_depth, max_depth, device)
        inv = torch.from_numpy(1.0 / depth)[None, None]
        inv_full = resize_image(inv, gt.shape)[0, 0].numpy()
        pred = 1.0 / inv_full

        mask = (gt > eval_min_depth) & (gt < eval_max_depth)
        if eigen_crop:
            mask &= eigen_crop_mask(gt.shape)
        if median_scaling:
            pred = median_scale(pred, gt, mask)
        reports.append(
            compute_metrics(pred, gt, mask, eval_min_depth, eval_max_depth, resolution=resolution)
        )
    return average_reports(reports, resolution=resolution)


def resolution_sweep(model, frames, resolutions, **kwargs) -> list:
    """Evaluate one fixed model at several resolutions.

    Returns one report per resolution plus a final entry averaging them
    (its resolution field is (0, 0)).
    """
    reports = [evaluate_frames(model, frames, res, **kwargs) for res in resolutions]
    reports.append(average_reports(reports, resolution=(0, 0)))
    return reports


def write_reports_json(path, reports) -> None:
    with open(path, "w") as f:
        json.dump([r.as_dict() for r in reports], f, indent=2)


def write_reports_csv(path, reports) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(CSV_HEADER)
        for r in reports:
            writer.writerow(r.row())
