"""Shared fixtures: a small rendered sequence reused across test modules."""

import numpy as np
import pytest
import torch

from scaledepth.synthetic import SyntheticScene, generate_synthetic


@pytest.fixture(scope="session")
def small_scene():
    return SyntheticScene(seed=5, image_size=(96, 160), n_boxes=10)


@pytest.fixture(scope="session")
def small_dataset(tmp_path_factory, small_scene):
    """A 16-frame rendered sequence on disk."""
    root = tmp_path_factory.mktemp("smalldata")
    generate_synthetic(small_scene, 16, root)
    return root


def smooth_field(shape, seed, low=1.0, high=10.0, base=(6, 8)):
    """A smooth random positive map, shaped like a plausible depth map."""
    rng = np.random.default_rng(seed)
    coarse = torch.from_numpy(rng.uniform(0.0, 1.0, size=(1, 1) + base)).float()
    up = torch.nn.functional.interpolate(coarse, size=shape, mode="bilinear", align_corners=False)
    return (low + (high - low) * up)[0]


def central_difference(fn, x, eps):
    """Gradient of scalar fn w.r.t. tensor x by central differences."""
    grad = torch.zeros_like(x)
    flat = x.reshape(-1)
    g = grad.reshape(-1)
    for i in range(flat.numel()):
        orig = flat[i].item()
        flat[i] = orig + eps
        f_plus = float(fn())
        flat[i] = orig - eps
        f_minus = float(fn())
        flat[i] = orig
        g[i] = (f_plus - f_minus) / (2 * eps)
    return grad


def assert_grad_close(analytic, numeric, rel_tol=1e-3, abs_floor=1e-7):
    diff = (analytic - numeric).abs()
    scale = torch.maximum(analytic.abs(), numeric.abs())
    ok = diff <= rel_tol * scale + abs_floor
    assert ok.all(), "gradient mismatch: worst rel err {:.2e}".format(
        (diff / (scale + 1e-12)).max().item()
    )
