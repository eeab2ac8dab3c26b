"""On-disk formats.

Images are 8-bit RGB PNG. Depth maps are 16-bit grayscale PNG holding
millimeters (so the representable range is 0 to 65.535 m), or raw float32
``.npy`` arrays in meters where exactness matters. Poses are text files
with one camera-to-world matrix per line (the first 12 entries of the
4x4, row-major); intrinsics are a single text line ``fx fy cx cy``.
"""

from __future__ import annotations

import os

import numpy as np
from PIL import Image as PILImage

from .geometry import Intrinsics


def save_image(path, img) -> None:
    """Write a (c, h, w) float array in [0, 1] as 8-bit PNG."""
    arr = np.asarray(img)
    if arr.ndim != 3:
        raise ValueError("expected (c, h, w) image, got shape {}".format(arr.shape))
    arr = np.clip(arr, 0.0, 1.0)
    arr = (arr * 255.0).round().astype(np.uint8).transpose(1, 2, 0)
    if arr.shape[2] == 1:
        arr = arr[:, :, 0]
    PILImage.fromarray(arr).save(path)


def load_image(path) -> np.ndarray:
    """Read an image as float32 (c, h, w) in [0, 1]."""
    with PILImage.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float32) / 255.0
    return arr.transpose(2, 0, 1)


def save_depth_png(path, depth_m) -> None:
    """Write a (h, w) depth map in meters as 16-bit PNG millimeters."""
    depth = np.asarray(depth_m, dtype=np.float64)
    mm = np.round(depth * 1000.0)
    if mm.max() > 65535:
        raise ValueError("depth {:.3f} m exceeds the 16-bit millimeter range".format(depth.max()))
    PILImage.fromarray(mm.astype(np.uint16)).save(path)


def load_depth_png(path) -> np.ndarray:
    """Read a 16-bit millimeter PNG as float32 meters."""
    with PILImage.open(path) as im:
        mm = np.asarray(im, dtype=np.float32)
    return mm / 1000.0


def save_depth_npy(path, depth_m) -> None:
    np.save(path, np.asarray(depth_m, dtype=np.float32))


def load_depth_npy(path) -> np.ndarray:
    return np.load(path).astype(np.float32)


def save_poses(path, poses) -> None:
    """Write camera-to-world poses, one 3x4 row-major line per frame."""
    rows = []
    for p in poses:
        p = np.asarray(p, dtype=np.float64)
        rows.append(p[:3, :4].reshape(-1))
    np.savetxt(path, np.stack(rows), fmt="%.12e")


def load_poses(path) -> np.ndarray:
    """Read poses back as an (n, 4, 4) array."""
    flat = np.loadtxt(path, dtype=np.float64).reshape(-1, 12)
    out = np.tile(np.eye(4), (flat.shape[0], 1, 1))
    out[:, :3, :4] = flat.reshape(-1, 3, 4)
    return out


def save_intrinsics(path, K: Intrinsics) -> None:
    with open(path, "w") as f:
        f.write("{:.12e} {:.12e} {:.12e} {:.12e}\n".format(K.fx, K.fy, K.cx, K.cy))


def load_intrinsics(path) -> Intrinsics:
    with open(path) as f:
        fx, fy, cx, cy = [float(v) for v in f.read().split()]
    return Intrinsics(fx, fy, cx, cy)


def save_depth_visualization(path, depth_m, cmap="magma") -> None:
    """Color-map a depth map (by inverse depth, the usual convention)."""
    import matplotlib.cm

    depth = np.asarray(depth_m, dtype=np.float64)
    inv = 1.0 / np.maximum(depth, 1e-6)
    lo, hi = np.percentile(inv, 2), np.percentile(inv, 98)
    normed = np.clip((inv - lo) / max(hi - lo, 1e-12), 0.0, 1.0)
    rgba = matplotlib.cm.get_cmap(cmap)(normed)
    save_image(path, rgba[..., :3].transpose(2, 0, 1))


def atomic_write(path, write_fn) -> None:
    """Write via temp file + rename so readers never see partial files."""
    tmp = str(path) + ".tmp"
    write_fn(tmp)
    os.replace(tmp, path)
