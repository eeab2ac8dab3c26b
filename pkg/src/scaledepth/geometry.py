"""Differentiable pinhole-camera geometry.

Everything a view-synthesis training loop needs: the bounded inverse-depth
parameterization, backprojection / projection, bilinear resampling with an
explicit validity mask, and axis-angle pose handling.

All functions follow the dtype and device of their tensor inputs, so the
same code path can run in float32 for training and float64 when a test
needs tight numerical tolerances.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F
from torch import Tensor


@dataclass(frozen=True)
class Intrinsics:
    """Pinhole camera parameters (pixels)."""

    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive, got fx={}, fy={}".format(self.fx, self.fy))

    def as_tensor(self, dtype=torch.float32, device=None) -> Tensor:
        """Pack as a (4,) tensor ordered (fx, fy, cx, cy)."""
        return torch.tensor([self.fx, self.fy, self.cx, self.cy], dtype=dtype, device=device)

    def matrix(self, dtype=torch.float32, device=None) -> Tensor:
        k = torch.eye(3, dtype=dtype, device=device)
        k[0, 0], k[1, 1] = self.fx, self.fy
        k[0, 2], k[1, 2] = self.cx, self.cy
        return k

    @staticmethod
    def from_tensor(t) -> "Intrinsics":
        fx, fy, cx, cy = [float(v) for v in t]
        return Intrinsics(fx, fy, cx, cy)


@dataclass(frozen=True)
class Pose:
    """Rigid transform: rotation (3, 3) and translation (3,) tensors."""

    rotation: Tensor
    translation: Tensor

    def __post_init__(self):
        r = self.rotation
        if r.shape != (3, 3) or self.translation.shape != (3,):
            raise ValueError("expected (3, 3) rotation and (3,) translation")
        eye = torch.eye(3, dtype=r.dtype)
        if not torch.allclose(r.T @ r, eye, atol=1e-6):
            raise ValueError("rotation is not orthonormal")
        if torch.det(r) < 0:
            raise ValueError("rotation must be proper (det = +1)")

    def matrix(self) -> Tensor:
        m = torch.eye(4, dtype=self.rotation.dtype)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def inverse(self) -> "Pose":
        rt = self.rotation.T
        return Pose(rt, -rt @ self.translation)

    @staticmethod
    def from_matrix(m) -> "Pose":
        m = torch.as_tensor(m)
        return Pose(m[:3, :3], m[:3, 3])


def intrinsics_tensor(K, batch_size, dtype, device) -> Tensor:
    """Normalize an intrinsics argument to a (B, 4) tensor (fx, fy, cx, cy)."""
    if isinstance(K, Intrinsics):
        t = K.as_tensor(dtype=dtype, device=device)
    else:
        t = torch.as_tensor(K, dtype=dtype, device=device)
    if t.dim() == 1:
        t = t.unsqueeze(0).expand(batch_size, 4)
    if t.shape != (batch_size, 4):
        raise ValueError("intrinsics must broadcast to (batch, 4), got {}".format(tuple(t.shape)))
    return t


def disp_to_depth(sigmoid_disp: Tensor, min_depth: float = 0.1, max_depth: float = 100.0) -> Tensor:
    """Convert a sigmoid disparity in (0, 1) to metric depth.

    The network output is mapped linearly onto inverse depth between
    1/max_depth and 1/min_depth, so depth decreases monotonically as the
    raw disparity grows.
    """
    if min_depth >= max_depth:
        raise ValueError("min_depth must be < max_depth, got {} >= {}".format(min_depth, max_depth))
    min_disp = 1.0 / max_depth
    max_disp = 1.0 / min_depth
    scaled_disp = min_disp + (max_disp - min_disp) * sigmoid_disp
    return 1.0 / scaled_disp


def rotation_from_axis_angle(vec: Tensor) -> Tensor:
    """Rodrigues formula, (..., 3) axis-angle -> (..., 3, 3) rotation.

    Below 1e-7 rad the exact sin/cos coefficients are replaced by their
    series limits to keep the expression well-conditioned (and its
    gradient finite) at zero rotation.
    """
    angle = torch.linalg.vector_norm(vec, dim=-1, keepdim=True)
    small = angle < 1e-7
    safe_angle = torch.where(small, torch.ones_like(angle), angle)
    # sin(a)/a and (1-cos(a))/a^2, with their a -> 0 limits
    sin_term = torch.where(small, torch.ones_like(angle), torch.sin(safe_angle) / safe_angle)
    cos_term = torch.where(small, torch.full_like(angle, 0.5), (1 - torch.cos(safe_angle)) / safe_angle**2)

    x, y, z = vec[..., 0], vec[..., 1], vec[..., 2]
    zero = torch.zeros_like(x)
    skew = torch.stack(
        [
            torch.stack([zero, -z, y], dim=-1),
            torch.stack([z, zero, -x], dim=-1),
            torch.stack([-y, x, zero], dim=-1),
        ],
        dim=-2,
    )
    eye = torch.eye(3, dtype=vec.dtype, device=vec.device).expand(skew.shape)
    return eye + sin_term[..., None] * skew + cos_term[..., None] * (skew @ skew)


def transformation_from_parameters(axisangle: Tensor, translation: Tensor, invert: bool = False) -> Tensor:
    """Build (B, 4, 4) rigid transforms from (B, 3) axis-angle + translation.

    With invert=True the returned matrix is the inverse of the transform
    the parameters describe; used when the pose network saw the frames in
    temporal order but the warp needs the opposite direction.
    """
    rot = rotation_from_axis_angle(axisangle)
    if invert:
        rot = rot.transpose(-1, -2)
        translation = -(rot @ translation.unsqueeze(-1)).squeeze(-1)
    b = axisangle.shape[0]
    mat = torch.eye(4, dtype=axisangle.dtype, device=axisangle.device).repeat(b, 1, 1)
    mat[:, :3, :3] = rot
    mat[:, :3, 3] = translation
    return mat


def pixel_grid(height: int, width: int, dtype=torch.float32, device=None) -> tuple[Tensor, Tensor]:
    """Integer pixel-center coordinate maps (x, y), each (height, width)."""
    ys = torch.arange(height, dtype=dtype, device=device)
    xs = torch.arange(width, dtype=dtype, device=device)
    gy, gx = torch.meshgrid(ys, xs, indexing="ij")
    return gx, gy


def backproject(depth: Tensor, K) -> Tensor:
    """Lift a (B, 1, H, W) depth map to camera-frame points (B, 3, H, W)."""
    b, _, h, w = depth.shape
    k = intrinsics_tensor(K, b, depth.dtype, depth.device)
    gx, gy = pixel_grid(h, w, dtype=depth.dtype, device=depth.device)
    fx, fy, cx, cy = [k[:, i].view(b, 1, 1, 1) for i in range(4)]
    x = (gx.unsqueeze(0).unsqueeze(0) - cx) / fx * depth
    y = (gy.unsqueeze(0).unsqueeze(0) - cy) / fy * depth
    return torch.cat([x, y, depth], dim=1)


def project(points: Tensor, K, T: Tensor) -> tuple[Tensor, Tensor]:
    """Transform (B, 3, H, W) points by (B, 4, 4) T and project with K.

    Returns pixel coordinates (B, H, W, 2) ordered (x, y) and the
    post-transform depth (B, 1, H, W).
    """
    b, _, h, w = points.shape
    k = intrinsics_tensor(K, b, points.dtype, points.device)
    flat = points.view(b, 3, -1)
    rotated = T[:, :3, :3] @ flat + T[:, :3, 3:4]
    z = rotated[:, 2:3].clamp(min=1e-8)
    fx, fy, cx, cy = [k[:, i].view(b, 1) for i in range(4)]
    px = fx * rotated[:, 0] / z[:, 0] + cx
    py = fy * rotated[:, 1] / z[:, 0] + cy
    coords = torch.stack([px, py], dim=-1).view(b, h, w, 2)
    return coords, rotated[:, 2:3].view(b, 1, h, w)


def bilinear_sample(img: Tensor, coords: Tensor) -> Tensor:
    """Sample (B, C, H, W) img at real-valued pixel coords (B, Ho, Wo, 2).

    Standard bilinear interpolation, exact at integer coordinates.
    Coordinates outside the frame are clamped to the border, so look
    there for the companion validity mask (`inside_mask`) when border
    values must not leak into a loss. Differentiable in both arguments.
    """
    b, c, h, w = img.shape
    x = coords[..., 0].clamp(0, w - 1)
    y = coords[..., 1].clamp(0, h - 1)

    x0 = torch.floor(x)
    y0 = torch.floor(y)
    wx = x - x0
    wy = y - y0

    x0l = x0.long()
    y0l = y0.long()
    x1l = (x0l + 1).clamp(max=w - 1)
    y1l = (y0l + 1).clamp(max=h - 1)

    flat = img.reshape(b, c, h * w)

    def gather(yi, xi):
        idx = (yi * w + xi).reshape(b, 1, -1).expand(b, c, -1)
        return flat.gather(2, idx)

    v00 = gather(y0l, x0l)
    v01 = gather(y0l, x1l)
    v10 = gather(y1l, x0l)
    v11 = gather(y1l, x1l)

    wx = wx.reshape(b, 1, -1)
    wy = wy.reshape(b, 1, -1)
    out = (
        v00 * (1 - wx) * (1 - wy)
        + v01 * wx * (1 - wy)
        + v10 * (1 - wx) * wy
        + v11 * wx * wy
    )
    return out.reshape(b, c, *coords.shape[1:3])


def inside_mask(coords: Tensor, height: int, width: int, depth: Tensor | None = None) -> Tensor:
    """Validity mask (B, 1, H, W): coords inside the frame, depth in front.

    Growing the frame can only turn invalid pixels valid, never the
    reverse.
    """
    x, y = coords[..., 0], coords[..., 1]
    ok = (x >= 0) & (x <= width - 1) & (y >= 0) & (y <= height - 1)
    ok = ok.unsqueeze(1)
    if depth is not None:
        ok = ok & (depth > 1e-8)
    return ok.to(coords.dtype).detach()


def synthesize_view(source: Tensor, depth: Tensor, pose: Tensor, K_target, K_source) -> tuple[Tensor, Tensor]:
    """Warp a source image into the target view.

    Each target pixel is backprojected with the target depth and
    intrinsics, moved by the target-to-source pose, projected with the
    source intrinsics and sampled bilinearly from `source`. Returns the
    warped image and the validity mask of pixels whose sample location
    fell inside the source frame (with positive projected depth).
    """
    if not torch.isfinite(depth).all():
        raise ValueError("depth map contains non-finite values")
    points = backproject(depth, K_target)
    coords, z = project(points, K_source, pose)
    warped = bilinear_sample(source, coords)
    mask = inside_mask(coords, source.shape[2], source.shape[3], depth=z)
    return warped, mask
