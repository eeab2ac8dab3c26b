"""Deterministic synthetic corridor scenes with exact depth and pose.

A CPU ray caster renders a textured world (ground plane, ceiling, far
wall, boxes resting on the ground) seen from a camera driving forward
with gentle sway and yaw. Every frame comes with its analytic depth map
and camera-to-world pose, which is what lets the geometry and training
stack be verified end to end without any real data.

Textures are procedural sums of band-limited sinusoids; each band is
attenuated by the pixel footprint at the hit distance, so distant
surfaces stay alias-free and image warps between neighboring frames
reproduce each other to well under a percent of intensity.
"""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass

import numpy as np

from . import fileio
from .geometry import Intrinsics

_OCTAVE_FREQS = (0.1, 0.25, 0.6, 1.4)  # cycles per meter
_OCTAVE_AMPS = (0.25, 0.18, 0.10, 0.05)
_BANDLIMIT_SIGMA = 1.2  # band-limit width, in pixel footprints


@dataclass(frozen=True)
class SyntheticScene:
    """Parameters fully determining a rendered sequence."""

    seed: int = 0
    image_size: tuple = (192, 320)  # (h, w)
    focal: float = 240.0
    n_boxes: int = 16
    ground_y: float = 1.4
    ceiling_y: float = -8.0
    wall_z: float = 60.0
    forward_step: float = 0.08
    lateral_amp: float = 0.25
    bob_amp: float = 0.04
    yaw_amp: float = 0.03

    @property
    def intrinsics(self) -> Intrinsics:
        h, w = self.image_size
        return Intrinsics(fx=self.focal, fy=self.focal, cx=w / 2.0, cy=h / 2.0)


def camera_pose(scene: SyntheticScene, frame: int) -> np.ndarray:
    """Camera-to-world 4x4 for a frame index (x right, y down, z forward)."""
    t = float(frame)
    pos = np.array(
        [
            scene.lateral_amp * np.sin(2 * np.pi * t / 40.0),
            scene.bob_amp * np.sin(2 * np.pi * t / 23.0),
            scene.forward_step * t,
        ]
    )
    yaw = scene.yaw_amp * np.sin(2 * np.pi * t / 55.0)
    c, s = np.cos(yaw), np.sin(yaw)
    rot = np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])
    pose = np.eye(4)
    pose[:3, :3] = rot
    pose[:3, 3] = pos
    return pose


def relative_pose(pose_target: np.ndarray, pose_source: np.ndarray) -> np.ndarray:
    """Transform taking target-camera coordinates to source-camera ones."""
    return np.linalg.inv(pose_source) @ pose_target


def _sample_boxes(scene: SyntheticScene, rng: np.random.Generator) -> np.ndarray:
    """(n, 2, 3) min/max corners of boxes standing on the ground plane."""
    boxes = []
    for _ in range(scene.n_boxes):
        width = rng.uniform(0.6, 2.2)
        depth = rng.uniform(0.6, 2.2)
        height = rng.uniform(0.8, 2.6)
        side = rng.choice([-1.0, 1.0])
        cx = side * rng.uniform(1.8 + width / 2, 7.0)
        cz = rng.uniform(5.0, scene.wall_z - 6.0)
        lo = np.array([cx - width / 2, scene.ground_y - height, cz - depth / 2])
        hi = np.array([cx + width / 2, scene.ground_y, cz + depth / 2])
        boxes.append(np.stack([lo, hi]))
    return np.stack(boxes) if boxes else np.zeros((0, 2, 3))


def _sample_materials(n_materials: int, rng: np.random.Generator) -> list:
    mats = []
    for _ in range(n_materials):
        mats.append(
            {
                "base": rng.uniform(0.3, 0.65, size=3),
                "gain": rng.uniform(0.8, 1.2, size=3),
                "u": rng.normal(size=(len(_OCTAVE_FREQS), 3)),
                "v": rng.normal(size=(len(_OCTAVE_FREQS), 3)),
                "phase_u": rng.uniform(0, 2 * np.pi, size=len(_OCTAVE_FREQS)),
                "phase_v": rng.uniform(0, 2 * np.pi, size=len(_OCTAVE_FREQS)),
            }
        )
    for m in mats:
        m["u"] /= np.linalg.norm(m["u"], axis=1, keepdims=True)
        m["v"] /= np.linalg.norm(m["v"], axis=1, keepdims=True)
    return mats


def _shade(points, footprint, material) -> np.ndarray:
    """Band-limited procedural color at world points; (n, 3) in [0, 1]."""
    lum = np.zeros(points.shape[1])
    sigma = _BANDLIMIT_SIGMA * footprint
    for k, (freq, amp) in enumerate(zip(_OCTAVE_FREQS, _OCTAVE_AMPS)):
        atten = np.exp(-2.0 * (np.pi * freq * sigma) ** 2)
        pu = material["u"][k] @ points
        pv = material["v"][k] @ points
        lum += amp * atten * np.sin(2 * np.pi * freq * pu + material["phase_u"][k]) * np.cos(
            2 * np.pi * freq * pv + material["phase_v"][k]
        )
    color = material["base"][:, None] + material["gain"][:, None] * lum[None, :]
    return np.clip(color, 0.0, 1.0).T


class SceneRenderer:
    """Ray caster for one SyntheticScene; all state derived from the seed."""

    def __init__(self, scene: SyntheticScene):
        self.scene = scene
        rng = np.random.default_rng(scene.seed)
        self.boxes = _sample_boxes(scene, rng)
        # materials: ground, ceiling, wall, then one per box
        self.materials = _sample_materials(3 + len(self.boxes), rng)
        h, w = scene.image_size
        k = scene.intrinsics
        gy, gx = np.mgrid[0:h, 0:w].astype(np.float64)
        self.dirs_cam = np.stack(
            [(gx - k.cx) / k.fx, (gy - k.cy) / k.fy, np.ones_like(gx)]
        ).reshape(3, -1)

    def render(self, frame: int) -> tuple[np.ndarray, np.ndarray]:
        """Render one frame: float image (3, h, w) and depth (h, w) meters."""
        scene = self.scene
        pose = camera_pose(scene, frame)
        origin = pose[:3, 3]
        dirs = pose[:3, :3] @ self.dirs_cam  # z-component stays ~1, so the
        n = dirs.shape[1]                    # ray parameter equals camera depth

        t_best = np.full(n, np.inf)
        mat_id = np.full(n, 2, dtype=np.int64)  # everything hits the wall
        normal_axis = np.full(n, 2, dtype=np.int64)

        def consider(t, hit, mat, axis):
            better = hit & (t > 1e-6) & (t < t_best)
            t_best[better] = t[better]
            mat_id[better] = mat
            normal_axis[better] = axis[better] if isinstance(axis, np.ndarray) else axis

        with np.errstate(divide="ignore", invalid="ignore"):
            dy, dz = dirs[1], dirs[2]
            consider((scene.wall_z - origin[2]) / dz, dz > 1e-9, 2, 2)
            consider((scene.ground_y - origin[1]) / dy, dy > 1e-9, 0, 1)
            consider((scene.ceiling_y - origin[1]) / dy, dy < -1e-9, 1, 1)
            for i, (lo, hi) in enumerate(self.boxes):
                safe = np.where(np.abs(dirs) < 1e-12, 1e-12, dirs)
                t1 = (lo[:, None] - origin[:, None]) / safe
                t2 = (hi[:, None] - origin[:, None]) / safe
                slab_near = np.minimum(t1, t2)
                t_near = slab_near.max(axis=0)
                t_far = np.maximum(t1, t2).min(axis=0)
                hit = (t_near <= t_far) & (t_far > 0)
                consider(np.where(t_near > 0, t_near, t_far), hit, 3 + i, slab_near.argmax(axis=0))

        points = origin[:, None] + t_best[None, :] * dirs
        # footprint on the surface: distance over focal length, stretched by
        # the incidence angle so grazing views stay band-limited
        ray_norm = np.linalg.norm(dirs, axis=0)
        cos_inc = np.abs(np.take_along_axis(dirs, normal_axis[None, :], axis=0)[0]) / ray_norm
        footprint = t_best / scene.focal / np.maximum(cos_inc, 0.05)
        color = np.zeros((n, 3))
        for m in np.unique(mat_id):
            sel = mat_id == m
            color[sel] = _shade(points[:, sel], footprint[sel], self.materials[m])

        h, w = scene.image_size
        return color.T.reshape(3, h, w), t_best.reshape(h, w)


def generate_synthetic(scene: SyntheticScene, n_frames: int, out_dir) -> str:
    """Render a sequence to disk; returns the sequence directory.

    Layout: <out_dir>/<sequence>/images/%06d.png, depth/%06d.png (16-bit
    millimeters), poses.txt (camera-to-world), intrinsics.txt, scene.json.
    Byte-identical for identical (scene, n_frames).
    """
    if n_frames < 1:
        raise ValueError("n_frames must be >= 1")
    if scene.forward_step == 0 and scene.lateral_amp == 0 and scene.bob_amp == 0:
        raise ValueError("degenerate trajectory: camera never moves (zero baseline)")
    max_travel = scene.forward_step * n_frames
    if max_travel > scene.wall_z - 5.0:
        raise ValueError(
            "trajectory travels {:.1f} m, too close to the far wall at {} m".format(max_travel, scene.wall_z)
        )

    seq_dir = os.path.join(out_dir, "scene_{:04d}".format(scene.seed))
    os.makedirs(os.path.join(seq_dir, "images"), exist_ok=True)
    os.makedirs(os.path.join(seq_dir, "depth"), exist_ok=True)

    renderer = SceneRenderer(scene)
    poses = []
    for i in range(n_frames):
        img, depth = renderer.render(i)
        fileio.save_image(os.path.join(seq_dir, "images", "{:06d}.png".format(i)), img)
        fileio.save_depth_png(os.path.join(seq_dir, "depth", "{:06d}.png".format(i)), depth)
        poses.append(camera_pose(scene, i))

    fileio.save_poses(os.path.join(seq_dir, "poses.txt"), poses)
    fileio.save_intrinsics(os.path.join(seq_dir, "intrinsics.txt"), scene.intrinsics)
    with open(os.path.join(seq_dir, "scene.json"), "w") as f:
        json.dump({"scene": dataclasses.asdict(scene), "n_frames": n_frames, "format_version": 1}, f, indent=2)
    return seq_dir
