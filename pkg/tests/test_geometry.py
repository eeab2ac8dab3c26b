import math

import numpy as np
import pytest
import torch
from scipy.spatial.transform import Rotation

from scaledepth.geometry import (
    Intrinsics,
    Pose,
    backproject,
    bilinear_sample,
    disp_to_depth,
    inside_mask,
    project,
    rotation_from_axis_angle,
    synthesize_view,
    transformation_from_parameters,
)

from conftest import assert_grad_close, central_difference


class TestDispToDepth:
    def test_boundaries(self):
        near = disp_to_depth(torch.tensor([0.999999]), 0.1, 100.0)
        far = disp_to_depth(torch.tensor([1e-9]), 0.1, 100.0)
        assert abs(near.item() - 0.1) < 1e-5
        assert abs(far.item() - 100.0) < 1e-4

    def test_midpoint_value(self):
        # oracle: 1 / (1/100 + 0.5 * (1/0.1 - 1/100)) evaluated independently
        expected = 1.0 / (0.01 + 0.5 * 9.99)
        assert expected == pytest.approx(0.1998001998001998)
        got = disp_to_depth(torch.tensor([0.5], dtype=torch.float64), 0.1, 100.0)
        assert got.item() == pytest.approx(expected, abs=1e-12)

    def test_monotone_decreasing(self):
        ramp = torch.linspace(0.01, 0.99, 50)
        depth = disp_to_depth(ramp, 0.1, 100.0)
        assert (depth[1:] < depth[:-1]).all()

    def test_bad_range_rejected(self):
        with pytest.raises(ValueError):
            disp_to_depth(torch.tensor([0.5]), 10.0, 1.0)


class TestRotation:
    def test_matches_scipy(self):
        rng = np.random.default_rng(0)
        vecs = rng.normal(size=(20, 3))
        ours = rotation_from_axis_angle(torch.from_numpy(vecs)).numpy()
        ref = Rotation.from_rotvec(vecs).as_matrix()
        assert np.abs(ours - ref).max() < 1e-12

    def test_small_angle_stable(self):
        tiny = torch.tensor([[1e-9, 0.0, 0.0]], dtype=torch.float64)
        r = rotation_from_axis_angle(tiny)
        assert torch.allclose(r, torch.eye(3, dtype=torch.float64), atol=1e-8)

    def test_zero_rotation_is_identity(self):
        r = rotation_from_axis_angle(torch.zeros(1, 3))
        assert torch.allclose(r[0], torch.eye(3))

    def test_transform_invert_roundtrip(self):
        aa = torch.tensor([[0.1, -0.2, 0.05]], dtype=torch.float64)
        t = torch.tensor([[0.3, 1.0, -0.5]], dtype=torch.float64)
        fwd = transformation_from_parameters(aa, t)
        inv = transformation_from_parameters(aa, t, invert=True)
        assert torch.allclose(fwd @ inv, torch.eye(4, dtype=torch.float64), atol=1e-12)


class TestPoseType:
    def test_valid_pose(self):
        r = torch.from_numpy(Rotation.from_rotvec([0.1, 0.2, 0.3]).as_matrix())
        p = Pose(r, torch.tensor([1.0, 2.0, 3.0], dtype=torch.float64))
        assert torch.allclose(p.inverse().matrix() @ p.matrix(), torch.eye(4, dtype=torch.float64), atol=1e-12)

    def test_rejects_improper_rotation(self):
        bad = torch.eye(3)
        bad[0, 0] = -1.0  # reflection
        with pytest.raises(ValueError):
            Pose(bad, torch.zeros(3))

    def test_rejects_non_orthonormal(self):
        with pytest.raises(ValueError):
            Pose(torch.eye(3) * 2.0, torch.zeros(3))


class TestIntrinsicsType:
    def test_rejects_nonpositive_focal(self):
        with pytest.raises(ValueError):
            Intrinsics(fx=-1.0, fy=1.0, cx=0.0, cy=0.0)

    def test_tensor_roundtrip(self):
        k = Intrinsics(100.0, 110.0, 50.0, 40.0)
        assert Intrinsics.from_tensor(k.as_tensor()) == k


class TestBilinearSample:
    def test_integer_coords_exact(self):
        rng = np.random.default_rng(1)
        img = torch.from_numpy(rng.uniform(size=(1, 3, 6, 7)))
        gx, gy = torch.meshgrid(torch.arange(7.0), torch.arange(6.0), indexing="xy")
        coords = torch.stack([gx, gy], dim=-1).unsqueeze(0).double()
        out = bilinear_sample(img, coords)
        assert torch.equal(out, img)

    def test_center_of_block_is_mean(self):
        img = torch.tensor([[[[1.0, 2.0], [3.0, 4.0]]]])
        coords = torch.tensor([[[[0.5, 0.5]]]])
        out = bilinear_sample(img, coords)
        assert out.item() == pytest.approx(2.5)

    def test_edge_clamp(self):
        img = torch.tensor([[[[1.0, 2.0], [3.0, 4.0]]]])
        coords = torch.tensor([[[[-5.0, -5.0], [10.0, 10.0]]]])
        out = bilinear_sample(img, coords)
        assert out[0, 0, 0, 0].item() == 1.0
        assert out[0, 0, 0, 1].item() == 4.0

    def test_gradient_wrt_coords_matches_finite_differences(self):
        rng = np.random.default_rng(2)
        img = torch.from_numpy(rng.uniform(size=(1, 1, 8, 8)))
        coords = torch.from_numpy(rng.uniform(0.3, 6.7, size=(1, 4, 4, 2)))
        coords.requires_grad_(True)
        loss = bilinear_sample(img, coords).sum()
        loss.backward()
        numeric = central_difference(lambda: bilinear_sample(img, coords.detach()).sum(), coords.detach(), 1e-6)
        assert_grad_close(coords.grad, numeric)

    def test_gradient_wrt_image_matches_finite_differences(self):
        rng = np.random.default_rng(3)
        img = torch.from_numpy(rng.uniform(size=(1, 1, 6, 8))).requires_grad_(True)
        coords = torch.from_numpy(rng.uniform(0.2, 5.5, size=(1, 3, 4, 2)))
        bilinear_sample(img, coords).sum().backward()
        numeric = central_difference(lambda: bilinear_sample(img.detach(), coords).sum(), img.detach(), 1e-6)
        assert_grad_close(img.grad, numeric)


def _identity_pose(dtype=torch.float64):
    return torch.eye(4, dtype=dtype).unsqueeze(0)


class TestSynthesizeView:
    def test_identity_pose_reconstructs_source(self):
        rng = np.random.default_rng(4)
        k = Intrinsics(120.0, 115.0, 31.5, 23.5)
        for _ in range(5):
            src = torch.from_numpy(rng.uniform(size=(1, 3, 48, 64)))
            depth = torch.from_numpy(rng.uniform(1.0, 50.0, size=(1, 1, 48, 64)))
            warped, mask = synthesize_view(src, depth, _identity_pose(), k, k)
            assert mask.min() == 1.0
            assert (warped - src).abs().max().item() < 1e-6

    def test_zero_rotation_equals_identity(self):
        rng = np.random.default_rng(5)
        k = Intrinsics(100.0, 100.0, 16.0, 12.0)
        src = torch.from_numpy(rng.uniform(size=(1, 3, 24, 32)))
        depth = torch.full((1, 1, 24, 32), 7.0, dtype=torch.float64)
        pose = transformation_from_parameters(
            torch.zeros(1, 3, dtype=torch.float64), torch.zeros(1, 3, dtype=torch.float64)
        )
        warped, _ = synthesize_view(src, depth, pose, k, k)
        assert (warped - src).abs().max().item() < 1e-6

    def test_plane_with_x_translation_shifts_by_flow(self):
        # fronto-parallel plane at depth d, pure x-translation: every pixel
        # samples the source at x + fx * tx / d
        k = Intrinsics(80.0, 80.0, 15.5, 11.5)
        d, tx = 5.0, 0.25
        shift = k.fx * tx / d  # 4 pixels
        gx = torch.arange(32.0, dtype=torch.float64).repeat(24, 1)
        src = gx.unsqueeze(0).unsqueeze(0) / 32.0
        depth = torch.full((1, 1, 24, 32), d, dtype=torch.float64)
        pose = torch.eye(4, dtype=torch.float64).unsqueeze(0)
        pose[0, 0, 3] = tx
        warped, mask = synthesize_view(src, depth, pose, k, k)
        expected = (gx + shift).clamp(max=31.0) / 32.0
        assert (warped[0, 0] - expected).abs().max().item() < 1e-9
        # pixels that would sample beyond the right edge are flagged invalid
        assert mask[0, 0][:, : 32 - math.ceil(shift)].min() == 1.0
        assert mask[0, 0][:, 32 - int(shift) :].max() == 0.0

    def test_against_bruteforce_loop(self):
        # independent per-pixel reimplementation with scalar math
        rng = np.random.default_rng(6)
        k_t = Intrinsics(41.0, 44.0, 10.0, 6.0)
        k_s = Intrinsics(39.0, 37.0, 9.5, 7.0)
        h, w = 12, 14
        src = rng.uniform(size=(1, 1, h, w))
        depth = rng.uniform(2.0, 20.0, size=(h, w))
        aa = torch.tensor([[0.03, -0.05, 0.02]], dtype=torch.float64)
        tr = torch.tensor([[0.2, -0.1, 0.3]], dtype=torch.float64)
        pose = transformation_from_parameters(aa, tr)

        warped, mask = synthesize_view(
            torch.from_numpy(src),
            torch.from_numpy(depth).unsqueeze(0).unsqueeze(0),
            pose,
            k_t,
            k_s,
        )

        rot = pose[0, :3, :3].numpy()
        t = pose[0, :3, 3].numpy()
        for y in range(h):
            for x in range(w):
                point = depth[y, x] * np.array([(x - k_t.cx) / k_t.fx, (y - k_t.cy) / k_t.fy, 1.0])
                moved = rot @ point + t
                px = k_s.fx * moved[0] / moved[2] + k_s.cx
                py = k_s.fy * moved[1] / moved[2] + k_s.cy
                inside = 0 <= px <= w - 1 and 0 <= py <= h - 1 and moved[2] > 0
                cx = min(max(px, 0.0), w - 1)
                cy = min(max(py, 0.0), h - 1)
                x0, y0 = int(np.floor(cx)), int(np.floor(cy))
                x1, y1 = min(x0 + 1, w - 1), min(y0 + 1, h - 1)
                wx, wy = cx - x0, cy - y0
                val = (
                    src[0, 0, y0, x0] * (1 - wx) * (1 - wy)
                    + src[0, 0, y0, x1] * wx * (1 - wy)
                    + src[0, 0, y1, x0] * (1 - wx) * wy
                    + src[0, 0, y1, x1] * wx * wy
                )
                assert warped[0, 0, y, x].item() == pytest.approx(val, abs=1e-12)
                assert mask[0, 0, y, x].item() == (1.0 if inside else 0.0)

    def test_warp_composition_roundtrip(self):
        # warping by a pose and then its inverse on a constant-depth plane
        # recovers the original image on the doubly-valid region
        rng = np.random.default_rng(7)
        k = Intrinsics(60.0, 60.0, 23.5, 15.5)
        base = torch.from_numpy(rng.uniform(size=(1, 1, 4, 5)))
        img = torch.nn.functional.interpolate(base, size=(32, 48), mode="bilinear", align_corners=False)
        depth = torch.full((1, 1, 32, 48), 8.0, dtype=torch.float64)
        aa = torch.tensor([[0.0, 0.01, 0.0]], dtype=torch.float64)
        tr = torch.tensor([[0.1, 0.05, 0.0]], dtype=torch.float64)
        fwd = transformation_from_parameters(aa, tr)
        inv = transformation_from_parameters(aa, tr, invert=True)
        once, m1 = synthesize_view(img, depth, fwd, k, k)
        # depth of the warped view along the same plane stays ~constant
        back, m2 = synthesize_view(once, depth, inv, k, k)
        both = m1 * m2
        err = ((back - img).abs() * both).sum() / both.sum()
        assert err.item() < 1e-3

    def test_rejects_nonfinite_depth(self):
        k = Intrinsics(10.0, 10.0, 2.0, 2.0)
        depth = torch.full((1, 1, 4, 4), float("nan"))
        with pytest.raises(ValueError):
            synthesize_view(torch.rand(1, 1, 4, 4), depth, _identity_pose(torch.float32), k, k)


class TestValidMask:
    def test_mask_monotone_in_frame_size(self):
        rng = np.random.default_rng(8)
        coords = torch.from_numpy(rng.uniform(-10, 40, size=(1, 16, 16, 2)))
        small = inside_mask(coords, 20, 24)
        large = inside_mask(coords, 30, 36)
        assert (large >= small).all()

    def test_projection_backprojection_consistency(self):
        # backproject then project with identity recovers the pixel grid
        k = Intrinsics(50.0, 55.0, 12.0, 9.0)
        depth = torch.from_numpy(np.random.default_rng(9).uniform(1, 30, (1, 1, 18, 25)))
        points = backproject(depth, k)
        coords, z = project(points, k, _identity_pose())
        gx, gy = torch.meshgrid(torch.arange(25.0, dtype=torch.float64),
                                torch.arange(18.0, dtype=torch.float64), indexing="xy")
        assert (coords[0, ..., 0] - gx).abs().max() < 1e-9
        assert (coords[0, ..., 1] - gy).abs().max() < 1e-9
        assert torch.allclose(z, depth)
