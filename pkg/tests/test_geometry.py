import json
import math

import numpy as np
import pytest
import torch

from msdepth.errors import CalibrationError, DomainError, InterfaceError
from msdepth.geometry import (
    CameraModel,
    CameraRig,
    FlowField,
    RigCalibration,
    align_to_plane,
    identity_flow,
    inverse_warp,
    load_calibration,
    project_flow,
    save_calibration,
)


def simple_cam(f=100.0, c=50.0, size=101):
    K = np.array([[f, 0.0, c], [0.0, f, c], [0.0, 0.0, 1.0]])
    return CameraModel(K=K, width=size, height=size)


def translation(tx, ty, tz):
    T = np.eye(4)
    T[:3, 3] = [tx, ty, tz]
    return T


def bilinear_oracle(src, u, v):
    """Scalar four-neighbor interpolation, independent of the tensor path."""
    H, W = src.shape
    u0, v0 = math.floor(u), math.floor(v)
    du, dv = u - u0, v - v0
    u1, v1 = min(u0 + 1, W - 1), min(v0 + 1, H - 1)
    return (
        src[v0, u0] * (1 - du) * (1 - dv)
        + src[v0, u1] * du * (1 - dv)
        + src[v1, u0] * (1 - du) * dv
        + src[v1, u1] * du * dv
    )


class TestProjectFlow:
    def test_identity_transform_gives_pixel_grid_exactly(self):
        cam = simple_cam()
        depth = torch.full((101, 101), 7.0, dtype=torch.float64)
        flow = project_flow(depth, cam, cam, np.eye(4))
        assert torch.all(flow.coords[..., 0] == torch.arange(101, dtype=torch.float64))
        assert torch.all(flow.coords[..., 1] == torch.arange(101, dtype=torch.float64).unsqueeze(1))
        assert bool(flow.valid.all())

    def test_hand_derived_translation_example(self):
        # K^-1 [50,50,1] = [0,0,1]; x10 -> [0,0,10]; +(1,0,0); K -> (600,500,10)/10.
        cam = simple_cam()
        depth = torch.full((101, 101), 10.0, dtype=torch.float64)
        flow = project_flow(depth, cam, cam, translation(1.0, 0.0, 0.0))
        coords = flow.coords[50, 50]
        assert abs(float(coords[0]) - 60.0) < 1e-9
        assert abs(float(coords[1]) - 50.0) < 1e-9

    def test_behind_camera_invalidates_everything(self):
        cam = simple_cam()
        depth = torch.full((101, 101), 10.0, dtype=torch.float64)
        flow = project_flow(depth, cam, cam, translation(0.0, 0.0, -20.0))
        assert not bool(flow.valid.any())

    def test_non_rigid_transform_rejected(self):
        cam = simple_cam()
        depth = torch.full((101, 101), 10.0, dtype=torch.float64)
        T = np.eye(4)
        T[0, 0] = 1.01
        with pytest.raises(CalibrationError):
            project_flow(depth, cam, cam, T)

    def test_non_positive_depth_rejected(self):
        cam = simple_cam()
        depth = torch.full((101, 101), 10.0, dtype=torch.float64)
        depth[3, 4] = 0.0
        with pytest.raises(DomainError):
            project_flow(depth, cam, cam, np.eye(4))
        # The same pixel marked invalid is fine.
        valid = torch.ones(101, 101, dtype=torch.bool)
        valid[3, 4] = False
        flow = project_flow(depth, cam, cam, np.eye(4), valid=valid)
        assert not bool(flow.valid[3, 4])

    def test_valid_mask_monotone_under_frame_shrink(self):
        rng = np.random.default_rng(0)
        cam = simple_cam()
        depth = torch.as_tensor(rng.uniform(2.0, 30.0, size=(101, 101)))
        T = translation(0.4, -0.2, 0.1)
        big = simple_cam(size=101)
        small = CameraModel(K=big.K, width=80, height=80)
        flow_big = project_flow(depth, cam, big, T)
        flow_small = project_flow(depth, cam, small, T)
        assert bool((flow_small.valid <= flow_big.valid).all())


class TestInverseWarp:
    def test_identity_flow_reproduces_source(self):
        rng = np.random.default_rng(1)
        cam = simple_cam(size=16)
        src = torch.as_tensor(rng.standard_normal((3, 16, 16)))
        out = inverse_warp(src, identity_flow(cam))
        assert torch.equal(out.data, src)
        assert bool(out.valid.all())

    def test_half_pixel_shift_on_linear_ramp_is_midpoint(self):
        cam = simple_cam(size=8)
        ramp = torch.arange(8, dtype=torch.float64).repeat(8, 1)  # linear in u
        flow = identity_flow(cam)
        coords = flow.coords.clone()
        coords[..., 0] = (coords[..., 0] + 0.5).clamp(max=7.0)
        shifted = FlowField(coords=coords, valid=flow.valid, ref_width=8, ref_height=8)
        out = inverse_warp(ramp, shifted)
        expect = (ramp + (ramp + 1).clamp(max=7)) / 2
        assert torch.allclose(out.data, expect)

    def test_matches_scalar_oracle_on_random_cases(self):
        rng = np.random.default_rng(2)
        for _ in range(100):
            src = rng.standard_normal((5, 5))
            u = rng.uniform(0, 4, size=(5, 5))
            v = rng.uniform(0, 4, size=(5, 5))
            coords = torch.as_tensor(np.stack([u, v], axis=-1))
            flow = FlowField(
                coords=coords,
                valid=torch.ones(5, 5, dtype=torch.bool),
                ref_width=5,
                ref_height=5,
            )
            out = inverse_warp(torch.as_tensor(src), flow).data.numpy()
            for i in range(5):
                for j in range(5):
                    assert abs(out[i, j] - bilinear_oracle(src, u[i, j], v[i, j])) < 1e-6

    def test_frame_mismatch_rejected(self):
        cam = simple_cam(size=8)
        with pytest.raises(InterfaceError):
            inverse_warp(torch.zeros(3, 9, 8), identity_flow(cam))

    def test_invalid_pixels_are_hard_zero(self):
        cam = simple_cam(size=8)
        flow = identity_flow(cam)
        flow.valid[2:4, 2:4] = False
        out = inverse_warp(torch.ones(8, 8, dtype=torch.float64), flow)
        assert torch.all(out.data[2:4, 2:4] == 0)
        assert torch.all(out.data[flow.valid] == 1)


def two_camera_rig(baseline=0.08):
    cam_a = simple_cam(f=90.0, c=40.0, size=81)
    cam_b = simple_cam(f=70.0, c=40.0, size=81)  # wider FOV
    calib = RigCalibration({("a", "b"): translation(baseline, 0.0, 0.0)})
    return CameraRig(cameras={"a": cam_a, "b": cam_b}, extrinsics=calib)


class TestAlignToPlane:
    def test_self_alignment_is_identity(self):
        rng = np.random.default_rng(3)
        rig = two_camera_rig()
        depth = torch.as_tensor(rng.uniform(3.0, 20.0, size=(81, 81)))
        src = torch.as_tensor(rng.standard_normal((4, 81, 81)))
        out = align_to_plane(src, "a", "a", depth, rig)
        assert torch.allclose(out.data, src, atol=1e-6)
        assert bool(out.valid.all())

    def test_constant_map_stays_constant_on_valid(self):
        rng = np.random.default_rng(4)
        rig = two_camera_rig()
        depth = torch.as_tensor(rng.uniform(3.0, 20.0, size=(81, 81)))
        src = torch.full((81, 81), 2.5, dtype=torch.float64)
        out = align_to_plane(src, "b", "a", depth, rig)
        assert bool(out.valid.any())
        assert torch.allclose(out.data[out.valid], torch.tensor(2.5, dtype=torch.float64))

    def test_feature_scale_uses_scaled_intrinsics(self):
        # Downsampled self-alignment must still be the identity.
        rng = np.random.default_rng(5)
        rig = two_camera_rig()
        depth_small = torch.as_tensor(rng.uniform(3.0, 20.0, size=(27, 27)))
        src_small = torch.as_tensor(rng.standard_normal((2, 27, 27)))
        out = align_to_plane(src_small, "a", "a", depth_small, rig)
        assert torch.allclose(out.data, src_small, atol=1e-6)

    def test_missing_rig_pair_raises(self):
        rig = two_camera_rig()
        depth = torch.full((81, 81), 5.0, dtype=torch.float64)
        with pytest.raises(CalibrationError):
            align_to_plane(torch.zeros(81, 81, dtype=torch.float64), "c", "a", depth, rig)

    def test_round_trip_warp_recovers_smooth_map(self):
        # Warp a->b then b->a with inverse extrinsics; on the doubly-valid
        # region a smooth map must come back within bilinear interpolation error.
        rig = two_camera_rig(baseline=0.05)
        u = torch.arange(81, dtype=torch.float64)
        smooth = torch.sin(u / 12.0).unsqueeze(0) + torch.cos(u / 9.0).unsqueeze(1)
        depth = torch.full((81, 81), 10.0, dtype=torch.float64)
        to_b = align_to_plane(smooth, "a", "b", depth, rig)
        back = align_to_plane(to_b.data, "b", "a", depth, rig)
        both = back.valid & to_b.valid
        # Local Lipschitz bound of the map is ~ max gradient ~ 1/9; allow 2x.
        tol = 2.0 * (1.0 / 9.0)
        assert bool(both.any())
        err = (back.data - smooth)[both].abs().max()
        assert float(err) < tol


class TestDepthGradient:
    def test_warp_gradient_wrt_depth_matches_finite_differences(self):
        rng = np.random.default_rng(6)
        cam_t = simple_cam(f=60.0, c=15.0, size=31)
        cam_r = simple_cam(f=55.0, c=15.0, size=31)
        T = translation(0.07, -0.03, 0.02)
        src = torch.as_tensor(np.cos(rng.standard_normal((31, 31))))
        depth0 = rng.uniform(4.0, 12.0, size=(31, 31))

        def warped_sum(depth_np):
            depth = torch.as_tensor(depth_np)
            flow = project_flow(depth, cam_t, cam_r, T)
            return inverse_warp(src, flow).data.sum()

        depth = torch.as_tensor(depth0.copy(), dtype=torch.float64).requires_grad_(True)
        flow = project_flow(depth, cam_t, cam_r, T)
        out = inverse_warp(src, flow).data.sum()
        out.backward()
        grad = depth.grad.numpy()

        step = 1e-4
        checked = 0
        for _ in range(200):
            i, j = rng.integers(0, 31, size=2)
            dplus = depth0.copy()
            dplus[i, j] += step
            dminus = depth0.copy()
            dminus[i, j] -= step
            fd = float((warped_sum(dplus) - warped_sum(dminus)) / (2 * step))
            if abs(fd) < 1e-6:
                continue  # flat spot, relative error undefined
            rel = abs(grad[i, j] - fd) / max(abs(fd), abs(grad[i, j]))
            assert rel < 1e-3, f"pixel ({i},{j}) rel err {rel}"
            checked += 1
            if checked >= 100:
                break
        assert checked >= 100


class TestCalibrationIO:
    def test_round_trip_and_field_names(self, tmp_path):
        rig = two_camera_rig()
        path = str(tmp_path / "calib.json")
        save_calibration(rig, path)
        with open(path) as f:
            doc = json.load(f)
        assert set(doc.keys()) == {"intrinsics", "extrinsics"}
        assert set(doc["intrinsics"]["a"].keys()) == {"K", "width", "height"}
        assert len(doc["intrinsics"]["a"]["K"]) == 9
        assert "a->b" in doc["extrinsics"]
        assert len(doc["extrinsics"]["a->b"]["T"]) == 16

        loaded = load_calibration(path)
        for name in ("a", "b"):
            assert np.allclose(loaded.cameras[name].K, rig.cameras[name].K)
        assert np.allclose(
            loaded.extrinsics.transform("a", "b"), rig.extrinsics.transform("a", "b")
        )

    def test_rig_closure_completes_inverse_and_composition(self):
        calib = RigCalibration(
            {
                ("a", "b"): translation(0.1, 0.0, 0.0),
                ("b", "c"): translation(0.0, 0.2, 0.0),
            }
        )
        T_ac = calib.transform("a", "c")
        assert np.allclose(T_ac, translation(0.1, 0.2, 0.0))
        assert np.allclose(calib.transform("c", "a"), np.linalg.inv(T_ac))
        assert np.allclose(calib.transform("b", "b"), np.eye(4))

    def test_inconsistent_rig_rejected(self):
        bad = {
            ("a", "b"): translation(0.1, 0.0, 0.0),
            ("b", "a"): translation(0.2, 0.0, 0.0),  # not the inverse
        }
        with pytest.raises(CalibrationError):
            RigCalibration(bad)
