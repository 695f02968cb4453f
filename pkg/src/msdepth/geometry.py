"""Differentiable pinhole projection flow and inverse warping across camera planes.

Convention: pixel centers sit at integer coordinates, origin at the top-left
pixel center, x right / y down. Depth is the z-coordinate in the camera frame.
All transforms are 4x4 rigid matrices; ``T_a_to_b`` maps points expressed in
camera ``a``'s frame into camera ``b``'s frame.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np
import torch

from .errors import CalibrationError, DomainError, InterfaceError

SPECTRA = ("rgb", "nir", "thr")

_RIGID_TOL = 1e-6
_RIG_CONSISTENCY_TOL = 1e-9


@dataclass(frozen=True)
class CameraModel:
    """Zero-skew pinhole camera: 3x3 intrinsics plus frame size in pixels."""

    K: np.ndarray
    width: int
    height: int

    def __post_init__(self):
        K = np.asarray(self.K, dtype=np.float64)
        if K.shape != (3, 3):
            raise CalibrationError(f"intrinsics must be 3x3, got {K.shape}")
        if abs(K[2, 2] - 1.0) > 1e-12 or np.any(np.abs(K[2, :2]) > 1e-12):
            raise CalibrationError("last intrinsics row must be [0, 0, 1]")
        if K[0, 0] <= 0 or K[1, 1] <= 0:
            raise CalibrationError("focal lengths must be positive")
        if abs(K[0, 1]) > 1e-12:
            raise CalibrationError("skew is unsupported")
        if self.width <= 0 or self.height <= 0:
            raise CalibrationError("frame size must be positive")
        object.__setattr__(self, "K", K)

    def scaled(self, width: int, height: int) -> "CameraModel":
        """Intrinsics for the same view resampled to ``width`` x ``height``.

        Focal lengths and principal point scale per axis by the resolution
        ratio, which keeps the projection equation valid at reduced feature
        scales.
        """
        if width == self.width and height == self.height:
            return self
        sx = width / self.width
        sy = height / self.height
        K = self.K.copy()
        K[0, :] *= sx
        K[1, :] *= sy
        return CameraModel(K=K, width=width, height=height)


def _check_rigid(T: np.ndarray, tol: float) -> None:
    R = T[:3, :3]
    if np.max(np.abs(R.T @ R - np.eye(3))) > tol:
        raise CalibrationError("rotation block is not orthonormal")
    if np.max(np.abs(T[3] - np.array([0.0, 0.0, 0.0, 1.0]))) > tol:
        raise CalibrationError("last transform row must be [0, 0, 0, 1]")


@dataclass
class RigCalibration:
    """Pairwise rigid extrinsics between spectrum camera frames.

    ``extrinsic[(a, b)]`` maps points from frame ``a`` to frame ``b``. Missing
    pairs are completed by inversion and composition at construction; the
    closure is validated for mutual consistency.
    """

    extrinsic: dict = field(default_factory=dict)

    def __post_init__(self):
        pairs = {}
        spectra = set()
        for (a, b), T in self.extrinsic.items():
            T = np.asarray(T, dtype=np.float64).reshape(4, 4)
            _check_rigid(T, _RIGID_TOL)
            pairs[(a, b)] = T
            spectra.update((a, b))
        for s in spectra:
            pairs.setdefault((s, s), np.eye(4))
        # Closure: add inverses, then compose through intermediate frames.
        changed = True
        while changed:
            changed = False
            for (a, b), T in list(pairs.items()):
                if (b, a) not in pairs:
                    pairs[(b, a)] = np.linalg.inv(T)
                    changed = True
            for (a, b), T_ab in list(pairs.items()):
                for (c, d), T_cd in list(pairs.items()):
                    if c == b and (a, d) not in pairs:
                        pairs[(a, d)] = T_cd @ T_ab
                        changed = True
        for (a, b), T in pairs.items():
            if (b, a) in pairs:
                err = np.max(np.abs(pairs[(b, a)] @ T - np.eye(4)))
                if err > _RIG_CONSISTENCY_TOL:
                    raise CalibrationError(
                        f"extrinsics {a}<->{b} are not mutually inverse (err={err:.3g})"
                    )
            _check_rigid(T, _RIG_CONSISTENCY_TOL)
        self.extrinsic = pairs

    def transform(self, src: str, dst: str) -> np.ndarray:
        """4x4 transform taking points from frame ``src`` into frame ``dst``."""
        try:
            return self.extrinsic[(src, dst)]
        except KeyError:
            raise CalibrationError(f"no extrinsics for pair {src}->{dst}") from None


@dataclass
class CameraRig:
    """Per-spectrum camera models plus their pairwise extrinsics."""

    cameras: dict
    extrinsics: RigCalibration

    def camera(self, spectrum: str) -> CameraModel:
        try:
            return self.cameras[spectrum]
        except KeyError:
            raise CalibrationError(f"no camera model for spectrum '{spectrum}'") from None


@dataclass
class FlowField:
    """Sub-pixel correspondences from a target plane into a reference frame.

    ``coords`` is (H, W, 2) holding (u, v) positions in the reference image;
    ``valid`` is true where the projected point has positive depth and lands
    inside the reference frame.
    """

    coords: torch.Tensor
    valid: torch.Tensor
    ref_width: int
    ref_height: int


@dataclass
class WarpResult:
    """Resampled map on the target plane; ``data`` is zero wherever invalid."""

    data: torch.Tensor
    valid: torch.Tensor


def _pixel_grid(height: int, width: int, dtype, device) -> torch.Tensor:
    v, u = torch.meshgrid(
        torch.arange(height, dtype=dtype, device=device),
        torch.arange(width, dtype=dtype, device=device),
        indexing="ij",
    )
    return u, v


def project_flow(
    depth_tgt: torch.Tensor,
    cam_tgt: CameraModel,
    cam_ref: CameraModel,
    T: np.ndarray,
    valid: torch.Tensor | None = None,
) -> FlowField:
    """Per-pixel flow from the target plane into the reference frame.

    Each target pixel is lifted with the target intrinsics and its depth,
    moved by the rigid transform ``T`` (target frame -> reference frame) and
    projected with the reference intrinsics. Differentiable in ``depth_tgt``.
    """
    if depth_tgt.dim() != 2:
        raise InterfaceError(f"depth must be (H, W), got shape {tuple(depth_tgt.shape)}")
    H, W = depth_tgt.shape
    if (H, W) != (cam_tgt.height, cam_tgt.width):
        raise InterfaceError(
            f"depth shape {(H, W)} does not match target camera {(cam_tgt.height, cam_tgt.width)}"
        )
    T = np.asarray(T, dtype=np.float64).reshape(4, 4)
    _check_rigid(T, _RIGID_TOL)

    if valid is not None:
        valid = valid.to(torch.bool)
        if bool(torch.any((depth_tgt <= 0) & valid)):
            raise DomainError("non-positive depth at a valid pixel")
    else:
        if bool(torch.any(depth_tgt <= 0)):
            raise DomainError("non-positive depth at a valid pixel")

    dtype = depth_tgt.dtype if depth_tgt.dtype.is_floating_point else torch.float64
    device = depth_tgt.device
    depth = depth_tgt.to(dtype)

    # Identity calibration: coordinates reduce to the pixel grid independent
    # of depth, so return it exactly rather than through K @ K^-1 round-off.
    if (
        np.array_equal(T, np.eye(4))
        and np.array_equal(cam_tgt.K, cam_ref.K)
        and (cam_tgt.width, cam_tgt.height) == (cam_ref.width, cam_ref.height)
    ):
        u, v = _pixel_grid(H, W, dtype, device)
        coords = torch.stack([u, v], dim=-1)
        flow_valid = torch.ones(H, W, dtype=torch.bool, device=device)
        if valid is not None:
            flow_valid = flow_valid & valid
        return FlowField(coords=coords, valid=flow_valid, ref_width=cam_ref.width, ref_height=cam_ref.height)

    K_tgt_inv = torch.from_numpy(np.linalg.inv(cam_tgt.K)).to(dtype=dtype, device=device)
    K_ref = torch.from_numpy(cam_ref.K).to(dtype=dtype, device=device)
    Tt = torch.from_numpy(T).to(dtype=dtype, device=device)

    u, v = _pixel_grid(H, W, dtype, device)
    ones = torch.ones_like(u)
    pix = torch.stack([u, v, ones], dim=-1)  # (H, W, 3)
    rays = pix @ K_tgt_inv.T
    pts = rays * depth.unsqueeze(-1)  # target-frame 3D points
    pts = pts @ Tt[:3, :3].T + Tt[:3, 3]
    proj = pts @ K_ref.T
    z = proj[..., 2]

    safe_z = torch.where(z.abs() > 1e-12, z, torch.ones_like(z))
    coords = proj[..., :2] / safe_z.unsqueeze(-1)

    in_front = z > 0
    in_frame = (
        (coords[..., 0] >= 0)
        & (coords[..., 0] <= cam_ref.width - 1)
        & (coords[..., 1] >= 0)
        & (coords[..., 1] <= cam_ref.height - 1)
    )
    flow_valid = in_front & in_frame
    if valid is not None:
        flow_valid = flow_valid & valid
    return FlowField(coords=coords, valid=flow_valid, ref_width=cam_ref.width, ref_height=cam_ref.height)


def inverse_warp(src: torch.Tensor, flow: FlowField) -> WarpResult:
    """Bilinearly resample ``src`` at the flow coordinates.

    Output keeps the flow's spatial shape and the channel count of ``src``;
    invalid pixels are hard zero. Gradients reach both the source values and
    the flow coordinates (and through them the depth that produced the flow).
    """
    squeeze = src.dim() == 2
    if squeeze:
        src = src.unsqueeze(0)
    if src.dim() != 3:
        raise InterfaceError(f"source map must be (C, H, W) or (H, W), got {tuple(src.shape)}")
    C, Hs, Ws = src.shape
    if (Hs, Ws) != (flow.ref_height, flow.ref_width):
        raise InterfaceError(
            f"source frame {(Hs, Ws)} does not match flow reference {(flow.ref_height, flow.ref_width)}"
        )
    coords = flow.coords.to(src.dtype)
    u = coords[..., 0].clamp(0, Ws - 1)
    v = coords[..., 1].clamp(0, Hs - 1)

    u0 = u.floor()
    v0 = v.floor()
    wu = u - u0
    wv = v - v0
    iu0 = u0.long()
    iv0 = v0.long()
    iu1 = (iu0 + 1).clamp(max=Ws - 1)
    iv1 = (iv0 + 1).clamp(max=Hs - 1)

    def gather(iv, iu):
        return src[:, iv.reshape(-1), iu.reshape(-1)].reshape(C, *iv.shape)

    top = gather(iv0, iu0) * (1 - wu) + gather(iv0, iu1) * wu
    bot = gather(iv1, iu0) * (1 - wu) + gather(iv1, iu1) * wu
    data = top * (1 - wv) + bot * wv
    data = data * flow.valid.to(data.dtype)
    if squeeze:
        data = data.squeeze(0)
    return WarpResult(data=data, valid=flow.valid.clone())


def align_to_plane(
    src_map: torch.Tensor,
    src_spectrum: str,
    dst_spectrum: str,
    dst_depth: torch.Tensor,
    rig: CameraRig,
    dst_valid: torch.Tensor | None = None,
) -> WarpResult:
    """Resample ``src_spectrum``'s map onto ``dst_spectrum``'s plane.

    ``dst_depth`` is the destination plane's depth map, possibly at reduced
    spatial scale; intrinsics on both sides are rescaled to the actual map
    sizes before projecting.
    """
    Hd, Wd = dst_depth.shape
    Hs, Ws = src_map.shape[-2], src_map.shape[-1]
    cam_dst = rig.camera(dst_spectrum).scaled(width=Wd, height=Hd)
    cam_src = rig.camera(src_spectrum).scaled(width=Ws, height=Hs)
    T = rig.extrinsics.transform(dst_spectrum, src_spectrum)
    flow = project_flow(dst_depth, cam_dst, cam_src, T, valid=dst_valid)
    return inverse_warp(src_map, flow)


def identity_flow(cam: CameraModel, dtype=torch.float64, device=None) -> FlowField:
    """Flow that maps every pixel of ``cam`` onto itself."""
    u, v = _pixel_grid(cam.height, cam.width, dtype, device)
    coords = torch.stack([u, v], dim=-1)
    valid = torch.ones(cam.height, cam.width, dtype=torch.bool, device=device)
    return FlowField(coords=coords, valid=valid, ref_width=cam.width, ref_height=cam.height)


def save_calibration(rig: CameraRig, path: str) -> None:
    doc = {
        "intrinsics": {
            name: {
                "K": [float(x) for x in cam.K.reshape(-1)],
                "width": int(cam.width),
                "height": int(cam.height),
            }
            for name, cam in rig.cameras.items()
        },
        "extrinsics": {
            f"{a}->{b}": {"T": [float(x) for x in T.reshape(-1)]}
            for (a, b), T in rig.extrinsics.extrinsic.items()
            if a != b
        },
    }
    tmp = path + ".tmp"
    with open(tmp, "w") as f:
        json.dump(doc, f, indent=2)
    os.replace(tmp, path)


def load_calibration(path: str) -> CameraRig:
    with open(path) as f:
        doc = json.load(f)
    try:
        cameras = {
            name: CameraModel(
                K=np.array(entry["K"], dtype=np.float64).reshape(3, 3),
                width=int(entry["width"]),
                height=int(entry["height"]),
            )
            for name, entry in doc["intrinsics"].items()
        }
        extrinsic = {}
        for key, entry in doc["extrinsics"].items():
            a, b = key.split("->")
            extrinsic[(a, b)] = np.array(entry["T"], dtype=np.float64).reshape(4, 4)
    except (KeyError, ValueError) as exc:
        raise CalibrationError(f"malformed calibration file {path}: {exc}") from exc
    return CameraRig(cameras=cameras, extrinsics=RigCalibration(extrinsic))
