"""Procedural multi-spectral world: analytic scenes with exact per-plane depth.

Scenes are collections of textured quads and spheres ray-cast per camera, so
ground-truth depth is exact. The three spectra render the same geometry with
different responses: RGB sees shaded albedo texture, NIR a distinct grayscale
response of the same texture, THR a smooth emissive intensity. Conditions
apply deterministic per-spectrum corruptions on top.

World frame = RGB camera frame. All rig cameras share the world orientation
and sit at small in-plane offsets, which keeps depth values directly
comparable across planes.
"""

from __future__ import annotations

import csv
import math
import os
import struct
from dataclasses import dataclass, field, replace

import cv2
import numpy as np

from .errors import CalibrationError, ConfigError, DomainError
from .geometry import SPECTRA, CameraModel, CameraRig, RigCalibration, save_calibration

CONDITIONS = ("day", "night", "rain")

_COND_CODE = {c: i for i, c in enumerate(CONDITIONS)}

DEPTH_MIN = 1.0
DEPTH_MAX = 80.0

# Aerial-perspective horizon levels per spectrum; static scene structure,
# identical across conditions.
_HAZE_LENGTH = {"rgb": 60.0, "nir": 70.0, "thr": 90.0}
_HAZE_FLOOR = {"rgb": 0.75, "nir": 0.55, "thr": 0.30}

_LIGHT_DIR = np.array([0.35, -0.5, -0.79])
_LIGHT_DIR = _LIGHT_DIR / np.linalg.norm(_LIGHT_DIR)


def check_condition(label: str) -> str:
    if label not in CONDITIONS:
        raise ConfigError(f"unknown condition '{label}', expected one of {CONDITIONS}")
    return label


@dataclass(frozen=True)
class Primitive:
    """One analytic scene element; `kind` is "sphere" or "quad".

    Spheres use `radius`; quads use the orthonormal in-plane axes `e1`/`e2`
    and half extents. Texture coordinates are arc lengths / in-plane meters,
    so texture frequency is a physical scale cue.
    """

    kind: str
    center: tuple
    radius: float = 0.0
    e1: tuple = (1.0, 0.0, 0.0)
    e2: tuple = (0.0, 1.0, 0.0)
    half_w: float = 0.0
    half_h: float = 0.0
    albedo: tuple = (0.5, 0.5, 0.5)
    nir_albedo: float = 0.5
    tex_freq: tuple = (1.0, 1.0)
    tex_phase: tuple = (0.0, 0.0)
    tex_amp: float = 0.4
    temperature: float = 0.5


@dataclass(frozen=True)
class SceneSpec:
    """Deterministic scene description; equal seeds give equal specs."""

    seed: int
    primitives: tuple


@dataclass
class MultiSpectralSample:
    """Co-captured images plus exact per-plane depth for one scene."""

    images: dict  # spectrum -> (H, W, C) float32 in [0, 1]
    gt_depth: dict  # spectrum -> (H, W) float64, meters
    gt_valid: dict  # spectrum -> (H, W) bool
    condition: str
    rig: CameraRig
    scene_seed: int = 0


@dataclass
class CorruptionConfig:
    """Severity of the condition-dependent sensor degradations."""

    night_rgb_gain: float = 0.2
    night_rgb_noise: float = 0.05
    night_nir_gain: float = 0.7
    rain_streak_frac: tuple = (0.05, 0.15)
    rain_contrast: float = 0.6
    rain_thr_blur: int = 3


@dataclass
class AugmentConfig:
    """Photometric/geometric jitter; all ranges are (lo, hi) factors."""

    crop_scale: tuple = (0.8, 1.0)
    brightness: tuple = (0.9, 1.1)
    contrast: tuple = (0.9, 1.1)
    saturation: tuple = (0.9, 1.1)
    hue: tuple = (0.98, 1.02)
    horizontal_flip: bool = False

    def __post_init__(self):
        for name in ("brightness", "contrast", "saturation", "hue"):
            lo, hi = getattr(self, name)
            if not (0.5 <= lo <= hi <= 1.5):
                raise ConfigError(f"{name} jitter range must lie in [0.5, 1.5]")
        lo, hi = self.crop_scale
        if not (0.5 < lo <= hi <= 1.0):
            raise ConfigError("crop scale must lie in (0.5, 1.0]")

    @classmethod
    def identity(cls) -> "AugmentConfig":
        return cls(
            crop_scale=(1.0, 1.0),
            brightness=(1.0, 1.0),
            contrast=(1.0, 1.0),
            saturation=(1.0, 1.0),
            hue=(1.0, 1.0),
            horizontal_flip=False,
        )


def default_rig() -> CameraRig:
    """Desk-scale three-camera rig; the thermal camera has the widest FOV."""

    def cam(f, width, height):
        K = np.array(
            [[f, 0.0, (width - 1) / 2.0], [0.0, f, (height - 1) / 2.0], [0.0, 0.0, 1.0]]
        )
        return CameraModel(K=K, width=width, height=height)

    cameras = {
        "rgb": cam(80.0, 96, 64),
        "nir": cam(75.0, 88, 56),
        "thr": cam(50.0, 80, 48),
    }
    positions = {"rgb": np.zeros(3), "nir": np.array([0.06, 0.0, 0.0]), "thr": np.array([-0.06, 0.0, 0.0])}
    extrinsic = {}
    for a in SPECTRA:
        for b in SPECTRA:
            if a != b:
                T = np.eye(4)
                T[:3, 3] = positions[a] - positions[b]
                extrinsic[(a, b)] = T
    return CameraRig(cameras=cameras, extrinsics=RigCalibration(extrinsic))


def _camera_positions(rig: CameraRig) -> dict:
    """World (= rgb-frame) position of each camera center."""
    out = {}
    for name in rig.cameras:
        T = rig.extrinsics.transform(name, "rgb")
        out[name] = T[:3, 3].copy()  # image of the camera's own origin
    return out


def generate_scene(seed: int) -> SceneSpec:
    """Deterministic scene with 3..12 foreground primitives plus a backdrop."""
    rng = np.random.default_rng(seed)
    n = int(rng.integers(3, 13))
    prims = []

    def texture_params():
        return dict(
            albedo=tuple(rng.uniform(0.15, 0.9, size=3).round(6)),
            nir_albedo=float(rng.uniform(0.2, 0.95)),
            tex_freq=tuple(rng.uniform(0.5, 3.0, size=2).round(6)),
            tex_phase=tuple(rng.uniform(0.0, 2 * math.pi, size=2).round(6)),
            tex_amp=float(rng.uniform(0.25, 0.6)),
            temperature=float(rng.uniform(0.25, 0.9)),
        )

    for _ in range(n):
        kind = "sphere" if rng.random() < 0.5 else "quad"
        z = float(np.exp(rng.uniform(math.log(2.5), math.log(35.0))))
        x = float(rng.uniform(-0.4, 0.4)) * z
        y = float(rng.uniform(-0.3, 0.3)) * z
        if kind == "sphere":
            r = float(min(rng.uniform(0.25, 0.25 + 0.12 * z), 3.0))
            z = max(z, DEPTH_MIN + r + 0.4)  # nearest point stays >= 1 m
            prims.append(
                Primitive(kind="sphere", center=(x, y, z), radius=r, **texture_params())
            )
        else:
            hw = float(min(rng.uniform(0.3, 0.3 + 0.15 * z), 4.0))
            hh = float(min(rng.uniform(0.3, 0.3 + 0.15 * z), 4.0))
            nvec = np.array([rng.uniform(-0.45, 0.45), rng.uniform(-0.45, 0.45), -1.0])
            nvec /= np.linalg.norm(nvec)
            e1 = np.array([nvec[2], 0.0, -nvec[0]])
            e1 /= np.linalg.norm(e1)
            e2 = np.cross(nvec, e1)
            z = max(z, DEPTH_MIN + max(hw, hh) + 0.6)
            prims.append(
                Primitive(
                    kind="quad",
                    center=(x, y, z),
                    e1=tuple(e1.round(9)),
                    e2=tuple(e2.round(9)),
                    half_w=hw,
                    half_h=hh,
                    **texture_params(),
                )
            )

    # Backdrop: fronto-parallel quad covering every camera frustum, so depth
    # coverage is dense.
    z_bg = float(rng.uniform(55.0, 75.0))
    prims.append(
        Primitive(
            kind="quad",
            center=(0.0, 0.0, z_bg),
            e1=(1.0, 0.0, 0.0),
            e2=(0.0, 1.0, 0.0),
            half_w=1.1 * z_bg,
            half_h=1.1 * z_bg,
            albedo=tuple(rng.uniform(0.3, 0.7, size=3).round(6)),
            nir_albedo=float(rng.uniform(0.3, 0.7)),
            tex_freq=tuple(rng.uniform(0.03, 0.15, size=2).round(6)),
            tex_phase=tuple(rng.uniform(0.0, 2 * math.pi, size=2).round(6)),
            tex_amp=float(rng.uniform(0.15, 0.35)),
            temperature=float(rng.uniform(0.25, 0.6)),
        )
    )
    return SceneSpec(seed=int(seed), primitives=tuple(prims))


def primitive_min_distance(prim: Primitive, point: np.ndarray) -> float:
    """Distance from `point` to the nearest point of the primitive surface."""
    c = np.asarray(prim.center)
    if prim.kind == "sphere":
        return float(np.linalg.norm(point - c) - prim.radius)
    rel = point - c
    e1, e2 = np.asarray(prim.e1), np.asarray(prim.e2)
    a = float(np.clip(rel @ e1, -prim.half_w, prim.half_w))
    b = float(np.clip(rel @ e2, -prim.half_h, prim.half_h))
    nearest = c + a * e1 + b * e2
    return float(np.linalg.norm(point - nearest))


def _intersect(prim: Primitive, origin: np.ndarray, dirs: np.ndarray) -> np.ndarray:
    """Smallest positive ray parameter per ray, +inf where the primitive is missed.

    Rays are origin + t * dirs with dirs_z = 1, so t equals camera-frame depth.
    """
    inf = np.inf
    if prim.kind == "sphere":
        c = np.asarray(prim.center)
        oc = origin - c
        A = np.sum(dirs * dirs, axis=1)
        B = 2.0 * dirs @ oc
        C = oc @ oc - prim.radius**2
        disc = B * B - 4 * A * C
        hit = disc >= 0
        t = np.full(dirs.shape[0], inf)
        sq = np.sqrt(np.maximum(disc, 0.0))
        t0 = (-B - sq) / (2 * A)
        t1 = (-B + sq) / (2 * A)
        tt = np.where(t0 > 1e-6, t0, np.where(t1 > 1e-6, t1, inf))
        t[hit] = tt[hit]
        return t
    c = np.asarray(prim.center)
    e1, e2 = np.asarray(prim.e1), np.asarray(prim.e2)
    n = np.cross(e1, e2)
    denom = dirs @ n
    safe = np.abs(denom) > 1e-9
    t = np.full(dirs.shape[0], inf)
    t_plane = ((c - origin) @ n) / np.where(safe, denom, 1.0)
    X = origin + t_plane[:, None] * dirs
    rel = X - c
    a = rel @ e1
    b = rel @ e2
    inside = (np.abs(a) <= prim.half_w) & (np.abs(b) <= prim.half_h)
    ok = safe & inside & (t_plane > 1e-6)
    t[ok] = t_plane[ok]
    return t


def _surface_attrs(prim: Primitive, X: np.ndarray, origin: np.ndarray):
    """(texture coords a, b in meters, outward normal) at hit points X."""
    c = np.asarray(prim.center)
    if prim.kind == "sphere":
        rel = (X - c) / prim.radius
        rel = np.clip(rel, -1.0, 1.0)
        theta = np.arctan2(rel[:, 1], rel[:, 0])
        phi = np.arccos(np.clip(rel[:, 2], -1.0, 1.0))
        a = theta * prim.radius
        b = phi * prim.radius
        normal = (X - c) / prim.radius
    else:
        e1, e2 = np.asarray(prim.e1), np.asarray(prim.e2)
        rel = X - c
        a = rel @ e1
        b = rel @ e2
        n = np.cross(e1, e2)
        normal = np.broadcast_to(n, X.shape).copy()
    # Orient normals toward the viewer.
    view = origin - X
    flip = np.sum(normal * view, axis=1) < 0
    normal[flip] *= -1.0
    return a, b, normal


def _render_plane(scene: SceneSpec, cam: CameraModel, origin: np.ndarray):
    """Ray-cast one camera plane; returns (depth, rgb, nir, thr, valid)."""
    H, W = cam.height, cam.width
    u, v = np.meshgrid(np.arange(W, dtype=np.float64), np.arange(H, dtype=np.float64))
    pix = np.stack([u.ravel(), v.ravel(), np.ones(H * W)], axis=1)
    dirs = pix @ np.linalg.inv(cam.K).T  # z-component is exactly 1

    t_best = np.full(H * W, np.inf)
    idx_best = np.full(H * W, -1, dtype=np.int64)
    for k, prim in enumerate(scene.primitives):
        t = _intersect(prim, origin, dirs)
        closer = t < t_best
        t_best[closer] = t[closer]
        idx_best[closer] = k

    valid = np.isfinite(t_best)
    depth = np.where(valid, t_best, 0.0)
    rgb = np.zeros((H * W, 3))
    nir = np.zeros(H * W)
    thr = np.zeros(H * W)

    for k, prim in enumerate(scene.primitives):
        m = idx_best == k
        if not m.any():
            continue
        X = origin + t_best[m, None] * dirs[m]
        a, b, normal = _surface_attrs(prim, X, origin)
        tex = np.sin(2 * math.pi * prim.tex_freq[0] * a + prim.tex_phase[0]) * np.sin(
            2 * math.pi * prim.tex_freq[1] * b + prim.tex_phase[1]
        )
        shade = 0.55 + 0.45 * np.clip(normal @ (-_LIGHT_DIR), 0.0, 1.0)
        d = t_best[m]

        base_rgb = np.asarray(prim.albedo)[None, :] * (1.0 + prim.tex_amp * tex[:, None])
        haze = np.exp(-d / _HAZE_LENGTH["rgb"])
        rgb[m] = base_rgb * shade[:, None] * haze[:, None] + _HAZE_FLOOR["rgb"] * (
            1.0 - haze[:, None]
        )

        base_nir = prim.nir_albedo * (1.0 + 0.8 * prim.tex_amp * tex)
        haze = np.exp(-d / _HAZE_LENGTH["nir"])
        nir[m] = base_nir * shade * haze + _HAZE_FLOOR["nir"] * (1.0 - haze)

        # Emissive, nearly isothermal: only a weak large-scale drift.
        drift = 0.04 * np.sin(0.35 * a + prim.tex_phase[0])
        haze = np.exp(-d / _HAZE_LENGTH["thr"])
        thr[m] = (prim.temperature + drift) * haze + _HAZE_FLOOR["thr"] * (1.0 - haze)

    def img(x, c):
        return np.clip(x, 0.0, 1.0).reshape(H, W, c).astype(np.float32)

    return (
        depth.reshape(H, W),
        img(rgb, 3),
        img(nir, 1),
        img(thr, 1),
        valid.reshape(H, W),
    )


def _box_blur(img: np.ndarray, k: int) -> np.ndarray:
    flat = cv2.blur(img, (k, k))
    return flat.reshape(img.shape)


def _rain_streak_mask(rng: np.random.Generator, H: int, W: int, frac_range) -> np.ndarray:
    target = rng.uniform(*frac_range)
    mask = np.zeros((H, W), dtype=bool)
    while mask.mean() < target:
        x0 = rng.uniform(0, W - 1)
        y0 = rng.uniform(0, H - 1)
        length = rng.uniform(0.15, 0.4) * H
        angle = rng.uniform(-0.3, 0.3)  # radians off vertical
        thickness = int(rng.integers(1, 3))
        x1 = x0 + length * math.sin(angle)
        y1 = y0 + length * math.cos(angle)
        canvas = mask.astype(np.uint8)
        cv2.line(canvas, (int(round(x0)), int(round(y0))), (int(round(x1)), int(round(y1))), 1, thickness)
        mask = canvas.astype(bool)
    return mask


def _apply_condition(images: dict, condition: str, rng: np.random.Generator, cfg: CorruptionConfig) -> dict:
    if condition == "day":
        return images
    out = {}
    if condition == "night":
        rgb = cfg.night_rgb_gain * images["rgb"]
        rgb = rgb + rng.normal(0.0, cfg.night_rgb_noise, size=rgb.shape)
        out["rgb"] = np.clip(rgb, 0.0, 1.0).astype(np.float32)
        out["nir"] = np.clip(cfg.night_nir_gain * images["nir"], 0.0, 1.0).astype(np.float32)
        out["thr"] = images["thr"]
        return out
    # rain
    for name in ("rgb", "nir"):
        img = images[name]
        H, W = img.shape[:2]
        streaks = _rain_streak_mask(rng, H, W, cfg.rain_streak_frac)
        blurred = _box_blur(img, 5)
        img = np.where(streaks[:, :, None], blurred, img)
        mean = img.mean()
        img = mean + cfg.rain_contrast * (img - mean)
        out[name] = np.clip(img, 0.0, 1.0).astype(np.float32)
    out["thr"] = np.clip(_box_blur(images["thr"], cfg.rain_thr_blur), 0.0, 1.0).astype(np.float32)
    return out


def render_sample(
    scene: SceneSpec,
    rig: CameraRig,
    condition: str,
    corruption: CorruptionConfig | None = None,
) -> MultiSpectralSample:
    """Ray-cast all three planes of a scene and apply the condition corruption."""
    check_condition(condition)
    missing = [s for s in SPECTRA if s not in rig.cameras]
    if missing:
        raise CalibrationError(f"rig is missing cameras for {missing}")
    corruption = corruption or CorruptionConfig()
    positions = _camera_positions(rig)

    images = {}
    gt_depth = {}
    gt_valid = {}
    for name in SPECTRA:
        depth, rgb, nir, thr, valid = _render_plane(scene, rig.cameras[name], positions[name])
        gt_depth[name] = depth
        gt_valid[name] = valid
        images[name] = {"rgb": rgb, "nir": nir, "thr": thr}[name]

    rng = np.random.default_rng([scene.seed, _COND_CODE[condition]])
    images = _apply_condition(images, condition, rng, corruption)
    return MultiSpectralSample(
        images=images,
        gt_depth=gt_depth,
        gt_valid=gt_valid,
        condition=condition,
        rig=rig,
        scene_seed=scene.seed,
    )


def _resize_with_crop(img: np.ndarray, crop_h: int, crop_w: int, out_h: int, out_w: int, nearest: bool):
    """Center crop to (crop_h, crop_w), then resize back to (out_h, out_w).

    Sampling puts pixel centers at integer coordinates so intrinsics update
    exactly as: shift principal point by the crop offset, then scale by the
    per-axis resize factor (n_out - 1) / (n_crop - 1).
    """
    H, W = img.shape[:2]
    oy = (H - crop_h) / 2.0
    ox = (W - crop_w) / 2.0
    sy = (crop_h - 1) / (out_h - 1)
    sx = (crop_w - 1) / (out_w - 1)
    ys = oy + np.arange(out_h) * sy
    xs = ox + np.arange(out_w) * sx
    map_x, map_y = np.meshgrid(xs.astype(np.float32), ys.astype(np.float32))
    interp = cv2.INTER_NEAREST if nearest else cv2.INTER_LINEAR
    src = img.astype(np.float32) if not nearest else img
    out = cv2.remap(src, map_x, map_y, interp)
    if img.ndim == 3 and out.ndim == 2:
        out = out[:, :, None]
    return out, (ox, oy, 1.0 / sx, 1.0 / sy)


def _update_camera(cam: CameraModel, ox, oy, fx_scale, fy_scale) -> CameraModel:
    K = cam.K.copy()
    K[0, 2] -= ox
    K[1, 2] -= oy
    K[0, :] *= fx_scale
    K[1, :] *= fy_scale
    return CameraModel(K=K, width=cam.width, height=cam.height)


def _rgb_sat_hue(img: np.ndarray, sat: float, hue_shift: float) -> np.ndarray:
    if sat != 1.0:
        luma = img.mean(axis=2, keepdims=True)
        img = luma + sat * (img - luma)
        img = np.clip(img, 0.0, 1.0)
    if hue_shift != 0.0:
        from matplotlib.colors import hsv_to_rgb, rgb_to_hsv

        hsv = rgb_to_hsv(np.clip(img, 0.0, 1.0))
        hsv[..., 0] = (hsv[..., 0] + hue_shift) % 1.0
        img = hsv_to_rgb(hsv)
    return img


def augment(sample: MultiSpectralSample, cfg: AugmentConfig, seed: int) -> MultiSpectralSample:
    """Jitter a sample: shared center crop-and-resize, per-spectrum photometrics.

    Intrinsics are updated consistently with the geometric transform; depth is
    resampled nearest-neighbor and valid masks are propagated. Skipped ops
    (factor exactly 1) leave arrays bit-identical.
    """
    rng = np.random.default_rng(seed)
    scale = float(rng.uniform(*cfg.crop_scale))
    do_flip = bool(cfg.horizontal_flip and rng.random() < 0.5)

    images = {}
    gt_depth = {}
    gt_valid = {}
    cameras = {}
    for name in SPECTRA:
        img = sample.images[name]
        depth = sample.gt_depth[name]
        valid = sample.gt_valid[name]
        cam = sample.rig.cameras[name]
        if scale != 1.0:
            H, W = img.shape[:2]
            ch = max(2, int(round(scale * H)))
            cw = max(2, int(round(scale * W)))
            img, params = _resize_with_crop(img, ch, cw, H, W, nearest=False)
            depth, _ = _resize_with_crop(depth, ch, cw, H, W, nearest=True)
            valid, _ = _resize_with_crop(valid.astype(np.uint8), ch, cw, H, W, nearest=True)
            valid = valid.astype(bool)
            cam = _update_camera(cam, *params)
        if do_flip:
            img = img[:, ::-1].copy()
            depth = depth[:, ::-1].copy()
            valid = valid[:, ::-1].copy()
            K = cam.K.copy()
            K[0, 2] = (cam.width - 1) - K[0, 2]
            cam = CameraModel(K=K, width=cam.width, height=cam.height)

        brightness = float(rng.uniform(*cfg.brightness))
        contrast = float(rng.uniform(*cfg.contrast))
        if brightness != 1.0:
            img = np.clip(img * brightness, 0.0, 1.0)
        if contrast != 1.0:
            mean = img.mean()
            img = np.clip(mean + contrast * (img - mean), 0.0, 1.0)
        if name == "rgb":
            sat = float(rng.uniform(*cfg.saturation))
            hue = float(rng.uniform(*cfg.hue))
            img = _rgb_sat_hue(img, sat, hue - 1.0 if hue != 1.0 else 0.0)
        images[name] = img.astype(np.float32)
        gt_depth[name] = depth
        gt_valid[name] = valid
        cameras[name] = cam

    rig = CameraRig(cameras=cameras, extrinsics=sample.rig.extrinsics)
    return MultiSpectralSample(
        images=images,
        gt_depth=gt_depth,
        gt_valid=gt_valid,
        condition=sample.condition,
        rig=rig,
        scene_seed=sample.scene_seed,
    )


def allocate_conditions(n: int, mix: dict) -> list:
    """Largest-remainder apportionment of `n` samples over the mix."""
    total = sum(mix.values())
    if abs(total - 1.0) > 1e-9:
        raise ConfigError(f"condition mix must sum to 1, got {total}")
    for cond in mix:
        check_condition(cond)
    quotas = {c: n * p for c, p in mix.items()}
    counts = {c: int(math.floor(q)) for c, q in quotas.items()}
    leftover = n - sum(counts.values())
    by_frac = sorted(mix, key=lambda c: (-(quotas[c] - counts[c]), CONDITIONS.index(c)))
    for c in by_frac[:leftover]:
        counts[c] += 1
    return [c for c in CONDITIONS if c in counts for _ in range(counts[c])]


class SampleSource:
    """Ordered, deterministic, lazily rendered sample sequence."""

    def __init__(self, n, split_seed, condition_mix, rig=None, corruption=None, cache=True):
        self.split_seed = int(split_seed)
        self.rig = rig or default_rig()
        self.corruption = corruption or CorruptionConfig()
        conditions = allocate_conditions(n, condition_mix)
        order = np.random.default_rng(self.split_seed).permutation(n)
        self.conditions = [conditions[i] for i in order]
        self.seeds = [
            int(np.random.SeedSequence([self.split_seed, i]).generate_state(1)[0])
            for i in range(n)
        ]
        self._cache = {} if cache else None

    def __len__(self):
        return len(self.seeds)

    def __getitem__(self, i: int) -> MultiSpectralSample:
        if self._cache is not None and i in self._cache:
            return self._cache[i]
        scene = generate_scene(self.seeds[i])
        sample = render_sample(scene, self.rig, self.conditions[i], self.corruption)
        if self._cache is not None:
            self._cache[i] = sample
        return sample


def make_dataset(n: int, split_seed: int, condition_mix: dict, rig=None, corruption=None) -> SampleSource:
    """Deterministic sample source; distinct split seeds give disjoint scenes."""
    if n < 0:
        raise DomainError("dataset size must be nonnegative")
    return SampleSource(n, split_seed, condition_mix, rig=rig, corruption=corruption)


def write_pfm(path: str, data: np.ndarray) -> None:
    """Grayscale PFM, little-endian, rows stored bottom-to-top."""
    data = np.asarray(data, dtype=np.float32)
    if data.ndim != 2:
        raise ValueError("pfm writer expects a 2-D map")
    with open(path, "wb") as f:
        f.write(b"Pf\n")
        f.write(f"{data.shape[1]} {data.shape[0]}\n".encode())
        f.write(b"-1.0\n")
        f.write(np.flipud(data).tobytes())


def read_pfm(path: str) -> np.ndarray:
    with open(path, "rb") as f:
        if f.readline().strip() != b"Pf":
            raise ValueError("not a grayscale PFM file")
        w, h = map(int, f.readline().split())
        scale = float(f.readline())
        data = np.frombuffer(f.read(), dtype="<f4" if scale < 0 else ">f4")
    return np.flipud(data.reshape(h, w)).copy()


def export_dataset(source: SampleSource, out_dir: str) -> None:
    """Per-sample 16-bit PNGs + PFM depths + calibration, with an index CSV."""
    os.makedirs(out_dir, exist_ok=True)
    save_calibration(source.rig, os.path.join(out_dir, "calibration.json"))
    rows = []
    for i in range(len(source)):
        sample = source[i]
        sdir = os.path.join(out_dir, f"sample_{i:05d}")
        os.makedirs(sdir, exist_ok=True)
        for name in SPECTRA:
            img = np.round(sample.images[name] * 65535.0).astype(np.uint16)
            if img.shape[2] == 3:
                img = img[:, :, ::-1]  # RGB -> BGR for the PNG writer
            else:
                img = img[:, :, 0]
            cv2.imwrite(os.path.join(sdir, f"{name}.png"), img)
            write_pfm(os.path.join(sdir, f"depth_{name}.pfm"), sample.gt_depth[name])
        rows.append((i, sample.condition, source.seeds[i]))
    with open(os.path.join(out_dir, "index.csv"), "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["sample_id", "condition", "seed"])
        writer.writerows(rows)
