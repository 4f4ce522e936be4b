"""Synthetic retexture jobs with analytic ground truth.

Every case is a developable garment: a rectangle of flat-image pixels bent
along a profile curve in the x-z plane and extruded along y. The profile is
parametrized by arc length, so flat pixel distances map isometrically onto
the surface (``MM_PER_PX`` millimeters per flat pixel). Scene rasters come
from casting one camera ray per pixel center against the surface, and the
scene color is the flat texture sampled at the hit's flat coordinates.
"""
from dataclasses import dataclass

import numpy as np

from .errors import InputError
from .meshing import DepthFrame, Intrinsics
from .pipeline import LandmarkSet, Params, RetextureJob, sample_bilinear

CASES = ("plane", "cylinder_fold", "bump")
TEXTURES = ("checker", "smooth", "stripes")
GARMENT_HEIGHT_MM = 500.0
FLAT_MARGIN = 8
BACKGROUND = (40, 40, 40)
BACKGROUND_DEPTH = 2000.0


@dataclass
class SyntheticCase:
    job: RetextureJob
    flat_landmarks: LandmarkSet
    scene_landmarks: LandmarkSet
    truth_uv: np.ndarray  # (H, W, 2) flat (x, y) seen by each scene pixel, NaN off-garment
    mm_per_px: float

    def __iter__(self):
        return iter((self.job, self.flat_landmarks, self.scene_landmarks))


class Profile:
    """Arc-length parametrized curve z(x) over ``[x_lo, x_hi]``."""

    def __init__(self, z, dz, x_lo, x_hi, samples=400001):
        self.z, self.dz = z, dz
        x = np.linspace(x_lo, x_hi, samples)
        speed = np.sqrt(1.0 + dz(x) ** 2)
        # trapezoid rule on a fine grid; the integrand is smooth
        self.x = x
        self.s = np.concatenate([[0.0], np.cumsum(0.5 * (speed[1:] + speed[:-1]) * np.diff(x))])
        self.ratio = x / z(x)
        if np.any(np.diff(self.ratio) <= 0):
            raise InputError("profile folds over itself as seen from the camera")

    @property
    def length(self):
        return float(self.s[-1])

    def x_of_s(self, s):
        return np.interp(s, self.s, self.x)

    def hit(self, a):
        """Solve ``x = a z(x)`` for camera rays with slope ``a``; NaN if missed."""
        inside = (a >= self.ratio[0]) & (a <= self.ratio[-1])
        x = np.interp(a, self.ratio, self.x)
        lo, hi = self.x[0], self.x[-1]
        for _ in range(3):  # Newton polish on the interpolated root
            f = x - a * self.z(x)
            x = np.clip(x - f / (1.0 - a * self.dz(x)), lo, hi)
        x = np.where(inside, x, np.nan)
        return x, np.interp(x, self.x, self.s)


def _profile(case):
    if case == "plane":
        z0 = 1000.0
        return Profile(lambda x: np.full_like(x, z0), np.zeros_like, -200.0, 200.0)
    if case == "bump":
        z0, amp, w = 1000.0, 60.0, 70.0
        return Profile(lambda x: z0 - amp * np.exp(-x * x / (2 * w * w)),
                       lambda x: amp * x / (w * w) * np.exp(-x * x / (2 * w * w)), -200.0, 200.0)
    if case == "cylinder_fold":
        return _fold_profile()
    raise InputError(f"unknown synthetic case {case!r}; expected one of {CASES}")


def _fold_profile():
    # gently curved drape (cylinder radius 800 mm) with a vertical pleat
    # receding from the camera in the middle
    r, z0 = 800.0, 1000.0
    amp, w, half = 100.0, 25.0, 220.0

    def z(x):
        return z0 + r - np.sqrt(r * r - x * x) + amp * np.exp(-x * x / (2 * w * w))

    def dz(x):
        return x / np.sqrt(r * r - x * x) - amp * x / (w * w) * np.exp(-x * x / (2 * w * w))

    return Profile(z, dz, -half, half)


def make_texture(kind, shape, period=None):
    h, w = shape
    y, x = np.mgrid[0:h, 0:w].astype(float)
    if kind == "checker":
        p = period or max(4, min(h, w) // 8)
        c = ((x // p + y // p) % 2).astype(bool)
        img = np.where(c[..., None], [220, 60, 50], [40, 80, 200])
    elif kind == "stripes":
        p = period or max(4, w // 10)
        c = (x // p % 2).astype(bool)
        img = np.where(c[..., None], [240, 230, 200], [30, 110, 60])
    elif kind == "smooth":
        u, v = x / max(w, 1), y / max(h, 1)
        img = np.stack([128 + 90 * np.sin(2 * np.pi * u + 0.5),
                        128 + 90 * np.sin(2 * np.pi * v + 1.3),
                        128 + 60 * np.cos(2 * np.pi * (u + v))], axis=-1)
    else:
        raise InputError(f"unknown texture {kind!r}; expected one of {TEXTURES}")
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)


def _landmark_grid(u_lo, u_hi, v_lo, v_hi, inset=0.15):
    us = np.linspace(u_lo + inset * (u_hi - u_lo), u_hi - inset * (u_hi - u_lo), 4)
    vs = np.linspace(v_lo + inset * (v_hi - v_lo), v_hi - inset * (v_hi - v_lo), 4)
    return {f"L{i * 4 + j:02d}": (us[j], vs[i]) for i in range(4) for j in range(4)}


def make_synthetic(case="plane", resolution=128, texture="checker", params=None):
    """Build a job plus (flat, scene) ground-truth landmark sets.

    Unpacks as ``job, flat_landmarks, scene_landmarks``; the returned case
    also carries the per-pixel true flat coordinates.

    ``resolution`` is the scene image side in pixels. The garment is 500 mm
    tall and its flat image spans about 0.8 * resolution pixels vertically.
    """
    if resolution < 64:
        raise InputError("resolution must be at least 64")
    prof = _profile(case)
    res = int(resolution)

    gh = int(round(0.8 * res))
    mm_per_px = GARMENT_HEIGHT_MM / gh
    gw = int(np.floor(prof.length / mm_per_px))
    m = FLAT_MARGIN
    flat_shape = (gh + 2 * m, gw + 2 * m)
    flat_color = make_texture(texture, flat_shape)
    flat_mask = np.zeros(flat_shape, bool)
    flat_mask[m:m + gh, m:m + gw] = True
    # the garment covers flat pixel centers m .. m + g - 1; edges half a pixel out
    u_lo, u_hi = m - 0.5, m + gw - 0.5
    v_lo, v_hi = m - 0.5, m + gh - 0.5
    s_off = 0.5 * (prof.length - gw * mm_per_px)  # centers the garment on the profile

    f = 1.2 * res
    cx = cy = (res - 1) / 2.0
    K = Intrinsics(f, f, cx, cy)
    rows, cols = np.mgrid[0:res, 0:res].astype(float)
    a, b = (cols - cx) / f, (rows - cy) / f
    x, s = prof.hit(a.ravel())
    z = prof.z(np.nan_to_num(x))
    u = u_lo + (s - s_off) / mm_per_px
    y3 = b.ravel() * z
    v = (v_lo + v_hi) / 2 + y3 / mm_per_px
    hit = np.isfinite(x) & (u >= u_lo) & (u <= u_hi) & (v >= v_lo) & (v <= v_hi)

    depth = np.full(res * res, BACKGROUND_DEPTH)
    depth[hit] = z[hit]
    scene = np.tile(np.array(BACKGROUND, np.uint8), (res * res, 1))
    uv = np.stack([u, v], 1)
    scene[hit] = np.clip(np.rint(sample_bilinear(flat_color, uv[hit])), 0, 255).astype(np.uint8)
    mask = hit.reshape(res, res)

    flat_lm = _landmark_grid(u_lo, u_hi, v_lo, v_hi)
    scene_lm = {}
    for name, (lu, lv) in flat_lm.items():
        xs = prof.x_of_s((lu - u_lo) * mm_per_px + s_off)
        p3 = np.array([xs, (lv - (v_lo + v_hi) / 2) * mm_per_px, prof.z(np.array(xs))])
        scene_lm[name] = (p3[0] * f / p3[2] + cx, p3[1] * f / p3[2] + cy)

    params = params or Params()
    params = params.with_updates(fx=K.fx, fy=K.fy, cx=K.cx, cy=K.cy)
    job = RetextureJob(scene.reshape(res, res, 3), DepthFrame(depth.reshape(res, res), K), mask,
                       flat_color, flat_mask, params)
    truth = np.where(hit[:, None], uv, np.nan).reshape(res, res, 2)
    return SyntheticCase(job, LandmarkSet(flat_lm, "flat"), LandmarkSet(scene_lm, "scene"), truth, mm_per_px)
