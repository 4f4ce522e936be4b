"""Thin-plate-spline maps from surface points to flat image coordinates.

The radial kernel is evaluated either on straight-line distances or on
geodesic distances read from a :class:`~geotex.geodesics.GeodesicTable`.
"""
from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy.spatial.distance import cdist

from .errors import InputError, SolveFailedError

EUCLIDEAN, GEODESIC = "euclidean", "geodesic"
COND_LIMIT = 1e13
AFFINE_RANK_TOL = 1e-9


def kernel_value(d):
    """``d^2 ln d`` with the limit value 0 at d = 0."""
    d = np.asarray(d, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = d * d * np.log(d)
    return np.where(d > 0, out, 0.0)


@dataclass
class TpsModel:
    control_points: np.ndarray  # (n, 3) source anchors
    targets: np.ndarray  # (n, 3) destination anchors, third column zero
    coefficients: np.ndarray  # (n + 4, 3): bending rows, then [1, x, y, z]
    kernel: str
    lam: float
    gram: np.ndarray  # kernel matrix between anchors, without lambda
    condition: float = np.nan
    affine_rank: int = 3

    @property
    def n(self):
        return len(self.control_points)

    @property
    def bending(self):
        return self.coefficients[:self.n]

    @property
    def affine(self):
        return self.coefficients[self.n:]

    def bending_energy(self):
        w = self.bending
        return float(np.sum(w * (self.gram @ w)))


@dataclass
class WarpField:
    coords: np.ndarray  # (N, 2) flat-image coordinates (x, y)
    valid: np.ndarray  # (N,) bool


def _anchor_distances(src, dist):
    if dist is None or (isinstance(dist, str) and dist == EUCLIDEAN):
        return EUCLIDEAN, cdist(src, src)
    d = np.asarray(dist.dist, dtype=np.float64)
    if d.shape != (len(src), len(src)):
        raise InputError(f"distance table is {d.shape}, need {(len(src), len(src))}")
    if not np.all(np.isfinite(d)):
        raise SolveFailedError("geodesic table has unreachable anchor pairs")
    return GEODESIC, d


def _affine_frame(src):
    """Orthonormal directions spanned by the anchors (columns of a 3 x r matrix).

    Coplanar anchors (a flat garment) make ``[1 | src]`` rank-deficient; the
    affine part is then restricted to the directions the anchors span.
    """
    centered = src - src.mean(axis=0)
    _, sv, vt = np.linalg.svd(centered, full_matrices=False)
    keep = sv > AFFINE_RANK_TOL * max(sv[0], 1e-300)
    return vt[keep].T


def solve(anchors_src, anchors_dst, dist=None, lam=0.0):
    """Fit TPS coefficients mapping 3D anchors onto 2D targets.

    ``dist`` is ``None``/``"euclidean"`` or a geodesic table whose ``dist``
    matrix covers the anchors in order. Solves the bordered system
    ``[[K + lam I, P], [P^T, 0]] w = [dst; 0]`` with ``P = [1 | src]`` by LU
    with partial pivoting.
    """
    src = np.asarray(anchors_src, dtype=np.float64)
    dst = np.asarray(anchors_dst, dtype=np.float64)
    n = len(src)
    if src.shape != (n, 3):
        raise InputError(f"anchors_src must be (n, 3), got {src.shape}")
    if dst.shape[0] != n or dst.shape[1] not in (2, 3):
        raise InputError(f"anchors_dst must be (n, 2), got {dst.shape}")
    if n < 5:
        raise InputError(f"need at least 5 anchors, got {n}")
    dst3 = np.zeros((n, 3))
    dst3[:, :dst.shape[1]] = dst

    kind, d = _anchor_distances(src, dist)
    gram = kernel_value(d)
    np.fill_diagonal(gram, 0.0)

    frame = _affine_frame(src)
    r = frame.shape[1]
    p = np.hstack([np.ones((n, 1)), src @ frame])
    size = n + 1 + r
    system = np.zeros((size, size))
    system[:n, :n] = gram + lam * np.eye(n)
    system[:n, n:] = p
    system[n:, :n] = p.T
    rhs = np.zeros((size, 3))
    rhs[:n] = dst3

    # symmetric equilibration: kernel entries (mm^2 log mm) dwarf the unit
    # border column, which would inflate the raw condition number
    scale = 1.0 / np.sqrt(np.maximum(np.abs(system).max(axis=1), 1e-300))
    eq = system * scale[:, None] * scale[None, :]
    cond = np.linalg.cond(eq)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise SolveFailedError(f"TPS system is singular or ill-conditioned (cond={cond:.3g})", cond)
    sol = scipy.linalg.lu_solve(scipy.linalg.lu_factor(eq), rhs * scale[:, None]) * scale[:, None]

    coef = np.zeros((n + 4, 3))
    coef[:n] = sol[:n]
    coef[n] = sol[n]
    coef[n + 1:] = frame @ sol[n + 1:]
    return TpsModel(src, dst3, coef, kind, float(lam), gram, float(cond), r)


def _vertices(points):
    v = getattr(points, "vertices", points)
    return np.asarray(v, dtype=np.float64)


def warp(model, points, dist=None, chunk=8192):
    """Evaluate the fitted map at surface points (a mesh or an (N, 3) array).

    For the geodesic kernel ``dist`` must be the table whose ``vertex_dist``
    holds point-to-anchor distances; points with an unreachable anchor are
    marked invalid.
    """
    x = _vertices(points)
    w = model.coefficients
    n = model.n
    out = np.empty((len(x), 3))
    valid = np.ones(len(x), dtype=bool)
    if model.kernel == GEODESIC:
        if dist is None or isinstance(dist, str):
            raise InputError("geodesic model needs its distance table to warp")
        vd = np.asarray(dist.vertex_dist, dtype=np.float64)
        if vd.shape != (len(x), n):
            raise InputError(f"vertex_dist is {vd.shape}, need {(len(x), n)}")
    for lo in range(0, len(x), chunk):
        xs = x[lo:lo + chunk]
        if model.kernel == GEODESIC:
            d = vd[lo:lo + chunk]
            bad = ~np.all(np.isfinite(d), axis=1)
            valid[lo:lo + chunk] = ~bad
            d = np.where(np.isfinite(d), d, 0.0)
        else:
            d = cdist(xs, model.control_points)
        out[lo:lo + chunk] = kernel_value(d) @ w[:n] + w[n] + xs @ w[n + 1:]
    out[~valid] = np.nan
    return WarpField(out[:, :2].copy(), valid)


def fit_affine(src, dst):
    """Least-squares affine map ``dst ~ [1 | src] @ A``; returns A."""
    src = np.asarray(src, float)
    p = np.hstack([np.ones((len(src), 1)), src])
    a, *_ = np.linalg.lstsq(p, np.asarray(dst, float), rcond=None)
    return a
