"""Non-rigid contour registration by Gaussian-mixture L2 matching.

Each point set defines an equal-weight isotropic mixture. The model is
deformed by a 2D thin-plate spline on a regular control grid to minimize
the L2 distance between its mixture and the scene's, coarse to fine over a
decreasing schedule of Gaussian scales. Hard correspondences are read off
the registered model with an order-preserving cyclic alignment.
"""
import logging
import os
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize
from scipy.spatial.distance import cdist

from .errors import InputError, RegistrationDivergedError
from .imaging import Contour
from .tps import kernel_value

try:
    from . import _gmm as _compiled
except ImportError:  # extension not built
    _compiled = None

log = logging.getLogger(__name__)

if _compiled is not None and os.environ.get("GEOTEX_BACKEND", "").lower() != "python":
    BACKEND = "compiled"
else:
    BACKEND = "python"


@dataclass(frozen=True)
class GmmConfig:
    scales: tuple = (0.4, 0.2, 0.1, 0.05, 0.02)
    max_evals: tuple = (50, 500, 100, 100, 100)
    control_count: int = 25
    tps_regularization: tuple = (0.1, 0.01, 1e-3, 1e-4, 1e-5)

    def __post_init__(self):
        s = np.asarray(self.scales, float)
        if len(s) == 0 or np.any(s <= 0) or np.any(np.diff(s) >= 0):
            raise InputError(f"scales must be positive and strictly decreasing: {self.scales}")
        if len(self.max_evals) != len(s):
            raise InputError("max_evals needs one budget per scale")
        if len(self.tps_regularization) != len(s):
            raise InputError("tps_regularization needs one value per scale")
        g = int(round(np.sqrt(self.control_count)))
        if g * g != self.control_count or g < 2:
            raise InputError("control_count must be a square number >= 4")


@dataclass
class Correspondence:
    pairs: np.ndarray  # (m, 2): model index, scene index
    transformed_model: np.ndarray
    history: list = field(default_factory=list, repr=False)


def _points(x):
    return x.points if isinstance(x, Contour) else np.asarray(x, dtype=np.float64)


def _gauss_sum(a, b, sigma):
    d2 = cdist(a, b, "sqeuclidean")
    return np.exp(-d2 / (4.0 * sigma * sigma)), d2


def gmm_l2_cost(model, scene, sigma):
    """Squared L2 distance between the two point sets' Gaussian mixtures.

    Mixtures are ``f = 1/m sum N(x; m_i, sigma^2 I)`` and likewise ``g``; the
    integral of a product of two such components is a Gaussian of variance
    ``2 sigma^2`` in their offset, so every term is a closed-form double sum.
    """
    if sigma <= 0:
        raise InputError("sigma must be positive")
    m, s = _points(model), _points(scene)
    c = 1.0 / (4.0 * np.pi * sigma * sigma)
    mm = _gauss_sum(m, m, sigma)[0].sum() / len(m) ** 2
    ss = _gauss_sum(s, s, sigma)[0].sum() / len(s) ** 2
    ms = _gauss_sum(m, s, sigma)[0].sum() / (len(m) * len(s))
    return float(max(c * (mm - 2.0 * ms + ss), 0.0))


def _terms_numpy(m, s, sigma):
    e_mm, _ = _gauss_sum(m, m, sigma)
    e_ms, _ = _gauss_sum(m, s, sigma)
    g_self = e_mm.sum(1)[:, None] * m - e_mm @ m
    g_cross = e_ms.sum(1)[:, None] * m - e_ms @ s
    return e_mm.sum(), e_ms.sum(), g_self, g_cross


def _terms(m, s, sigma, backend):
    backend = backend or BACKEND
    if backend == "compiled":
        if _compiled is None:
            raise RuntimeError("compiled mixture kernels are not built")
        return _compiled.gauss_terms(np.ascontiguousarray(m), np.ascontiguousarray(s), float(sigma))
    if backend == "python":
        return _terms_numpy(m, s, sigma)
    raise ValueError(f"unknown backend {backend!r}")


def gmm_l2_grad(model, scene, sigma, include_scene_term=True, backend=None):
    """Cost and its gradient with respect to the model points, shape (m, 2)."""
    m, s = _points(model), _points(scene)
    nm, ns = len(m), len(s)
    c = 1.0 / (4.0 * np.pi * sigma * sigma)
    k = 1.0 / (2.0 * sigma * sigma)
    self_sum, cross_sum, g_self, g_cross = _terms(m, s, sigma, backend)
    cost = self_sum / nm ** 2 - 2.0 * cross_sum / (nm * ns)
    if include_scene_term:
        cost += _gauss_sum(s, s, sigma)[0].sum() / ns ** 2
    # d/dm_i exp(-|m_i - x|^2 / 4s^2) = -exp(.) (m_i - x) / 2s^2; self pairs count twice
    grad = -k * (2.0 * g_self / nm ** 2 - 2.0 * g_cross / (nm * ns))
    return float(c * cost), c * grad


class ContourDeformation:
    """2D thin-plate-spline warp of a fixed point set on a control grid.

    Parameters are an affine block ``A`` (3x2) and bending weights ``w``
    expressed in the null space of the control points' affine basis, so the
    bending part never contains an affine component.
    """

    def __init__(self, points, control_count=25):
        p = np.asarray(points, float)
        g = int(round(np.sqrt(control_count)))
        lo, hi = p.min(0), p.max(0)
        gx, gy = np.meshgrid(np.linspace(lo[0], hi[0], g), np.linspace(lo[1], hi[1], g))
        self.control = np.stack([gx.ravel(), gy.ravel()], 1)
        self.points = p
        self.basis = np.hstack([np.ones((len(p), 1)), p])
        ctrl_aff = np.hstack([np.ones((len(self.control), 1)), self.control])
        q, _ = np.linalg.qr(ctrl_aff, mode="complete")
        self.null = q[:, 3:]
        self.kernel = kernel_value(cdist(p, self.control)) @ self.null
        kc = kernel_value(cdist(self.control, self.control))
        self.bend = self.null.T @ kc @ self.null
        self.n_bend = self.null.shape[1]

    @property
    def n_params(self):
        return 2 * (3 + self.n_bend)

    def identity(self):
        a = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
        return np.concatenate([a.ravel(), np.zeros(2 * self.n_bend)])

    def split(self, theta):
        return theta[:6].reshape(3, 2), theta[6:].reshape(self.n_bend, 2)

    def apply(self, theta):
        a, w = self.split(theta)
        return self.basis @ a + self.kernel @ w

    def bending_energy(self, theta):
        _, w = self.split(theta)
        return float(np.sum(w * (self.bend @ w)))

    def chain(self, theta, grad_points, reg):
        """Parameter gradient of ``E(points(theta)) + reg * bending``."""
        _, w = self.split(theta)
        ga = self.basis.T @ grad_points
        gw = self.kernel.T @ grad_points + 2.0 * reg * (self.bend @ w)
        return np.concatenate([ga.ravel(), gw.ravel()])


def cyclic_alignment(moved, scene, window=3):
    """Order-preserving assignment of every moved point to a scene point.

    Scene offsets ``j_i`` (relative to a start index near the nearest
    neighbor of the first moved point) are nondecreasing in ``i``; the total
    Euclidean distance is minimized by dynamic programming.
    """
    t, s = np.asarray(moved, float), np.asarray(scene, float)
    m, n = len(t), len(s)
    nn0 = int(np.argmin(np.linalg.norm(s - t[0], axis=1)))
    best = None
    for back in range(window + 1):
        s0 = (nn0 - back) % n
        ss = np.roll(s, -s0, axis=0)
        cost = cdist(t, ss)
        prev = cost[0].copy()
        pargs = np.empty((m, n), dtype=np.int64)
        for i in range(1, m):
            run_min = np.minimum.accumulate(prev)
            # argmin of prev over [0, j]: last index where the running min was set
            idx = np.arange(n)
            is_new = np.concatenate([[True], prev[1:] < run_min[:-1]])
            pargs[i - 1] = np.maximum.accumulate(np.where(is_new, idx, 0))
            prev = cost[i] + run_min
        j = int(np.argmin(prev))
        total = float(prev[j])
        if best is None or total < best[0]:
            js = np.empty(m, dtype=np.int64)
            js[m - 1] = j
            for i in range(m - 1, 0, -1):
                js[i - 1] = pargs[i - 1][js[i]]
            best = (total, (js + s0) % n)
    return np.stack([np.arange(m), best[1]], axis=1)


def register(model, scene, cfg=None):
    """Deform ``model`` onto ``scene`` and return hard correspondences.

    Both inputs are expected to be normalized contours. Each annealing level
    runs L-BFGS on the scaled cost ``4 pi sigma^2 * L2 + reg * bending``
    (the scene self-term is constant and dropped), warm-started from the
    previous level.
    """
    cfg = cfg or GmmConfig()
    m, s = _points(model), _points(scene)
    deform = ContourDeformation(m, cfg.control_count)
    theta = deform.identity()
    history = []
    for sigma, budget, reg in zip(cfg.scales, cfg.max_evals, cfg.tps_regularization):
        scale = 4.0 * np.pi * sigma * sigma

        def objective(th):
            pts = deform.apply(th)
            cost, g = gmm_l2_grad(pts, s, sigma, include_scene_term=False)
            val = scale * cost + reg * deform.bending_energy(th)
            grad = deform.chain(th, scale * g, reg)
            if not (np.isfinite(val) and np.all(np.isfinite(grad))):
                raise RegistrationDivergedError(f"non-finite cost at sigma={sigma}")
            return val, grad

        res = minimize(objective, theta, jac=True, method="L-BFGS-B",
                       options={"maxfun": int(budget), "maxiter": int(budget),
                                "ftol": 1e-10, "gtol": 1e-9})
        if not np.all(np.isfinite(res.x)):
            raise RegistrationDivergedError(f"parameters diverged at sigma={sigma}")
        theta = res.x
        history.append({"sigma": sigma, "nfev": int(res.nfev), "cost": float(res.fun)})
        log.debug("sigma=%g nfev=%d cost=%.6g", sigma, res.nfev, res.fun)
    moved = deform.apply(theta)
    pairs = cyclic_alignment(moved, s)
    return Correspondence(pairs, moved, history)


def correspondences_to_pixels(corr, model_transform, scene_transform, model=None, scene=None):
    """Matched pairs in pixel space: (model pixel, scene pixel) per pair.

    ``model``/``scene`` are the normalized contours the pairs index into;
    without them the registered model points stand in for the model side.
    """
    pairs = np.asarray(corr.pairs)
    mpts = _points(model)[pairs[:, 0]] if model is not None else corr.transformed_model[pairs[:, 0]]
    if scene is None:
        raise InputError("scene contour is required to look up scene indices")
    spts = _points(scene)[pairs[:, 1]]
    return model_transform.inverse(mpts), scene_transform.inverse(spts)
