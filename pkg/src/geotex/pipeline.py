"""End-to-end retexturing and the landmark evaluation protocol.

Stages: mask cleanup, meshing, contour extraction, contour registration,
geodesic table, TPS solve and warp, texture sampling with shading. Errors
leaving a stage carry its name in ``stage``.
"""
import contextlib
import dataclasses
import logging
from dataclasses import dataclass, field, fields

import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree

from . import tps
from .errors import EmptySurfaceError, GeotexError, InputError, NumericalError
from .geodesics import DEFAULT_SEED_RADIUS, GeodesicTable, build_table
from .imaging import (extract_contour, fill_holes, largest_component, normalize_contour,
                      open_mask, resample_contour)
from .meshing import (DepthFrame, Intrinsics, depth_to_mesh, downscale_depth, downscale_mask,
                      smooth_depth)
from .registration import GmmConfig, correspondences_to_pixels, register

log = logging.getLogger(__name__)

STAGES = ("mask", "meshing", "contour", "registration", "geodesics", "tps", "render")


@dataclass(frozen=True)
class Params:
    """Every tunable of a retexture run; ``from_mapping`` parses key=value text."""

    # mm^2: positive values damp the bending part; see README on scale
    lam: float = 1e5
    kernel: str = "geodesic"
    solver: str = "fmm"
    scales: tuple = (0.4, 0.2, 0.1, 0.05, 0.02)
    max_evals: tuple = (50, 500, 100, 100, 100)
    tps_regularization: tuple = (0.1, 0.01, 1e-3, 1e-4, 1e-5)
    control_count: int = 25
    contour_points: int = 400
    anchor_points: int = 120
    arc_length: str = "surface"
    opening_radius: int = 2
    depth_sigma: float = 1.0
    downscale: float = 1.0
    edge_max: float = 30.0
    fx: float = None
    fy: float = None
    cx: float = None
    cy: float = None
    depth_min: float = 300.0
    depth_max: float = 8000.0
    seed_radius: float = DEFAULT_SEED_RADIUS
    use_flags: bool = True
    workers: int = 1
    tps_normalize: bool = False
    shade_gain: float = 1.6
    shade_gamma: float = 1.0

    # config-file spelling of fields whose Python name differs
    ALIASES = {"lambda": "lam"}

    def __post_init__(self):
        if self.kernel not in (tps.EUCLIDEAN, tps.GEODESIC):
            raise InputError(f"kernel must be euclidean or geodesic, got {self.kernel!r}")
        if self.solver not in ("fmm", "dijkstra"):
            raise InputError(f"solver must be fmm or dijkstra, got {self.solver!r}")
        if self.arc_length not in ("surface", "image"):
            raise InputError(f"arc_length must be surface or image, got {self.arc_length!r}")
        if not 5 <= self.anchor_points <= self.contour_points:
            raise InputError("need 5 <= anchor_points <= contour_points")
        if self.opening_radius < 0:
            raise InputError("opening_radius must be non-negative")

    @classmethod
    def from_mapping(cls, mapping):
        known = {f.name: f for f in fields(cls)}
        kw = {}
        for key, raw in mapping.items():
            name = cls.ALIASES.get(key, key)
            if name not in known:
                raise InputError(f"unknown config key {key!r}")
            kw[name] = _parse(known[name].default, raw, key)
        return cls(**kw)

    def to_mapping(self):
        inv = {v: k for k, v in self.ALIASES.items()}
        return {inv.get(f.name, f.name): getattr(self, f.name) for f in fields(self)
                if getattr(self, f.name) is not None}

    def with_updates(self, **kw):
        return dataclasses.replace(self, **kw)

    def intrinsics(self):
        vals = (self.fx, self.fy, self.cx, self.cy)
        if any(v is None for v in vals):
            raise InputError("camera intrinsics fx, fy, cx, cy must be configured")
        return Intrinsics(*vals)

    def gmm(self):
        return GmmConfig(tuple(self.scales), tuple(self.max_evals), self.control_count,
                         tuple(self.tps_regularization))


def _parse(default, raw, key):
    if not isinstance(raw, str):
        return raw
    try:
        if isinstance(default, bool):
            if raw.lower() in ("1", "true", "yes", "on"):
                return True
            if raw.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if isinstance(default, tuple):
            conv = int if all(isinstance(x, int) for x in default) else float
            return tuple(conv(x) for x in raw.split(","))
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, str):
            return raw
        return float(raw)  # float fields, including the unset intrinsics
    except ValueError as exc:
        raise InputError(f"bad value for {key}: {raw!r}") from exc


@dataclass
class RetextureJob:
    scene_color: np.ndarray
    scene_depth: DepthFrame
    scene_mask: np.ndarray
    flat_color: np.ndarray
    flat_mask: np.ndarray
    params: Params = field(default_factory=Params)
    scene_ir: np.ndarray = None

    def __post_init__(self):
        h, w = self.scene_depth.shape
        if self.scene_color.shape[:2] != (h, w) or np.shape(self.scene_mask) != (h, w):
            raise InputError("scene color, depth and mask must share dimensions")
        if self.scene_ir is not None and np.shape(self.scene_ir) != (h, w):
            raise InputError("scene IR must match the scene dimensions")
        if self.flat_color.shape[:2] != np.shape(self.flat_mask):
            raise InputError("flat color and mask must share dimensions")


@dataclass
class LandmarkSet:
    points: dict  # name -> (x, y) in pixels
    frame: str = "scene"
    unmatched: tuple = ()

    def __post_init__(self):
        if self.frame not in ("scene", "flat"):
            raise InputError(f"landmark frame must be scene or flat, got {self.frame!r}")
        self.points = {str(k): (float(v[0]), float(v[1])) for k, v in dict(self.points).items()}

    @property
    def names(self):
        return list(self.points)

    def array(self, names=None):
        names = self.names if names is None else names
        return np.array([self.points[n] for n in names], float).reshape(-1, 2)


@dataclass
class RetextureResult:
    image: np.ndarray
    mesh: object
    warp: object
    model: object
    table: object
    correspondence: object
    anchor_vertices: np.ndarray
    anchor_targets: np.ndarray
    scene_contour: object
    flat_contour: object
    pixel_vertex: np.ndarray  # scene pixel -> owning vertex (-1 if none)


@contextlib.contextmanager
def stage(name):
    try:
        yield
    except GeotexError as exc:
        if exc.stage is None:
            exc.stage = name
        raise
    except (np.linalg.LinAlgError, FloatingPointError, ZeroDivisionError) as exc:
        err = NumericalError(str(exc))
        err.stage = name
        raise err from exc


def shade(color, ir, gain=1.6, gamma=1.0):
    """``color * clamp(gain * ir^gamma, 0, 1)`` per channel; ``ir=None`` is identity."""
    color = np.asarray(color, float)
    if ir is None:
        return color
    ir = np.asarray(ir, float)
    if np.any(ir < 0) or np.any(ir > 1):
        raise InputError("ir must lie in [0, 1]")
    f = np.clip(gain * ir ** gamma, 0.0, 1.0)
    return color * (f[..., None] if color.ndim > f.ndim else f)


def sample_bilinear(img, xy):
    """Sample an (H, W[, C]) image at float (x, y) positions, clamped to the border."""
    img = np.asarray(img, float)
    h, w = img.shape[:2]
    x = np.clip(np.asarray(xy, float)[:, 0], 0, w - 1)
    y = np.clip(np.asarray(xy, float)[:, 1], 0, h - 1)
    x0 = np.minimum(np.floor(x).astype(int), w - 2) if w > 1 else np.zeros(len(x), int)
    y0 = np.minimum(np.floor(y).astype(int), h - 2) if h > 1 else np.zeros(len(y), int)
    fx, fy = x - x0, y - y0
    x1, y1 = np.minimum(x0 + 1, w - 1), np.minimum(y0 + 1, h - 1)
    if img.ndim == 3:
        fx, fy = fx[:, None], fy[:, None]
    top = img[y0, x0] * (1 - fx) + img[y0, x1] * fx
    bot = img[y1, x0] * (1 - fx) + img[y1, x1] * fx
    return top * (1 - fy) + bot * fy


def clean_mask(mask, radius):
    return largest_component(open_mask(fill_holes(mask), radius))


def _scene_xy(mesh, factor):
    """Scene pixel coordinates (x, y) of every vertex at full resolution."""
    rc = mesh.pixel_of_vertex.astype(float)
    xy = rc[:, ::-1]
    return xy if factor == 1 else (xy + 0.5) / factor - 0.5


def _snap(points_xy, mesh_xy):
    _, idx = cKDTree(mesh_xy).query(points_xy)
    return idx


def _scaled_table(table, factor):
    return GeodesicTable(table.sources, table.dist * factor, table.vertex_dist * factor, table.flags,
                         table.paths, table.extractions)


def fit_warp(mesh, src_vertices, targets, params):
    """Geodesic table (if needed), TPS solve and warp; returns (model, warp, table)."""
    table = None
    if params.kernel == tps.GEODESIC:
        with stage("geodesics"):
            table = build_table(mesh, src_vertices, params.solver, params.use_flags,
                                params.workers, backend=None, seed_radius=params.seed_radius)
    with stage("tps"):
        src = mesh.vertices[src_vertices]
        dst = np.asarray(targets, float)
        if not params.tps_normalize:
            model = tps.solve(src, dst, table, params.lam)
            return model, tps.warp(model, mesh, table), table
        # both sides mapped to unit scale for conditioning experiments
        c_s, k_s = src.mean(0), np.ptp(src, axis=0).max()
        c_d, k_d = dst.mean(0), np.ptp(dst, axis=0).max()
        t = None if table is None else _scaled_table(table, 1.0 / k_s)
        model = tps.solve((src - c_s) / k_s, (dst - c_d) / k_d, t, params.lam)
        w = tps.warp(model, (mesh.vertices - c_s) / k_s, t)
        return model, tps.WarpField(w.coords * k_d + c_d, w.valid), table


def run(job):
    """Retexture a job and keep every intermediate product."""
    p = job.params
    with stage("mask"):
        if not np.any(job.scene_mask):
            raise EmptySurfaceError("scene mask is empty")
        scene_mask_in = fill_holes(job.scene_mask)
        scene_mask = clean_mask(scene_mask_in, p.opening_radius)
        flat_mask = clean_mask(job.flat_mask, p.opening_radius)

    with stage("meshing"):
        depth = np.where(scene_mask, job.scene_depth.depth, 0.0)
        frame = smooth_depth(dataclasses.replace(job.scene_depth, depth=depth), p.depth_sigma)
        mesh_mask = scene_mask
        if p.downscale != 1:
            frame = downscale_depth(frame, p.downscale)
            mesh_mask = downscale_mask(scene_mask, p.downscale)
        mesh = depth_to_mesh(frame, mesh_mask, p.edge_max)
        mesh_xy = _scene_xy(mesh, p.downscale)

    with stage("contour"):
        vop = mesh.vertex_of_pixel
        c_r = extract_contour(fill_holes(vop >= 0))
        arc = None
        if p.arc_length == "surface":
            cols, rows = c_r.points[:, 0].astype(int), c_r.points[:, 1].astype(int)
            arc = mesh.vertices[vop[rows, cols]]
        c_r = resample_contour(c_r, p.contour_points, arc_points=arc)
        if p.downscale != 1:
            c_r = dataclasses.replace(c_r, points=(c_r.points + 0.5) / p.downscale - 0.5)
        c_f = resample_contour(extract_contour(flat_mask), p.contour_points)
        n_r, t_r = normalize_contour(c_r)
        n_f, t_f = normalize_contour(c_f)

    with stage("registration"):
        corr = register(n_r, n_f, p.gmm())
        keep = np.floor(np.arange(p.anchor_points) * (p.contour_points / p.anchor_points)).astype(int)
        model_px, flat_px = correspondences_to_pixels(corr, t_r, t_f, n_r, n_f)
        model_px, flat_px = model_px[keep], flat_px[keep]
        verts = _snap(model_px, mesh_xy)
        _, first = np.unique(verts, return_index=True)
        first = np.sort(first)  # lockstep dedup, keeping contour order
        anchor_vertices, anchor_targets = verts[first], flat_px[first]
        if len(first) < len(verts):
            log.info("dropped %d duplicate anchor snaps", len(verts) - len(first))

    model, warp, table = fit_warp(mesh, anchor_vertices, anchor_targets, p)

    with stage("render"):
        hf, wf = flat_mask.shape
        w = warp.coords
        inside = warp.valid & np.all(np.isfinite(w), axis=1)
        xi = np.rint(np.where(inside, w[:, 0], 0)).astype(int)
        yi = np.rint(np.where(inside, w[:, 1], 0)).astype(int)
        inside &= (xi >= 0) & (xi < wf) & (yi >= 0) & (yi < hf)
        inside[inside] = flat_mask[yi[inside], xi[inside]]
        warp = tps.WarpField(w, inside)

        pixel_vertex = _pixel_owner(mesh, job.scene_depth.shape, p.downscale)
        image = render(job, warp, pixel_vertex, scene_mask_in)
    return RetextureResult(image, mesh, warp, model, table, corr, anchor_vertices, anchor_targets,
                           c_r, c_f, pixel_vertex)


def _pixel_owner(mesh, shape, factor):
    vop = mesh.vertex_of_pixel
    if factor == 1:
        return vop
    h, w = shape
    r = np.minimum(np.floor((np.arange(h) + 0.5) * factor).astype(int), vop.shape[0] - 1)
    c = np.minimum(np.floor((np.arange(w) + 0.5) * factor).astype(int), vop.shape[1] - 1)
    return vop[np.ix_(r, c)]


def render(job, warp, pixel_vertex, target_mask):
    """Write warped, shaded texture over the scene pixels of ``target_mask``.

    Mask pixels without a valid warped vertex copy the nearest valid pixel.
    """
    p = job.params
    out = job.scene_color.astype(float).copy()
    owner = np.where(pixel_vertex >= 0, pixel_vertex, 0)
    good = (pixel_vertex >= 0) & warp.valid[owner] & target_mask
    if not good.any():
        raise NumericalError("no scene pixel received a valid warp")
    colors = np.zeros(out.shape)
    colors[good] = sample_bilinear(job.flat_color, warp.coords[owner[good]])
    holes = target_mask & ~good
    if holes.any():
        _, (ri, ci) = ndimage.distance_transform_edt(~good, return_indices=True)
        colors[holes] = colors[ri[holes], ci[holes]]
    ir = None if job.scene_ir is None else job.scene_ir
    shaded = shade(colors, ir, p.shade_gain, p.shade_gamma)
    out[target_mask] = shaded[target_mask]
    result = job.scene_color.copy()
    result[target_mask] = np.clip(np.rint(out[target_mask]), 0, 255).astype(job.scene_color.dtype)
    return result


def retexture(job):
    """Scene color image with the flat garment's texture mapped onto the garment."""
    return run(job).image


def eval_landmarks(predicted, truth):
    """Per-landmark pixel distances plus their mean and mean square."""
    pred = predicted.points if isinstance(predicted, LandmarkSet) else dict(predicted)
    true = truth.points if isinstance(truth, LandmarkSet) else dict(truth)
    if set(pred) != set(true) or len(pred) == 0:
        raise InputError(f"landmark names differ: {sorted(set(pred) ^ set(true))}")
    names = list(true)
    d = np.array([np.hypot(pred[n][0] - true[n][0], pred[n][1] - true[n][1]) for n in names])
    return {"mean_distance": float(d.mean()), "mean_squared": float(np.mean(d * d)),
            "per_landmark": list(zip(names, d.tolist()))}


def _barycentric(q, tri):
    a, b, c = tri
    m = np.array([b - a, c - a]).T
    det = np.linalg.det(m)
    if abs(det) < 1e-300:
        return None
    l1, l2 = np.linalg.solve(m, q - a)
    return np.array([1 - l1 - l2, l1, l2])


def warp_landmarks(flat_landmarks, warp, mesh, scene_xy=None, k=6):
    """Scene positions whose warped coordinates land on the flat landmarks.

    The nearest warped vertex is located by KD-tree; the answer is refined
    inside the incident triangle (among those of the ``k`` nearest vertices)
    that contains the landmark in warped space. Landmarks farther than one
    warped edge from every valid triangle are reported unmatched.
    """
    xy = _scene_xy(mesh, 1) if scene_xy is None else np.asarray(scene_xy, float)
    valid = warp.valid & np.all(np.isfinite(warp.coords), axis=1)
    if not valid.any():
        raise NumericalError("warp has no valid vertex")
    ids = np.flatnonzero(valid)
    tree = cKDTree(warp.coords[ids])
    ptr, fidx = mesh.vertex_faces
    faces = mesh.faces
    face_ok = valid[faces].all(axis=1)
    wl = warp.coords[faces[face_ok]]
    edge = np.median(np.linalg.norm(wl - np.roll(wl, 1, axis=1), axis=2)) if len(wl) else 0.0
    src = flat_landmarks.points if isinstance(flat_landmarks, LandmarkSet) else dict(flat_landmarks)
    out, missing = {}, []
    for name, q in src.items():
        q = np.asarray(q, float)
        dist, near = tree.query(q, k=min(k, len(ids)))
        near = ids[np.atleast_1d(near)]
        best, best_score = None, -np.inf
        for v in near:
            for f in fidx[ptr[v]:ptr[v + 1]]:
                if not face_ok[f]:
                    continue
                lam = _barycentric(q, warp.coords[faces[f]])
                if lam is not None and lam.min() > best_score:
                    best, best_score = (f, lam), lam.min()
        if best is None or (best_score < -1e-9 and np.min(dist) > edge):
            missing.append(name)
            continue
        f, lam = best
        if best_score < 0:
            lam = np.clip(lam, 0, None)
            lam /= lam.sum()
        out[name] = tuple(lam @ xy[faces[f]])
    return LandmarkSet(out, frame="scene", unmatched=tuple(missing))


def forward_landmarks(scene_landmarks, warp, mesh, scene_xy=None):
    """Warp scene-frame points into the flat frame by interpolating W on the mesh."""
    xy = _scene_xy(mesh, 1) if scene_xy is None else np.asarray(scene_xy, float)
    tri_xy = xy[mesh.faces]
    out = {}
    tree = cKDTree(xy)
    ptr, fidx = mesh.vertex_faces
    for name, q in scene_landmarks.points.items():
        q = np.asarray(q, float)
        _, near = tree.query(q, k=min(6, len(xy)))
        best, score = None, -np.inf
        for v in np.atleast_1d(near):
            for f in fidx[ptr[v]:ptr[v + 1]]:
                lam = _barycentric(q, tri_xy[f])
                if lam is not None and lam.min() > score:
                    best, score = (f, lam), lam.min()
        f, lam = best
        out[name] = tuple(lam @ warp.coords[mesh.faces[f]])
    return LandmarkSet(out, frame="flat")
