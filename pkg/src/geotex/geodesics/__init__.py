"""Geodesic distance fields on triangle meshes.

Two solvers share one interface: ``fast_march`` (first-order Eikonal
solver with planar wavefront updates inside triangles) and ``dijkstra``
(shortest paths along mesh edges). The sweeps run in a compiled extension
when it is built and fall back to pure Python otherwise; set
``GEOTEX_BACKEND=python`` to force the fallback.
"""
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ..errors import InputError
from . import _fallback

try:
    from . import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None

log = logging.getLogger(__name__)

FAR, NARROW, FROZEN = 0, 1, 2
SOLVERS = ("fmm", "dijkstra")

if _compiled is not None and os.environ.get("GEOTEX_BACKEND", "").lower() != "python":
    BACKEND = "compiled"
else:
    BACKEND = "python"


def available_backends():
    return ("compiled", "python") if _compiled is not None else ("python",)


def _impl(backend):
    backend = backend or BACKEND
    if backend == "compiled":
        if _compiled is None:
            raise RuntimeError("compiled geodesic kernels are not built")
        return _compiled
    if backend == "python":
        return _fallback
    raise ValueError(f"unknown backend {backend!r}")


@dataclass
class GeodesicField:
    """Arrival times from a single source vertex (unit speed)."""

    source: int
    action: np.ndarray
    state: np.ndarray
    pred: np.ndarray
    speed: float = 1.0

    @property
    def unreached(self):
        return np.flatnonzero(~np.isfinite(self.action))

    def path_to(self, v):
        """Vertex chain from ``v`` back to the source along recorded predecessors."""
        if not np.isfinite(self.action[v]):
            raise ValueError(f"vertex {v} was not reached from {self.source}")
        out = [int(v)]
        pred = self.pred
        while out[-1] != self.source:
            out.append(int(pred[out[-1]]))
        return out


def path_length(path):
    """Length of a polyline given as a sequence of 3D points."""
    p = np.asarray(path, dtype=float)
    if p.ndim != 2 or len(p) == 0:
        raise InputError("path must be a nonempty sequence of points")
    if len(p) == 1:
        return 0.0
    return float(np.linalg.norm(np.diff(p, axis=0), axis=1).sum())


def _check_source(mesh, source):
    if not 0 <= source < mesh.n_vertices:
        raise InputError(f"source {source} out of range for {mesh.n_vertices} vertices")


def _finish(source, result):
    f = GeodesicField(int(source), *result)
    if len(f.unreached):
        log.warning("%d vertices unreachable from %d", len(f.unreached), source)
    return f


DEFAULT_SEED_RADIUS = 4.0


def seed_ball(mesh, source, radius=DEFAULT_SEED_RADIUS):
    """Vertices near ``source`` initialized with their chord distance.

    The ball holds every vertex within ``radius`` median edge lengths of the
    source that is reachable through edges staying inside the ball. Returns
    (indices, values) with the source first.
    """
    seeds, vals = [int(source)], [0.0]
    if radius <= 0 or mesh.n_vertices < 2:
        return np.array(seeds, np.int32), np.array(vals)
    r = radius * mesh.median_edge
    ptr, idx, _ = mesh.neighbors
    V = mesh.vertices
    c = V[source]
    inside = {int(source)}
    stack = [int(source)]
    while stack:
        a = stack.pop()
        nb = idx[ptr[a]:ptr[a + 1]]
        d = V[nb] - c
        d = np.sqrt(d[:, 0] * d[:, 0] + d[:, 1] * d[:, 1] + d[:, 2] * d[:, 2])
        for x, dx in zip(nb.tolist(), d.tolist()):
            if dx <= r and x not in inside:
                inside.add(x)
                stack.append(x)
                seeds.append(x)
                vals.append(dx)
    order = [0] + sorted(range(1, len(seeds)), key=seeds.__getitem__)
    return (np.array([seeds[i] for i in order], np.int32),
            np.array([vals[i] for i in order], np.float64))


def fast_march(mesh, source, seed_radius=DEFAULT_SEED_RADIUS, backend=None):
    """Geodesic distance from ``source`` by fast marching.

    Vertices are frozen in nondecreasing arrival order. A vertex adjacent to
    the newly frozen vertex ``a`` is updated from each incident triangle whose
    third corner is frozen, using the planar wavefront through both frozen
    corners; when that update is not upwind (obtuse or degenerate stencil)
    the edge update ``U(a) + |a x|`` is used instead.

    The front is strongly curved next to a point source, where a planar
    update is poor, so vertices within ``seed_radius`` median edge lengths
    start from their straight-line distance (see :func:`seed_ball`).
    ``seed_radius=0`` gives the plain scheme.
    """
    _check_source(mesh, source)
    ptr, idx = mesh.vertex_faces
    seeds, vals = seed_ball(mesh, source, seed_radius)
    res = _impl(backend).fmm(mesh.vertices, mesh.faces, ptr, idx, seeds, vals)
    return _finish(source, res)


def dijkstra(mesh, source, backend=None):
    """Edge-graph shortest paths with Euclidean edge weights."""
    _check_source(mesh, source)
    ptr, idx, w = mesh.neighbors
    res = _impl(backend).dijkstra(ptr, idx, w, int(source))
    return _finish(source, res)


def sweep(mesh, source, solver="fmm", backend=None, seed_radius=DEFAULT_SEED_RADIUS):
    if solver == "fmm":
        return fast_march(mesh, source, seed_radius, backend)
    if solver == "dijkstra":
        return dijkstra(mesh, source, backend)
    raise InputError(f"unknown solver {solver!r}; expected one of {SOLVERS}")


@dataclass
class GeodesicTable:
    """Pairwise distances between source vertices plus all-vertex distances.

    ``dist`` is symmetrized as the mean of both sweep directions; the rows of
    ``vertex_dist`` belonging to source vertices carry the same values so a
    kernel built from ``dist`` matches one evaluated from ``vertex_dist``.
    ``flags[i, j]`` is set once the optimal path between sources i and j is
    known from a previously extracted path.
    """

    sources: np.ndarray
    dist: np.ndarray
    vertex_dist: np.ndarray
    flags: np.ndarray
    paths: dict = field(default_factory=dict, repr=False)
    extractions: int = 0

    @property
    def n(self):
        return len(self.sources)


def build_table(mesh, sources, solver="fmm", use_flags=True, workers=1,
                extract_paths=True, backend=None, seed_radius=DEFAULT_SEED_RADIUS):
    """Run one sweep per source and assemble a :class:`GeodesicTable`.

    Sweeps may run on ``workers`` threads (the compiled kernels release the
    GIL); path extraction and flagging happen afterwards in source order, so
    the result does not depend on scheduling.
    """
    sources = np.asarray(sources, dtype=np.int64).ravel()
    if len(np.unique(sources)) != len(sources):
        raise InputError("table sources must be distinct")
    for s in sources:
        _check_source(mesh, int(s))

    def run(s):
        return sweep(mesh, int(s), solver, backend, seed_radius)

    if workers and workers > 1 and len(sources) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            fields = list(pool.map(run, sources))
    else:
        fields = [run(s) for s in sources]

    n = len(sources)
    vertex_dist = np.stack([f.action for f in fields], axis=1) if n else np.zeros((mesh.n_vertices, 0))
    raw = vertex_dist[sources, :].T.copy()  # raw[i, j]: sweep i read at source j
    dist = 0.5 * (raw + raw.T)
    np.fill_diagonal(dist, 0.0)
    vertex_dist[sources, :] = dist

    flags = np.zeros((n, n), dtype=bool)
    np.fill_diagonal(flags, True)
    table = GeodesicTable(sources, dist, vertex_dist, flags)
    if extract_paths:
        _extract_paths(table, fields, use_flags)
    return table


def _extract_paths(table, fields, use_flags):
    slot = {int(s): i for i, s in enumerate(table.sources)}
    n = table.n
    for i in range(n):
        f = fields[i]
        for j in range(i + 1, n):
            if use_flags and table.flags[i, j]:
                continue
            if not math.isfinite(f.action[table.sources[j]]):
                continue
            path = f.path_to(int(table.sources[j]))
            table.extractions += 1
            table.paths[(i, j)] = path
            table.flags[i, j] = table.flags[j, i] = True
            if not use_flags:
                continue
            on_path = [(pos, slot[v]) for pos, v in enumerate(path) if v in slot]
            for a in range(len(on_path)):
                pa, sa = on_path[a]
                for b in range(a + 1, len(on_path)):
                    pb, sb = on_path[b]
                    key = (min(sa, sb), max(sa, sb))
                    if not table.flags[sa, sb]:
                        table.flags[sa, sb] = table.flags[sb, sa] = True
                        sub = path[pa:pb + 1]
                        table.paths[key] = sub if sa > sb else sub[::-1]
