"""Depth-image surface reconstruction.

A masked depth frame is back-projected through a pinhole camera, every
2x2 pixel quad is split along its top-left/bottom-right diagonal, triangles
spanning a depth discontinuity are dropped and only the largest connected
piece is kept.
"""
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np
from scipy import ndimage, sparse
from scipy.sparse import csgraph

from .errors import EmptySurfaceError, InputError


@dataclass(frozen=True)
class Intrinsics:
    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise InputError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")

    def scaled(self, factor):
        # pixel centers sit at integer coordinates, so the principal point
        # follows (c + 0.5) * f - 0.5 rather than a plain scaling
        return Intrinsics(self.fx * factor, self.fy * factor,
                          (self.cx + 0.5) * factor - 0.5,
                          (self.cy + 0.5) * factor - 0.5)


@dataclass(frozen=True)
class DepthFrame:
    """Depth in millimeters, 0 marks an invalid sample."""

    depth: np.ndarray
    intrinsics: Intrinsics
    depth_min: float = 300.0
    depth_max: float = 8000.0

    @property
    def shape(self):
        return self.depth.shape

    @property
    def valid(self):
        d = self.depth
        return (d > 0) & (d >= self.depth_min) & (d <= self.depth_max)


def backproject(u, v, z, K):
    """Pixel (u=column, v=row) at depth z to camera-space millimeters."""
    u, v, z = np.asarray(u, float), np.asarray(v, float), np.asarray(z, float)
    return np.stack([(u - K.cx) * z / K.fx, (v - K.cy) * z / K.fy, z], axis=-1)


def project(points, K):
    """Camera-space points (..., 3) to pixel coordinates (..., 2) as (u, v)."""
    p = np.asarray(points, float)
    z = p[..., 2]
    return np.stack([p[..., 0] * K.fx / z + K.cx, p[..., 1] * K.fy / z + K.cy], axis=-1)


@dataclass(frozen=True, eq=False)
class SurfaceMesh:
    vertices: np.ndarray
    faces: np.ndarray
    pixel_of_vertex: np.ndarray = None
    vertex_of_pixel: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "vertices", np.ascontiguousarray(self.vertices, dtype=np.float64))
        object.__setattr__(self, "faces", np.ascontiguousarray(self.faces, dtype=np.int32).reshape(-1, 3))

    @property
    def n_vertices(self):
        return len(self.vertices)

    @cached_property
    def edges(self):
        """Unique undirected edges as an (E, 2) array with ``a < b``."""
        f = self.faces
        e = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
        e.sort(axis=1)
        return np.unique(e, axis=0)

    @cached_property
    def edge_lengths(self):
        e = self.edges
        d = self.vertices[e[:, 0]] - self.vertices[e[:, 1]]
        return np.sqrt(d[:, 0] * d[:, 0] + d[:, 1] * d[:, 1] + d[:, 2] * d[:, 2])

    @cached_property
    def median_edge(self):
        return float(np.median(self.edge_lengths)) if len(self.faces) else 0.0

    @cached_property
    def vertex_faces(self):
        """CSR incidence (ptr, idx): faces around each vertex."""
        n = self.n_vertices
        owners = self.faces.ravel()
        order = np.argsort(owners, kind="stable")
        idx = (order // 3).astype(np.int32)
        ptr = np.zeros(n + 1, dtype=np.int32)
        np.cumsum(np.bincount(owners, minlength=n), out=ptr[1:])
        return ptr, np.ascontiguousarray(idx)

    @cached_property
    def neighbors(self):
        """CSR adjacency (ptr, idx, weight) over mesh edges."""
        e = self.edges
        w = self.edge_lengths
        n = self.n_vertices
        src = np.concatenate([e[:, 0], e[:, 1]])
        dst = np.concatenate([e[:, 1], e[:, 0]])
        ww = np.concatenate([w, w])
        order = np.lexsort((dst, src))
        ptr = np.zeros(n + 1, dtype=np.int32)
        np.cumsum(np.bincount(src, minlength=n), out=ptr[1:])
        return (ptr, np.ascontiguousarray(dst[order], dtype=np.int32),
                np.ascontiguousarray(ww[order]))

    def adjacency_matrix(self):
        e = self.edges
        n = self.n_vertices
        data = np.ones(len(e), dtype=np.int8)
        return sparse.coo_matrix((data, (e[:, 0], e[:, 1])), shape=(n, n)).tocsr()

    def n_components(self):
        return csgraph.connected_components(self.adjacency_matrix(), directed=False)[0]

    def face_normals(self):
        v = self.vertices[self.faces]
        n = np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0])
        return n / np.linalg.norm(n, axis=1, keepdims=True)

    def submesh(self, keep):
        """Restrict to vertices where ``keep`` is True, dropping touching faces."""
        keep = np.asarray(keep, bool)
        remap = np.full(self.n_vertices, -1, dtype=np.int64)
        remap[keep] = np.arange(keep.sum())
        faces = self.faces[keep[self.faces].all(axis=1)]
        pov = None if self.pixel_of_vertex is None else self.pixel_of_vertex[keep]
        vop = None
        if self.vertex_of_pixel is not None:
            vop = np.where(self.vertex_of_pixel >= 0,
                           remap[np.maximum(self.vertex_of_pixel, 0)], -1).astype(np.int32)
        return SurfaceMesh(self.vertices[keep], remap[faces], pov, vop)


def smooth_depth(frame, sigma):
    """Gaussian-smooth valid depth samples only.

    Invalid pixels neither contribute to nor receive a value: the kernel is
    renormalized over the valid neighborhood (normalized convolution).
    """
    if sigma < 0:
        raise InputError("sigma must be non-negative")
    if sigma == 0:
        return frame
    valid = frame.valid
    w = valid.astype(np.float64)
    num = ndimage.gaussian_filter(np.where(valid, frame.depth, 0.0), sigma, mode="constant")
    den = ndimage.gaussian_filter(w, sigma, mode="constant")
    out = np.zeros_like(frame.depth, dtype=np.float64)
    out[valid] = num[valid] / den[valid]
    return replace(frame, depth=out)


def _overlap_matrix(n_in, n_out, factor):
    # entry (i, j): length of source cell j inside output cell i
    edges_out = np.arange(n_out + 1) / factor
    lo = np.maximum(edges_out[:-1, None], np.arange(n_in)[None, :])
    hi = np.minimum(edges_out[1:, None], np.arange(n_in)[None, :] + 1)
    return np.clip(hi - lo, 0.0, None)


def _area_downsample(values, weights, factor):
    h, w = values.shape
    ho, wo = max(1, int(np.floor(h * factor + 1e-9))), max(1, int(np.floor(w * factor + 1e-9)))
    ry = _overlap_matrix(h, ho, factor)
    rx = _overlap_matrix(w, wo, factor)
    num = ry @ (values * weights) @ rx.T
    den = ry @ weights @ rx.T
    return num, den, ry @ np.ones_like(weights) @ rx.T


def downscale_depth(frame, factor):
    """Area-averaged downsampling of valid depth, intrinsics scaled to match."""
    if not 0 < factor <= 1:
        raise InputError(f"factor must be in (0, 1], got {factor}")
    if factor == 1:
        return frame
    valid = frame.valid.astype(np.float64)
    num, den, _ = _area_downsample(frame.depth.astype(np.float64), valid, factor)
    depth = np.divide(num, den, out=np.zeros_like(num), where=den > 0)
    return replace(frame, depth=depth, intrinsics=frame.intrinsics.scaled(factor))


def downscale_mask(mask, factor):
    """Downsample a boolean mask; an output pixel is set if >= half its area is."""
    if factor == 1:
        return np.asarray(mask, bool)
    num, _, area = _area_downsample(np.asarray(mask, float), np.ones(mask.shape), factor)
    return num >= 0.5 * area - 1e-12


def grid_faces(index):
    """Triangles of all 2x2 quads of a vertex-index grid (-1 = missing).

    Quads are split along the top-left/bottom-right diagonal; a triangle is
    kept when all three corners exist.
    """
    tl, tr = index[:-1, :-1].ravel(), index[:-1, 1:].ravel()
    bl, br = index[1:, :-1].ravel(), index[1:, 1:].ravel()
    tris = np.concatenate([np.stack([tl, bl, br], 1), np.stack([tl, br, tr], 1)])
    # interleave so faces of one quad are adjacent
    n = len(tl)
    tris = tris.reshape(2, n, 3).transpose(1, 0, 2).reshape(-1, 3)
    return tris[(tris >= 0).all(axis=1)]


def depth_to_mesh(frame, mask, edge_max=30.0):
    """Triangulate the masked, valid part of a depth frame.

    Returns the largest connected component; ties go to the component
    holding the first vertex in raster order.
    """
    mask = np.asarray(mask, bool)
    if mask.shape != frame.shape:
        raise InputError(f"mask shape {mask.shape} != depth shape {frame.shape}")
    if edge_max <= 0:
        raise InputError("edge_max must be positive")
    valid = mask & frame.valid
    if valid.sum() < 3:
        raise EmptySurfaceError(f"only {int(valid.sum())} valid depth pixels under the mask")

    rows, cols = np.nonzero(valid)
    index = np.full(frame.shape, -1, dtype=np.int64)
    index[rows, cols] = np.arange(len(rows))
    verts = backproject(cols, rows, frame.depth[rows, cols], frame.intrinsics)

    faces = grid_faces(index)
    if len(faces):
        v = verts[faces]
        lens = np.linalg.norm(v - np.roll(v, -1, axis=1), axis=2)
        faces = faces[(lens <= edge_max).all(axis=1)]
    if len(faces) == 0:
        raise EmptySurfaceError("no triangle survived the discontinuity cut")

    n = len(verts)
    e = np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]]])
    adj = sparse.coo_matrix((np.ones(len(e)), (e[:, 0], e[:, 1])), shape=(n, n))
    _, labels = csgraph.connected_components(adj, directed=False)
    used = np.zeros(n, bool)
    used[faces.ravel()] = True
    sizes = np.bincount(labels[used], minlength=labels.max() + 1)
    best = int(np.argmax(sizes))  # argmax returns the first max: lowest label
    keep = (labels == best) & used
    if keep.sum() < 3:
        raise EmptySurfaceError("largest surface component has fewer than 3 vertices")

    full = SurfaceMesh(verts, faces, np.stack([rows, cols], 1), index.astype(np.int32))
    return full.submesh(keep)


def plane_grid(k, spacing=1.0, height=None):
    """(k+1) x (k+1) grid mesh with the pixel-style diagonal split.

    Vertex ``r * (k + 1) + c`` sits at ``x = c``, ``y = k - r`` (y up), so
    the corner at the origin is the bottom-left pixel and the diagonal from
    (0, 0) to (k, k) crosses every quad split. ``height`` optionally maps
    (x, y) arrays to z.
    """
    r, c = np.mgrid[0:k + 1, 0:k + 1]
    x = c * spacing
    y = (k - r) * spacing
    z = np.zeros_like(x, dtype=float) if height is None else height(x, y)
    verts = np.stack([x.ravel(), y.ravel(), np.ravel(z)], 1).astype(float)
    index = np.arange((k + 1) ** 2).reshape(k + 1, k + 1)
    return SurfaceMesh(verts, grid_faces(index), np.stack([r.ravel(), c.ravel()], 1), index.astype(np.int32))


def grid_vertex(k, x, y):
    """Index of the plane_grid vertex at integer coordinates (x, y)."""
    return (k - y) * (k + 1) + x
