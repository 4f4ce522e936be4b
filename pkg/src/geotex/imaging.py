"""Mask cleanup and contour handling.

Coordinates are (x, y) = (column, row) with pixel centers at integers.
Closed contours are stored counter-clockwise as displayed (y pointing
down), which is a negative shoelace area in pixel coordinates.
"""
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import DegenerateContourError, InputError, InvalidMaskError, MaskTooThinError

PIXEL, NORMALIZED = "pixel", "normalized"

# Moore neighborhood in clockwise display order, starting west; (drow, dcol)
_MOORE = [(0, -1), (-1, -1), (-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1)]
_EIGHT = np.ones((3, 3), dtype=bool)


@dataclass(frozen=True, eq=False)
class Contour:
    points: np.ndarray
    closed: bool = True
    space: str = PIXEL

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise InputError(f"contour points must be (n, 2), got {pts.shape}")
        if len(pts) < 3:
            raise InputError(f"contour needs at least 3 points, got {len(pts)}")
        if np.any(np.all(pts[1:] == pts[:-1], axis=1)):
            raise InputError("consecutive contour points must be distinct")
        if self.space not in (PIXEL, NORMALIZED):
            raise InputError(f"unknown coordinate space {self.space!r}")
        object.__setattr__(self, "points", pts)

    def __len__(self):
        return len(self.points)

    def segment_lengths(self):
        p = self.points
        nxt = np.roll(p, -1, axis=0) if self.closed else p[1:]
        return np.linalg.norm(nxt - p[:len(nxt)], axis=1)

    def perimeter(self):
        return float(self.segment_lengths().sum())

    def signed_area(self):
        x, y = self.points[:, 0], self.points[:, 1]
        return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def disk(radius):
    """Discrete disk structuring element: offsets with dx^2 + dy^2 <= r^2."""
    r = int(radius)
    y, x = np.mgrid[-r:r + 1, -r:r + 1]
    return x * x + y * y <= r * r


def open_mask(mask, radius):
    """Morphological opening (erosion then dilation) with a disk."""
    if radius < 0:
        raise InputError("opening radius must be non-negative")
    mask = np.asarray(mask, dtype=bool)
    if radius == 0:
        return mask.copy()
    out = ndimage.binary_opening(mask, structure=disk(radius))
    if not out.any():
        raise MaskTooThinError(f"opening with radius {radius} removed the whole mask")
    return out


def fill_holes(mask):
    return ndimage.binary_fill_holes(np.asarray(mask, dtype=bool))


def largest_component(mask):
    lab, n = ndimage.label(mask, structure=_EIGHT)
    if n <= 1:
        return np.asarray(mask, bool).copy()
    sizes = np.bincount(lab.ravel())[1:]
    return lab == (1 + int(np.argmax(sizes)))


def _trace(mask, start):
    h, w = mask.shape
    p = start
    back = 0  # the western neighbor of the start pixel is background
    out = [p]
    first_move = None
    while True:
        for i in range(1, 9):
            d = (back + i) % 8
            r, c = p[0] + _MOORE[d][0], p[1] + _MOORE[d][1]
            if 0 <= r < h and 0 <= c < w and mask[r, c]:
                prev = (back + i - 1) % 8
                # new backtrack: the last background cell, seen from the new pixel
                br, bc = p[0] + _MOORE[prev][0] - r, p[1] + _MOORE[prev][1] - c
                nxt = (r, c)
                break
        else:
            return out  # isolated pixel
        move = (p, nxt)
        if first_move is None:
            first_move = move
        elif move == first_move:
            out.pop()  # back at the start, which is already recorded
            return out
        out.append(nxt)
        p = nxt
        back = _MOORE.index((br, bc))


def extract_contour(mask):
    """Ordered outer boundary of the single foreground component.

    Moore-neighbor tracing with 8-connectivity, starting at the topmost,
    then leftmost foreground pixel; returned counter-clockwise.
    """
    mask = np.asarray(mask, dtype=bool)
    _, n = ndimage.label(mask, structure=_EIGHT)
    if n != 1:
        raise InvalidMaskError(f"mask must hold exactly one 8-connected component, found {n}")
    if mask[0].any() or mask[-1].any() or mask[:, 0].any() or mask[:, -1].any():
        raise InvalidMaskError("foreground touches the image border")
    rows, cols = np.nonzero(mask)
    start = (int(rows[0]), int(cols[0]))  # nonzero is row-major
    pix = _trace(mask, start)
    if len(pix) < 3:
        raise InvalidMaskError(f"boundary has only {len(pix)} pixels")
    pts = np.array([(c, r) for r, c in pix], dtype=np.float64)
    # tracing runs clockwise on screen; flip, keeping the start point first
    pts = np.concatenate([pts[:1], pts[:0:-1]])
    return Contour(pts, closed=True, space=PIXEL)


def resample_contour(contour, k, arc_points=None):
    """``k`` points equally spaced in arc length, starting at the first point.

    ``arc_points`` optionally gives a per-point embedding (e.g. the 3D
    positions of the contour pixels) in which arc length is measured; the
    output is still interpolated in the contour's own coordinates.
    """
    if k < 3:
        raise InputError(f"need at least 3 output points, got {k}")
    if not contour.closed:
        raise InputError("resampling requires a closed contour")
    pts = contour.points
    emb = pts if arc_points is None else np.asarray(arc_points, dtype=np.float64)
    if len(emb) != len(pts):
        raise InputError("arc_points must match the contour length")
    ring = np.vstack([pts, pts[:1]])
    emb_ring = np.vstack([emb, emb[:1]])
    seg = np.linalg.norm(np.diff(emb_ring, axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    total = s[-1]
    if total <= 0:
        raise DegenerateContourError("contour has zero length")
    t = np.arange(k) * (total / k)
    out = np.stack([np.interp(t, s, ring[:, 0]), np.interp(t, s, ring[:, 1])], axis=1)
    return Contour(out, closed=True, space=contour.space)


@dataclass(frozen=True)
class NormalizeTransform:
    """Per-axis affine map ``(p - offset) / scale`` onto the unit square."""

    offset: tuple
    scale: tuple

    def forward(self, pts):
        return (np.asarray(pts, float) - np.asarray(self.offset)) / np.asarray(self.scale)

    def inverse(self, pts):
        return np.asarray(pts, float) * np.asarray(self.scale) + np.asarray(self.offset)

    @classmethod
    def identity(cls):
        return cls((0.0, 0.0), (1.0, 1.0))


def normalize_contour(contour):
    """Map each axis independently onto [0, 1]; returns (contour, transform)."""
    pts = contour.points
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    span = hi - lo
    if np.any(span <= 0):
        raise DegenerateContourError(f"contour has zero extent along an axis (span={span})")
    tr = NormalizeTransform(tuple(lo.tolist()), tuple(span.tolist()))
    out = np.clip(tr.forward(pts), 0.0, 1.0)
    return Contour(out, closed=contour.closed, space=NORMALIZED), tr
