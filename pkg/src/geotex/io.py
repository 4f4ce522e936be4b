"""File formats: rasters, CSV tables, OBJ meshes and key=value configs."""
import csv
import os

import numpy as np
from PIL import Image

from .errors import InputError
from .imaging import Contour, fill_holes
from .meshing import SurfaceMesh


def _open(path):
    try:
        return Image.open(path)
    except (OSError, ValueError) as exc:
        raise InputError(f"cannot read image {path}: {exc}") from exc


def read_depth(path):
    """16-bit single-channel PNG or PGM in millimeters, as float64."""
    im = _open(path)
    if im.mode not in ("I;16", "I;16B", "I;16L", "I", "L"):
        raise InputError(f"{path}: depth must be single-channel 16-bit, got mode {im.mode}")
    return np.asarray(im, dtype=np.float64)


def write_depth(path, depth):
    d = np.rint(np.clip(np.asarray(depth, float), 0, 65535)).astype(np.uint16)
    Image.fromarray(d).save(path)


def read_mask(path, fill=True):
    """Nonzero pixels are foreground; interior holes are filled."""
    im = _open(path)
    m = np.asarray(im.convert("L")) > 0
    return fill_holes(m) if fill else m


def write_mask(path, mask):
    Image.fromarray(np.asarray(mask, bool).astype(np.uint8) * 255).save(path)


def read_color(path):
    return np.asarray(_open(path).convert("RGB"), dtype=np.uint8)


def read_gray(path):
    """Single-channel image scaled to [0, 1] by its bit depth."""
    im = _open(path)
    if im.mode in ("I;16", "I;16B", "I;16L", "I"):
        return np.asarray(im, dtype=np.float64) / 65535.0
    return np.asarray(im.convert("L"), dtype=np.float64) / 255.0


def write_color(path, rgb):
    Image.fromarray(np.asarray(rgb, dtype=np.uint8)).save(path)


def _read_rows(path, columns):
    try:
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            missing = set(columns) - set(reader.fieldnames or ())
            if missing:
                raise InputError(f"{path}: missing columns {sorted(missing)}")
            return list(reader)
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc


def write_table(path, header, rows):
    """CSV with a header row."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def read_contour(path):
    rows = _read_rows(path, ("x", "y"))
    try:
        pts = np.array([[float(r["x"]), float(r["y"])] for r in rows])
    except ValueError as exc:
        raise InputError(f"{path}: {exc}") from exc
    return Contour(pts.reshape(-1, 2))


def write_contour(path, contour):
    pts = contour.points if isinstance(contour, Contour) else np.asarray(contour)
    write_table(path, ("x", "y"), [(repr(float(x)), repr(float(y))) for x, y in pts])


def write_pairs(path, pairs, model_px, scene_px):
    rows = [(int(i), int(j), repr(float(a[0])), repr(float(a[1])), repr(float(b[0])), repr(float(b[1])))
            for (i, j), a, b in zip(pairs, model_px, scene_px)]
    write_table(path, ("model_idx", "scene_idx", "model_x", "model_y", "scene_x", "scene_y"), rows)


def read_landmarks(path):
    """Ordered ``{name: (x, y)}``."""
    rows = _read_rows(path, ("name", "x", "y"))
    out = {}
    for r in rows:
        if r["name"] in out:
            raise InputError(f"{path}: duplicate landmark {r['name']!r}")
        out[r["name"]] = (float(r["x"]), float(r["y"]))
    return out


def write_landmarks(path, points):
    write_table(path, ("name", "x", "y"), [(k, repr(float(x)), repr(float(y))) for k, (x, y) in points.items()])


def write_field(path, action):
    write_table(path, ("vertex", "action"), [(i, repr(float(a))) for i, a in enumerate(action)])


def write_matrix(path, mat):
    np.savetxt(path, np.asarray(mat, float), delimiter=",", fmt="%.17g")


def write_tps_model(path, model):
    """Coefficient rows with a comment header naming kernel, lambda and n."""
    with open(path, "w", newline="") as fh:
        fh.write(f"# kernel={model.kernel},lambda={float(model.lam)!r},n={model.n}\n")
        w = csv.writer(fh)
        w.writerow(("w_x", "w_y", "w_z"))
        w.writerows([[repr(float(v)) for v in row] for row in model.coefficients])


def read_tps_header(path):
    with open(path) as fh:
        line = fh.readline().lstrip("#").strip()
    return dict(kv.split("=", 1) for kv in line.split(","))


def sidecar_path(obj_path):
    return os.path.splitext(obj_path)[0] + "_pixels.csv"


def write_obj(path, mesh):
    """ASCII OBJ plus a ``<name>_pixels.csv`` sidecar (vertex,row,col)."""
    with open(path, "w") as fh:
        for x, y, z in mesh.vertices.tolist():
            fh.write(f"v {x!r} {y!r} {z!r}\n")
        for a, b, c in (mesh.faces + 1).tolist():
            fh.write(f"f {a} {b} {c}\n")
    if mesh.pixel_of_vertex is not None:
        write_table(sidecar_path(path), ("vertex", "row", "col"),
                    [(i, int(r), int(c)) for i, (r, c) in enumerate(mesh.pixel_of_vertex)])


def read_obj(path):
    verts, faces = [], []
    try:
        with open(path) as fh:
            for line in fh:
                parts = line.split()
                if not parts:
                    continue
                if parts[0] == "v":
                    verts.append([float(t) for t in parts[1:4]])
                elif parts[0] == "f":
                    faces.append([int(t.split("/")[0]) - 1 for t in parts[1:4]])
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    except ValueError as exc:
        raise InputError(f"{path}: malformed record: {exc}") from exc
    verts = np.array(verts, float).reshape(-1, 3)
    faces = np.array(faces, np.int64).reshape(-1, 3)
    if len(faces) and (faces.min() < 0 or faces.max() >= len(verts)):
        raise InputError(f"{path}: face index out of range")
    pov = None
    side = sidecar_path(path)
    if os.path.exists(side):
        rows = _read_rows(side, ("vertex", "row", "col"))
        pov = np.zeros((len(verts), 2), np.int64)
        for r in rows:
            pov[int(r["vertex"])] = (int(r["row"]), int(r["col"]))
    return SurfaceMesh(verts, faces, pov)


def read_config(path):
    """Plain ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    try:
        with open(path) as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise InputError(f"cannot read config {path}: {exc}") from exc
    for no, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InputError(f"{path}:{no}: expected key=value, got {raw.strip()!r}")
        k, v = line.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def write_config(path, values):
    with open(path, "w") as fh:
        for k, v in values.items():
            if isinstance(v, (tuple, list)):
                v = ",".join(str(x) for x in v)
            fh.write(f"{k} = {v}\n")
