"""Command-line entry point: ``geotex <subcommand> ...``.

Exit codes are 0 on success, 2 for bad input and 3 for a numerical failure;
failures print ``geotex: error [stage]: message`` on stderr.
"""
import argparse
import logging
import os
import sys

import numpy as np

from . import io, pipeline, synthetic
from .errors import GeotexError, InputError, NumericalError
from .geodesics import SOLVERS, sweep
from .imaging import normalize_contour
from .meshing import DepthFrame
from .registration import correspondences_to_pixels, register

EXIT_OK, EXIT_INPUT, EXIT_NUMERICAL = 0, 2, 3


def _params(args):
    values = io.read_config(args.config) if getattr(args, "config", None) else {}
    params = pipeline.Params.from_mapping(values)
    over = {}
    if getattr(args, "lam", None) is not None:
        over["lam"] = args.lam
    if getattr(args, "kernel", None):
        over["kernel"] = args.kernel
    if getattr(args, "solver", None):
        over["solver"] = args.solver
    return params.with_updates(**over) if over else params


def cmd_retexture(args):
    p = _params(args)
    depth = io.read_depth(args.scene_depth)
    frame = DepthFrame(depth, p.intrinsics(), p.depth_min, p.depth_max)
    ir = io.read_gray(args.scene_ir) if args.scene_ir else None
    job = pipeline.RetextureJob(io.read_color(args.scene_color), frame, io.read_mask(args.scene_mask),
                                io.read_color(args.flat_color), io.read_mask(args.flat_mask), p, ir)
    res = pipeline.run(job)
    io.write_color(args.out, res.image)
    if args.dump_warp:
        pv = res.mesh.pixel_of_vertex
        rows = [(i, int(pv[i, 0]), int(pv[i, 1]), repr(float(x)), repr(float(y)), int(ok))
                for i, ((x, y), ok) in enumerate(zip(res.warp.coords, res.warp.valid))]
        io.write_table(args.dump_warp, ("vertex", "row", "col", "flat_x", "flat_y", "valid"), rows)
    if args.dump_model:
        io.write_tps_model(args.dump_model, res.model)
    if args.dump_anchors:
        xy = pipeline._scene_xy(res.mesh, p.downscale)
        rows = [(int(v), repr(float(xy[v, 0])), repr(float(xy[v, 1])), repr(float(t[0])), repr(float(t[1])))
                for v, t in zip(res.anchor_vertices, res.anchor_targets)]
        io.write_table(args.dump_anchors, ("vertex", "scene_x", "scene_y", "flat_x", "flat_y"), rows)
    return EXIT_OK


def cmd_register(args):
    p = _params(args)
    model, scene = io.read_contour(args.model), io.read_contour(args.scene)
    nm, tm = normalize_contour(model)
    ns, ts = normalize_contour(scene)
    corr = register(nm, ns, p.gmm())
    mpx, spx = correspondences_to_pixels(corr, tm, ts, nm, ns)
    io.write_pairs(args.out_pairs, corr.pairs, mpx, spx)
    return EXIT_OK


def cmd_geodesic(args):
    mesh = io.read_obj(args.mesh)
    f = sweep(mesh, args.source, args.solver, seed_radius=args.seed_radius)
    io.write_field(args.out, f.action)
    return EXIT_OK


def cmd_eval_landmarks(args):
    pred, truth = io.read_landmarks(args.pred), io.read_landmarks(args.truth)
    r = pipeline.eval_landmarks(pred, truth)
    for name, d in r["per_landmark"]:
        print(f"{name},{d:.6f}")
    print(f"mean_distance,{r['mean_distance']:.6f}")
    print(f"mean_squared,{r['mean_squared']:.6f}")
    return EXIT_OK


def cmd_synth(args):
    params = _params(args)
    case = synthetic.make_synthetic(args.case, args.resolution, args.texture, params)
    job = case.job
    os.makedirs(args.out_dir, exist_ok=True)

    def path(name):
        return os.path.join(args.out_dir, name)

    io.write_color(path("scene_color.png"), job.scene_color)
    io.write_depth(path("scene_depth.png"), job.scene_depth.depth)
    io.write_mask(path("scene_mask.png"), job.scene_mask)
    io.write_color(path("flat_color.png"), job.flat_color)
    io.write_mask(path("flat_mask.png"), job.flat_mask)
    io.write_config(path("params.cfg"), job.params.to_mapping())
    io.write_landmarks(path("flat_landmarks.csv"), case.flat_landmarks.points)
    io.write_landmarks(path("scene_landmarks.csv"), case.scene_landmarks.points)
    return EXIT_OK


def cmd_bench(args):
    from .bench import report
    report(tuple(args.sizes), tuple(args.python_sizes), args.repeat)
    return EXIT_OK


def build_parser():
    ap = argparse.ArgumentParser(prog="geotex", description="Garment retexturing with geodesic thin-plate splines.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def tps_flags(p):
        p.add_argument("--lambda", dest="lam", type=float, help="TPS regularization (mm^2)")
        p.add_argument("--kernel", choices=("euclidean", "geodesic"))
        p.add_argument("--solver", choices=SOLVERS)

    p = sub.add_parser("retexture", help="map a flat garment texture onto a scene garment")
    for name in ("scene-color", "scene-depth", "scene-mask", "flat-color", "flat-mask"):
        p.add_argument(f"--{name}", required=True)
    p.add_argument("--scene-ir")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--dump-warp", help="per-vertex warped flat coordinates (CSV)")
    p.add_argument("--dump-model", help="TPS coefficient rows (CSV)")
    p.add_argument("--dump-anchors", help="anchor vertices and their flat targets (CSV)")
    tps_flags(p)
    p.set_defaults(func=cmd_retexture)

    p = sub.add_parser("register", help="match two contours (x,y CSV) by mixture L2 registration")
    p.add_argument("--model", required=True)
    p.add_argument("--scene", required=True)
    p.add_argument("--config")
    p.add_argument("--out-pairs", required=True)
    p.set_defaults(func=cmd_register)

    p = sub.add_parser("geodesic", help="distance field from one vertex of an OBJ mesh")
    p.add_argument("--mesh", required=True)
    p.add_argument("--source", type=int, required=True)
    p.add_argument("--solver", choices=SOLVERS, default="fmm")
    p.add_argument("--seed-radius", type=float, default=4.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_geodesic)

    p = sub.add_parser("eval-landmarks", help="pixel distances between two landmark CSVs")
    p.add_argument("--pred", required=True)
    p.add_argument("--truth", required=True)
    p.set_defaults(func=cmd_eval_landmarks)

    p = sub.add_parser("synth", help="write a synthetic job with ground-truth landmarks")
    p.add_argument("--case", choices=synthetic.CASES, default="plane")
    p.add_argument("--resolution", type=int, default=128)
    p.add_argument("--texture", choices=synthetic.TEXTURES, default="checker")
    p.add_argument("--config")
    p.add_argument("--out-dir", required=True)
    tps_flags(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("bench", help="time the geodesic sweeps and mixture kernels")
    p.add_argument("--sizes", type=int, nargs="+", default=[4096, 16384, 65536])
    p.add_argument("--python-sizes", type=int, nargs="+", default=[4096])
    p.add_argument("--repeat", type=int, default=5)
    p.set_defaults(func=cmd_bench)
    return ap


def _fail(exc, code):
    stage = getattr(exc, "stage", None) or "input"
    msg = super(GeotexError, exc).__str__() if isinstance(exc, GeotexError) else str(exc)
    print(f"geotex: error [{stage}]: {msg}", file=sys.stderr)
    return code


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s")
    try:
        with np.errstate(all="ignore"):
            return args.func(args)
    except InputError as exc:
        return _fail(exc, EXIT_INPUT)
    except NumericalError as exc:
        if exc.stage is None:
            exc.stage = args.command
        return _fail(exc, EXIT_NUMERICAL)
    except (np.linalg.LinAlgError, FloatingPointError) as exc:
        exc.stage = args.command
        return _fail(exc, EXIT_NUMERICAL)
    except OSError as exc:
        return _fail(exc, EXIT_INPUT)


if __name__ == "__main__":
    sys.exit(main())
