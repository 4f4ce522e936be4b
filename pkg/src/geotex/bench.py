"""Timing harness for the geodesic sweeps and the mixture kernels.

Used by ``geotex bench`` and ``benchmarks/bench_eikonal.py``. All timings
are the minimum over repeats of ``time.perf_counter`` deltas.
"""
import time

import numpy as np

from . import geodesics, registration
from .meshing import plane_grid

GRID_SIZES = (4096, 16384, 65536)


def grid_for(n_vertices):
    """Smallest square plane grid with at least ``n_vertices`` vertices, plus its center vertex."""
    k = max(2, int(np.ceil(np.sqrt(n_vertices))) - 1)
    return plane_grid(k), (k // 2) * (k + 1) + k // 2


def best_time(fn, repeat=5):
    fn()  # warm caches (mesh adjacency, imports)
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def time_sweep(n_vertices, solver="fmm", backend=None, repeat=5):
    mesh, src = grid_for(n_vertices)
    return mesh.n_vertices, best_time(lambda: geodesics.sweep(mesh, src, solver, backend), repeat)


def nlogn_fit(sizes, times):
    """Fit ``t = c N log N`` in log space.

    Returns ``c`` and the relative deviation of every measurement from the
    fitted curve.
    """
    n = np.asarray(sizes, float)
    t = np.asarray(times, float)
    model = n * np.log(n)
    c = float(np.exp(np.mean(np.log(t / model))))
    return c, t / (c * model) - 1.0


def scaling(sizes=GRID_SIZES, backend=None, repeat=5):
    rows = [time_sweep(n, "fmm", backend, repeat) for n in sizes]
    ns, ts = zip(*rows)
    c, dev = nlogn_fit(ns, ts)
    return {"sizes": list(ns), "times": list(ts), "c": c, "deviation": dev.tolist()}


def time_gmm(n_points=400, sigma=0.02, backend=None, repeat=5):
    """Cost and gradient between two nearby normalized ellipse contours."""
    t = np.linspace(0.0, 2.0 * np.pi, n_points, endpoint=False)
    a = 0.5 * np.stack([np.cos(t), 0.7 * np.sin(t)], 1)
    b = 1.05 * a + 0.01
    return best_time(lambda: registration.gmm_l2_grad(a, b, sigma, False, backend), repeat)


def report(sizes=GRID_SIZES, python_sizes=(4096,), repeat=5, out=print):
    """Print the backend comparison and the N log N fit; returns the results."""
    results = {"backends": geodesics.available_backends()}
    out(f"backends available: {', '.join(results['backends'])}")
    for backend in results["backends"]:
        sz = sizes if backend == "compiled" else python_sizes
        s = scaling(sz, backend, repeat if backend == "compiled" else 1)
        results[backend] = s
        for n, t, d in zip(s["sizes"], s["times"], s["deviation"]):
            out(f"fmm {backend:8s} N={n:6d} {t * 1e3:9.2f} ms  fit dev {d:+.1%}")
        out(f"fmm {backend:8s} c={s['c']:.3e} s per N log N")
        n15, t15 = time_sweep(15000, "fmm", backend, repeat if backend == "compiled" else 1)
        results[backend]["sweep_15k"] = t15
        out(f"fmm {backend:8s} N={n15} single sweep {t15 * 1e3:.2f} ms")
        g = time_gmm(backend=backend, repeat=repeat)
        results[backend]["gmm_400"] = g
        out(f"gmm {backend:8s} 400x400 contour cost+grad {g * 1e3:.2f} ms")
    if "python" in results and "compiled" in results:
        n0 = results["python"]["sizes"][0]
        tc = dict(zip(results["compiled"]["sizes"], results["compiled"]["times"])).get(n0)
        if tc:
            out(f"fmm speedup at N={n0}: {results['python']['times'][0] / tc:.1f}x")
        out(f"gmm speedup: {results['python']['gmm_400'] / results['compiled']['gmm_400']:.1f}x")
    return results
