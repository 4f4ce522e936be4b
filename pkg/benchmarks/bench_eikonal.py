"""Compiled vs pure-Python sweep timings and the N log N scaling fit.

Run with ``python3 benchmarks/bench_eikonal.py [--python-sizes 4096 16384]``.
"""
import argparse

from geotex.bench import GRID_SIZES, report


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--sizes", type=int, nargs="+", default=list(GRID_SIZES))
    ap.add_argument("--python-sizes", type=int, nargs="+", default=[4096])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    report(args.sizes, args.python_sizes, args.repeat)


if __name__ == "__main__":
    main()
