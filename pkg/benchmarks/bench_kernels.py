"""Compare the compiled and numpy kernel backends.

Usage: ``python benchmarks/bench_kernels.py [--repeat N]``. Prints the best
wall time per call for each kernel and backend and the largest absolute
disagreement between them.
"""

import argparse
import timeit

import numpy as np

from dscmplan.kernels import _reference

try:
    from dscmplan.kernels import _fast
except ImportError:  # extension not built
    _fast = None

PARAMS = np.array([25.0, 0.02, 0.78, 0.025, 25.0, 0.02, 0.52, 0.03, 0.02])


def cases(rng):
    y = np.sort(rng.normal(0.0, 0.4, 200_000))
    nodes = np.sort(rng.normal(0.0, 0.4, 4000))
    weights = rng.random(nodes.size) / nodes.size
    edges = np.linspace(-2.0, 2.0, 401)
    return {
        "piecewise_pdf (2e5 points)": lambda m: m.piecewise_pdf(y, PARAMS),
        "interval_masses (4000 nodes x 400 intervals)": lambda m: m.interval_masses(
            nodes, weights, edges[:-1], edges[1:], 0.05
        ),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    backends = {"python": _reference}
    if _fast is not None:
        backends["cython"] = _fast
    else:
        print("compiled extension not available; timing the numpy backend only")
    for name, fn in cases(np.random.default_rng(0)).items():
        times = {}
        outs = {}
        for label, mod in backends.items():
            outs[label] = fn(mod)
            times[label] = min(timeit.repeat(lambda: fn(mod), number=1, repeat=args.repeat))
        line = f"{name:46s}" + "".join(f"  {k} {t * 1e3:8.2f} ms" for k, t in times.items())
        if len(times) == 2:
            diff = float(np.max(np.abs(outs["cython"] - outs["python"])))
            line += f"  speedup {times['python'] / times['cython']:5.2f}x  max|diff| {diff:.1e}"
        print(line)


if __name__ == "__main__":
    main()
