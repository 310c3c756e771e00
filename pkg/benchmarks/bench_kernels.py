"""Time the numba kernels against their numpy fallbacks.

    python3 benchmarks/bench_kernels.py --sizes 100 300 1000 --repeat 3

Each kernel is called once before timing so numba compilation is excluded.
The script also reports the largest disagreement between the two backends.
"""
import argparse
import time

import numpy as np

from aeinfo import kernels
from aeinfo._accel import HAVE_NUMBA
from aeinfo.estimator import gram_matrix, scott_bandwidth
from aeinfo.linalg import JACOBI_MAX_SWEEPS, JACOBI_TOL, Rng


def best_of(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def cases(n, rng):
    x = rng.uniform((n, 784))
    gram = gram_matrix(x, scott_bandwidth(2.0, n, 784))
    return {
        "sqdist": (lambda f: f(x), lambda out: out),
        "jacobi": (lambda f: f(gram, JACOBI_TOL, JACOBI_MAX_SWEEPS, False), lambda out: np.sort(out[0])),
        "eigvalsh": (lambda f: f(gram), np.sort),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[100, 300, 1000])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--kernels", nargs="+", default=["sqdist", "jacobi", "eigvalsh"])
    args = ap.parse_args()
    if not HAVE_NUMBA:
        ap.error("numba is not importable; nothing to compare")

    print(f"{'kernel':<9} {'n':>5} {'numba s':>9} {'numpy s':>9} {'speedup':>8} {'max diff':>9}")
    rng = Rng(0)
    for n in args.sizes:
        table = cases(n, rng)
        for name in args.kernels:
            call, key = table[name]
            nb_fn, np_fn = kernels.get(name, "numba"), kernels.get(name, "numpy")
            call(nb_fn)  # compile
            t_nb, out_nb = best_of(lambda: call(nb_fn), args.repeat)
            t_np, out_np = best_of(lambda: call(np_fn), args.repeat)
            diff = float(np.max(np.abs(key(out_nb) - key(out_np))))
            print(f"{name:<9} {n:>5} {t_nb:>9.4f} {t_np:>9.4f} {t_np / t_nb:>8.2f} {diff:>9.1e}")


if __name__ == "__main__":
    main()
