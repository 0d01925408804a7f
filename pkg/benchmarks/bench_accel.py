"""Compare the numba and numpy paths of the pairwise kernel builders.

Run with ``python benchmarks/bench_accel.py [--sizes 500 1385 2500]``. For each
size it times the NMI and NTK kernels on a random sparse binary profile
matrix with both backends and checks that they agree.
"""

import argparse
import time

import numpy as np

from kronfuse import _accel
from kronfuse.kernels import nmi_kernel, ntk_kernel


def _time(fn, repeats):
    fn()  # warm up (JIT compile on the first numba call)
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def run(sizes, profile_len, density, repeats, seed):
    rng = np.random.default_rng(seed)
    rows = []
    for n in sizes:
        X = (rng.random((n, profile_len)) < density).astype(np.float64)
        for name, builder in (("nmi", nmi_kernel), ("ntk", lambda P: ntk_kernel(P, depth=2))):
            timings = {}
            outputs = {}
            for backend in ("numpy", "numba"):
                _accel.set_backend(backend)
                timings[backend], outputs[backend] = _time(lambda: builder(X), repeats)
            diff = float(np.max(np.abs(outputs["numpy"] - outputs["numba"])))
            rows.append((name, n, timings["numpy"], timings["numba"], diff))
    return rows


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[300, 832, 1385])
    ap.add_argument("--profile-len", type=int, default=1000)
    ap.add_argument("--density", type=float, default=0.05)
    ap.add_argument("--repeats", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    previous = _accel.BACKEND
    try:
        rows = run(args.sizes, args.profile_len, args.density, args.repeats, args.seed)
    finally:
        _accel.set_backend(previous)
    print(f"{'kernel':<6} {'n':>6} {'numpy s':>10} {'numba s':>10} {'speedup':>8} {'max diff':>10}")
    for name, n, t_np, t_nb, diff in rows:
        print(f"{name:<6} {n:>6} {t_np:>10.4f} {t_nb:>10.4f} {t_np / t_nb:>7.1f}x {diff:>10.2e}")


if __name__ == "__main__":
    main()
