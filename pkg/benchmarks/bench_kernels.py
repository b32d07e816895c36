"""Compare the numba and pure-numpy kernels, and a full registration under each backend.

    python benchmarks/bench_kernels.py [--points 4000] [--k 200] [--repeat 5]

Kernel timings use both kernel tables in one process. The end-to-end timing
runs a registration in a child process per backend (DARE_NUMBA=1 / 0), since
the backend is chosen at import time.
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from dare_reg import kernels

E2E = """
import time
from dare_reg.mixture import RegistrationConfig, register
from dare_reg.synth import generate_pair
p = generate_pair(0, n_points={points})
register([p.target, p.source], RegistrationConfig(K=20, iterations=2))  # compile / warm up
t0 = time.perf_counter()
register([p.target, p.source], RegistrationConfig(K={k}, iterations={iters}))
print(time.perf_counter() - t0)
"""


def best_of(fn, repeat):
    fn()  # first call compiles under numba
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def bench_kernels(n, k, repeat):
    rng = np.random.default_rng(0)
    y = rng.normal(scale=3, size=(n, 3))
    mu = rng.normal(scale=3, size=(k, 3))
    var = rng.uniform(0.01, 1, k)
    lp, lo = np.log(0.995 / k), np.log(0.005 / 1000)
    cases = {
        "estep": lambda t: t["estep"](y, mu, var, lp, lo),
        "sq_dists": lambda t: t["sq_dists"](y, mu),
        "fps_step x200": lambda t: _fps(t, y, 200),
    }
    rows = []
    for name, case in cases.items():
        t_np = best_of(lambda: case(kernels.NUMPY_KERNELS), repeat)
        t_nb = best_of(lambda: case(kernels.NUMBA_KERNELS), repeat) if kernels.NUMBA_KERNELS else float("nan")
        rows.append((name, t_np, t_nb))
    return rows


def _fps(table, pts, m):
    mind = np.full(len(pts), np.inf)
    last = 0
    for _ in range(m):
        last = table["fps_step"](pts, mind, last)


def bench_end_to_end(points, k, iters):
    out = {}
    for flag, name in (("1", "numba"), ("0", "numpy")):
        env = dict(os.environ, DARE_NUMBA=flag)
        code = E2E.format(points=points, k=k, iters=iters)
        res = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
        out[name] = float(res.stdout.strip().splitlines()[-1])
    return out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--points", type=int, default=4000, help="query points per kernel call")
    ap.add_argument("--k", type=int, default=200, help="mixture components")
    ap.add_argument("--iters", type=int, default=20, help="EM iterations for the end-to-end run")
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--skip-e2e", action="store_true")
    args = ap.parse_args()

    print(f"kernels, N={args.points}, K={args.k}, best of {args.repeat}")
    print(f"{'kernel':<16}{'numpy ms':>12}{'numba ms':>12}{'speedup':>10}")
    for name, t_np, t_nb in bench_kernels(args.points, args.k, args.repeat):
        print(f"{name:<16}{1e3 * t_np:>12.2f}{1e3 * t_nb:>12.2f}{t_np / t_nb:>9.1f}x")
    if not args.skip_e2e:
        e2e = bench_end_to_end(10000, args.k, args.iters)
        print(f"\nregistration (10k-point scans thinned, K={args.k}, {args.iters} iterations)")
        for name, t in e2e.items():
            print(f"  {name:<6} {t:.2f} s")
        print(f"  speedup {e2e['numpy'] / e2e['numba']:.1f}x")


if __name__ == "__main__":
    main()
