"""Compare the compiled kernels against the NumPy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Prints one line per kernel with the best wall time of each backend and the
speed-up.  Outputs of the two backends are checked to agree first.
"""
import argparse
import time

import numpy as np

from mfident import _kernels_py as py
from mfident.forward import SolverConfig, solve_mean_field
from mfident.grid import SpaceGrid, TimeGrid
from mfident.initial import InitialDistribution
from mfident.interaction import InteractionKernel

try:
    from mfident import _kernels as cy
except ImportError:  # extension not built
    cy = None


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def cases(rng):
    u = np.abs(rng.standard_normal(1025))
    v = rng.standard_normal(1024)
    x = rng.standard_normal(2000)
    coefs, exps = np.array([1.0, -1.0]), np.array([1.0, -1.5])
    tr, tp = np.array([0.0, 0.5, 1.0]), np.array([1.0, 1.0, 0.0])
    yield "muscl_flux (n=1025)", lambda m: m.muscl_flux(u, v)
    yield "pairwise_drift_power (N=2000)", lambda m: m.pairwise_drift_power(x, coefs, exps, 1e-8)
    yield "pairwise_drift_table (N=2000)", lambda m: m.pairwise_drift_table(x, tr, tp, 1e-8)


def solver_case(module):
    from mfident import backend
    old = backend.muscl_flux
    backend.muscl_flux = module.muscl_flux
    try:
        g, tg = SpaceGrid(-1, 1, 256), TimeGrid(1.0, 1000)
        d = InitialDistribution.parse("mixture:0.5,-0.3,0.1;0.5,0.3,0.1")
        solve_mean_field(InteractionKernel.cubic(), SolverConfig.from_distribution(0.02, g, tg, d))
    finally:
        backend.muscl_flux = old


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if cy is None:
        print("compiled extension not available; build with `pip install -e .`")
        return
    rng = np.random.default_rng(0)
    print(f"{'kernel':34s} {'cython':>10s} {'python':>10s} {'speed-up':>9s}")
    for name, fn in cases(rng):
        np.testing.assert_allclose(fn(cy), fn(py), rtol=1e-12, atol=1e-12)
        tc, tp = best_of(lambda: fn(cy), args.repeat), best_of(lambda: fn(py), args.repeat)
        print(f"{name:34s} {tc * 1e3:8.3f}ms {tp * 1e3:8.3f}ms {tp / tc:8.1f}x")
    tc = best_of(lambda: solver_case(cy), 1)
    tp = best_of(lambda: solver_case(py), 1)
    print(f"{'solve_mean_field (256 x 1000)':34s} {tc * 1e3:8.1f}ms {tp * 1e3:8.1f}ms {tp / tc:8.1f}x")


if __name__ == "__main__":
    main()
