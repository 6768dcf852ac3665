"""Wall-clock comparison of the numba and numpy sampling kernels.

Both backends are run on the same keys; the script checks that their outputs
are identical before timing them. JIT compilation is excluded by a warm-up
call. If numba is unavailable only the numpy timings are printed.

    python benchmarks/bench_kernels.py [--trials 10000] [--repeats 5]
"""
import argparse
import statistics
import time

import numpy as np

from rlao import _kernels as K
from rlao._rng import trial_keys
from rlao.abstraction import generate_benchmark
from rlao.experiments.fixtures import counterexample_fixture


def timed(fn, repeats):
    out = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        out.append(time.perf_counter() - t0)
    return statistics.mean(out), statistics.pstdev(out)


def as_tuple(x):
    return x if isinstance(x, tuple) else (x,)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--trials", type=int, default=10_000)
    ap.add_argument("--visits", type=int, default=200)
    ap.add_argument("--repeats", type=int, default=5)
    args = ap.parse_args()

    fixture, phi_f = counterexample_fixture()
    bench, phi_b = generate_benchmark(dict(n_abstract=4, block_sizes=[3, 3, 3, 3], n_actions=2,
                                           target_eta_t=0.05, target_eta_r=0.0, seed=0))
    keys = trial_keys(1, args.trials, 0)
    cases = []
    for label, m, phi in (("fixture", fixture, phi_f), ("12-state", bench, phi_b)):
        cdf = K.cumulative_rows(m.transition)
        cases.append((f"online/{label}", lambda use, cdf=cdf, phi=phi: K.online_rollouts(
            cdf, phi.state_map, phi.n_abstract, 0, (0, 0), args.visits, keys, 10**6, use_numba=use)))
        sources = np.resize(phi.blocks[0], args.visits)
        cases.append((f"sources/{label}", lambda use, cdf=cdf, phi=phi, sources=sources: K.source_draws(
            cdf, phi.state_map, phi.n_abstract, sources, 0, keys, use_numba=use)))

    print(f"backend available: {K.backend()}; trials={args.trials} visits={args.visits}")
    print(f"{'kernel':<20}{'numpy s':>12}{'numba s':>12}{'speedup':>10}")
    for name, fn in cases:
        ref = fn(False)
        np_mean, _ = timed(lambda: fn(False), args.repeats)
        if K.HAVE_NUMBA:
            got = fn(True)  # warm-up and equality check
            same = all(np.array_equal(a, b) for a, b in zip(as_tuple(ref), as_tuple(got)))
            nb_mean, _ = timed(lambda: fn(True), args.repeats)
            print(f"{name:<20}{np_mean:>12.4f}{nb_mean:>12.4f}{np_mean / nb_mean:>9.1f}x{'' if same else '  MISMATCH'}")
        else:
            print(f"{name:<20}{np_mean:>12.4f}{'-':>12}{'-':>10}")


if __name__ == "__main__":
    main()
