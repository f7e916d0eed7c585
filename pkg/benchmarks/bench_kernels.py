"""Compare the compiled and pure-numpy kernel backends.

    python benchmarks/bench_kernels.py [--repeat 5]

Times relative value iteration and lazy power iteration on random games of
growing size, plus a full Frank-Wolfe solve that calls the oracle in a loop.
"""
import argparse
import sys
import timeit
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "tests"))

from games import random_game  # noqa: E402
from mdpcg import kernels  # noqa: E402
from mdpcg.oracle import arc_layout  # noqa: E402
from mdpcg.solver import solve_frank_wolfe  # noqa: E402


def bench_rvi(mod, spec, c, repeat):
    lay = arc_layout(spec)

    def call():
        h = np.zeros(spec.num_states)
        mod.relative_value_iteration(c, lay.sa_ptr, lay.sa_idx, lay.head_ptr, lay.head_idx,
                                     lay.head_prob, h, 0.5, 1e-10, 100_000)
    return min(timeit.repeat(call, number=1, repeat=repeat))


def bench_power(mod, P, repeat):
    def call():
        x = np.full(P.shape[0], 1.0 / P.shape[0])
        mod.stationary_power(P, x, 1e-12, 1_000_000)
    return min(timeit.repeat(call, number=1, repeat=repeat))


def bench_fw(mod, spec, repeat):
    saved = kernels.relative_value_iteration, kernels.stationary_power
    kernels.relative_value_iteration = mod.relative_value_iteration
    kernels.stationary_power = mod.stationary_power
    try:
        return min(timeit.repeat(lambda: solve_frank_wolfe(spec, tol=1e-8, polish=True),
                                 number=1, repeat=repeat))
    finally:
        kernels.relative_value_iteration, kernels.stationary_power = saved


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    backends = kernels.backends()
    names = sorted(backends)
    print(f"backends: {', '.join(names)} (active: {kernels.BACKEND})")
    print(f"{'kernel':<8}{'size':>6}" + "".join(f"{n + ' [ms]':>16}" for n in names) + f"{'speedup':>10}")
    rng = np.random.default_rng(0)
    for S in (10, 50, 200):
        spec = random_game(rng, S, max_actions=4, max_heads=3)
        c = rng.uniform(0, 1, spec.num_arcs)
        P = rng.uniform(size=(S, S)) * (rng.uniform(size=(S, S)) < 0.2) + np.eye(S, k=1) + np.eye(S, k=1 - S)
        P /= P.sum(axis=1, keepdims=True)
        for label, fn in (("rvi", lambda m: bench_rvi(m, spec, c, args.repeat)),
                          ("power", lambda m: bench_power(m, P, args.repeat))):
            t = {n: fn(backends[n]) * 1e3 for n in names}
            speed = f"{t['python'] / t['cython']:>9.1f}x" if "cython" in t else ""
            print(f"{label:<8}{S:>6}" + "".join(f"{t[n]:>16.3f}" for n in names) + speed)
    spec = random_game(rng, 30, max_actions=3, max_heads=2)
    t = {n: bench_fw(backends[n], spec, max(1, args.repeat // 2)) * 1e3 for n in names}
    speed = f"{t['python'] / t['cython']:>9.1f}x" if "cython" in t else ""
    print(f"{'fw':<8}{30:>6}" + "".join(f"{t[n]:>16.3f}" for n in names) + speed)


if __name__ == "__main__":
    main()
