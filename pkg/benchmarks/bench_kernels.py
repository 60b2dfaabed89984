"""Benchmark the JIT kernels against the pure numpy/scipy fallbacks.

Part 1 times each kernel flavour in-process on the sizes the learners
actually hit.  Part 2 re-runs a short learner episode in a subprocess
per backend (selected via CORECTRON_NUMBA) so dispatch overhead and
allocation behaviour are measured end to end.

Usage: python benchmarks/bench_kernels.py [--rounds N]
"""

import argparse
import os
import subprocess
import sys
import time

import numpy as np

from corectron import _kernels

SM_SIZES = (10, 50, 100, 200)
SOLVE_SIZES = (50, 200, 500)


def time_callable(fn, args_factory, repeats):
    # warm-up draw compiles JIT code and faults pages
    fn(*args_factory())
    best = float("inf")
    for _ in range(5):
        args = [args_factory() for _ in range(repeats)]
        t0 = time.perf_counter()
        for a in args:
            fn(*a)
        best = min(best, (time.perf_counter() - t0) / repeats)
    return best


def bench_sm_update(repeats):
    rng = np.random.default_rng(0)
    print("\nrank-one inverse update (in place), best of 5, per call:")
    print(f"{'d':>6} " + "".join(f"{name:>12}" for name in _kernels.IMPLEMENTATIONS))
    for d in SM_SIZES:
        inv0 = np.linalg.inv(random_spd(rng, d))
        inv0 = 0.5 * (inv0 + inv0.T)
        row = f"{d:>6} "
        for name, impl in _kernels.IMPLEMENTATIONS.items():
            fn = impl["sm_update"]
            per = time_callable(
                fn, lambda: (inv0.copy(), rng.standard_normal(d)), repeats
            )
            row += f"{per * 1e6:>10.1f}us"
        print(row)


def bench_spd_solve(repeats):
    rng = np.random.default_rng(1)
    print("\ntwo-sided triangular solve, best of 5, per call:")
    print(f"{'t':>6} " + "".join(f"{name:>12}" for name in _kernels.IMPLEMENTATIONS))
    for t in SOLVE_SIZES:
        raw = rng.standard_normal((t, t))
        L = np.linalg.cholesky(raw.dot(raw.T) + t * np.eye(t))
        row = f"{t:>6} "
        for name, impl in _kernels.IMPLEMENTATIONS.items():
            fn = impl["spd_solve"]
            per = time_callable(fn, lambda: (L, rng.standard_normal(t)), repeats)
            row += f"{per * 1e6:>10.1f}us"
        print(row)


def random_spd(rng, d):
    q, _ = np.linalg.qr(rng.standard_normal((d, d)))
    evals = rng.uniform(0.5, 3.0, d)
    return (q * evals).dot(q.T)


_EPISODE_SNIPPET = """
import time
from corectron.harness import default_config, resolve_hyperparameters, run_episode
from corectron.environment import FeedbackModel
from corectron import _kernels

config = default_config("linear", horizon={rounds}, seeds=(0,), diag_level="off")
params = resolve_hyperparameters(config, "corectron_l", 1.0)
_kernels.warmup()
best = float("inf")
for _ in range(3):
    result, _ = run_episode(config, "corectron_l", 1.0, params,
                            FeedbackModel.optimal(), 0)
    best = min(best, result.runtime_seconds)
print(f"{{_kernels.BACKEND}}: learner compute {{best:.4f}}s over {rounds} rounds")
"""


def bench_episode(rounds):
    print(f"\nfull episode, linear setting, T={rounds} (best of 3):")
    for flag in ("1", "0"):
        env = dict(os.environ, CORECTRON_NUMBA=flag)
        code = _EPISODE_SNIPPET.format(rounds=rounds)
        out = subprocess.run(
            [sys.executable, "-c", code], env=env, capture_output=True, text=True
        )
        print("  " + (out.stdout.strip() or out.stderr.strip()))


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--rounds", type=int, default=2000,
                        help="episode length for the end-to-end comparison")
    parser.add_argument("--repeats", type=int, default=200)
    args = parser.parse_args()

    print(f"active backend: {_kernels.BACKEND}")
    if not _kernels.HAS_NUMBA:
        print("numba not importable; only the numpy flavour is timed")
    bench_sm_update(args.repeats)
    bench_spd_solve(max(args.repeats // 4, 10))
    bench_episode(args.rounds)


if __name__ == "__main__":
    main()
