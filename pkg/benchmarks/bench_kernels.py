"""Compare the compiled and numpy BT kernels on identical fits.

Usage: python3 benchmarks/bench_kernels.py [--reps 20]
"""

import argparse
import timeit

import numpy as np

from stratrlhf import _fallback

try:
    from stratrlhf import _kernels
except ImportError:  # extension not built
    _kernels = None

SIZES = ((20, 16), (200, 16), (1600, 16), (200, 64))


def problem(n: int, d: int, seed: int = 0):
    rng = np.random.default_rng(seed)
    theta = rng.normal(size=d) / np.sqrt(d)
    x = rng.uniform(-1, 1, size=(n, d)) / np.sqrt(d)
    signs = np.where(rng.random(n) < 1 / (1 + np.exp(-x @ theta)), 1.0, -1.0)
    y = np.ascontiguousarray(x * signs[:, None])
    return y, np.zeros(d), 1.0, (d + np.log(10)) / n


def main(argv=None) -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--reps", type=int, default=20)
    args = parser.parse_args(argv)
    backends = [("python", _fallback)] + ([("cython", _kernels)] if _kernels else [])
    print(f"{'n':>6} {'d':>4} " + " ".join(f"{name + ' ms':>12}" for name, _ in backends)
          + f" {'speedup':>8} {'max |dtheta|':>13}")
    for n, d in SIZES:
        args_ = problem(n, d)
        times, thetas = [], []
        for _, mod in backends:
            thetas.append(np.asarray(mod.fit_bt(*args_, 1e-8, 5000)[0]))
            t = timeit.timeit(lambda: mod.fit_bt(*args_, 1e-8, 5000), number=args.reps)
            times.append(1e3 * t / args.reps)
        speedup = times[0] / times[-1] if len(times) > 1 else float("nan")
        gap = float(np.max(np.abs(thetas[0] - thetas[-1])))
        print(f"{n:>6} {d:>4} " + " ".join(f"{t:>12.3f}" for t in times) + f" {speedup:>8.2f} {gap:>13.2e}")


if __name__ == "__main__":
    main()
