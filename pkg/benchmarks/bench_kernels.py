"""Time the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--scale 1.0] [--repeat 5]

Prints one row per kernel with the best-of-``repeat`` wall time for each
backend and the speed-up, after checking that both backends agree.
"""

from __future__ import annotations

import argparse
import sys
import timeit

import numpy as np

from oodcombine import kernels


def _cases(scale: float, rng: np.random.Generator):
    m = max(10, int(2000 * scale))
    cal = rng.normal(size=(m, 3))
    query = rng.normal(size=(m, 3))
    ref = rng.random((m, 2))
    vals = rng.random(m)
    knn_q = rng.random((m, 2))
    n_ref = max(10, int(4 * m))
    cost = rng.random((n_ref, m))
    f, g = cost.min(axis=1), np.zeros(m)
    x, y = rng.normal(size=m), rng.normal(size=m)
    return {
        f"dominance_counts {m}x{m}, d=3": lambda impl: kernels.dominance_counts(cal, query, impl=impl),
        f"knn_mean k=5, {m}x{m}, d=2": lambda impl: kernels.knn_mean(ref, vals, knn_q, 5, impl=impl),
        f"gibbs_kernel {n_ref}x{m}": lambda impl: kernels.gibbs_kernel(cost, f, g, 0.01, impl=impl),
        f"concordance n={m}": lambda impl: kernels.concordance(x, y, impl=impl),
    }


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--scale", type=float, default=1.0, help="problem-size multiplier")
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    backends = kernels.available_backends()
    if "cython" not in backends:
        print("compiled kernels are not built; run `pip install -e . --no-build-isolation` first")
    rng = np.random.default_rng(args.seed)
    print(f"{'kernel':<34}" + "".join(f"{name:>12}" for name in sorted(backends)) + f"{'speed-up':>10}")
    for label, fn in _cases(args.scale, rng).items():
        outs = {name: fn(impl) for name, impl in backends.items()}
        first = next(iter(outs.values()))
        for name, out in outs.items():
            if not np.array_equal(np.asarray(out), np.asarray(first)) and not np.allclose(out, first, rtol=1e-14):
                print(f"backend mismatch in {label} ({name})", file=sys.stderr)
                return 1
        times = {
            name: min(timeit.repeat(lambda: fn(impl), number=1, repeat=args.repeat))
            for name, impl in sorted(backends.items())
        }
        row = f"{label:<34}" + "".join(f"{times[n] * 1e3:>10.1f}ms" for n in sorted(times))
        if "cython" in times:
            row += f"{times['python'] / times['cython']:>9.1f}x"
        print(row)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
