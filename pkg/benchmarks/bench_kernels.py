"""Compiled vs numpy-fallback timings for the hot kernels.

    python benchmarks/bench_kernels.py [--repeat N]

Both backends are run on identical inputs and their outputs compared
before any timing is reported. ``best_split`` is timed at a typical node
size and at a root-sized node, where the per-feature sort dominates and
the two backends converge; ``train`` is the whole forest fit.
"""
import argparse
import sys
import time

import numpy as np

from cuelab import kernels
from cuelab.classifier import TrainingSet, train


def tree_inputs(rng, n=2000, d=6):
    X = rng.standard_normal((n, d))
    y = (X[:, 0] + 0.5 * rng.standard_normal(n) > 0).astype(np.int64)
    mult = rng.multinomial(n, np.full(n, 1 / n))
    idx = np.flatnonzero(mult)
    return (X, y, mult, idx, np.arange(d), 1.0, 1.0, 1)


def forest_inputs(rng, n=400):
    X = rng.standard_normal((n, 6))
    y = (X[:, 0] + X[:, 1] + rng.standard_normal(n) > 0).astype(np.int64)
    return TrainingSet(X, y)


def stream_inputs(rng, n=200_000):
    t = np.cumsum(rng.integers(200, 300, n))
    p = rng.random(n)
    return (t, p, 0.8, 0.4, 20_000, 2, (True, 0, False, 0, False, 0))


def batch_inputs(rng, n_streams=20_000, max_len=40):
    lengths = rng.integers(1, max_len, n_streams)
    offsets = np.r_[0, np.cumsum(lengths)]
    t = np.cumsum(rng.integers(1, 3000, offsets[-1]))
    p = rng.random(offsets[-1])
    off = rng.uniform(0.05, 0.6, n_streams)
    on = np.minimum(1.0, off + rng.uniform(0.01, 0.4, n_streams))
    return (t, p, offsets, on, off, rng.integers(0, 30_000, n_streams),
            rng.integers(1, 5, n_streams))


def same(a, b):
    if isinstance(a, tuple):
        return len(a) == len(b) and all(same(x, y) for x, y in zip(a, b))
    if isinstance(a, np.ndarray):
        return np.array_equal(a, b)
    return a == b


def best_time(fn, args, impl, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args, impl=impl)
        times.append(time.perf_counter() - t0)
    return min(times)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    backends = kernels.available_backends()
    if "cython" not in backends:
        print("compiled kernels not built; only the fallback is available", file=sys.stderr)
        return 1
    rng = np.random.default_rng(args.seed)
    cases = [("best_split n=200", kernels.best_split, tree_inputs(rng, 200)),
             ("best_split n=20k", kernels.best_split, tree_inputs(rng, 20_000)),
             ("scan_cues", kernels.scan_cues, stream_inputs(rng)),
             ("scan_cue_batch", kernels.scan_cue_batch, batch_inputs(rng))]
    print(f"{'kernel':<20}{'python ms':>12}{'cython ms':>12}{'speedup':>10}")
    for name, fn, inputs in cases:
        py, cy = backends["python"], backends["cython"]
        if not same(fn(*inputs, impl=py), fn(*inputs, impl=cy)):
            print(f"{name}: backends disagree", file=sys.stderr)
            return 1
        t_py = best_time(fn, inputs, py, args.repeat)
        t_cy = best_time(fn, inputs, cy, args.repeat)
        print(f"{name:<20}{1e3 * t_py:>12.3f}{1e3 * t_cy:>12.3f}{t_py / t_cy:>9.1f}x")

    ts = forest_inputs(rng)
    models, secs = {}, {}
    for name in ("python", "cython"):
        kernels._impl = backends[name]  # train() dispatches through the module default
        t0 = time.perf_counter()
        models[name] = train(ts, seed=0, n_trees=50).dumps()
        secs[name] = time.perf_counter() - t0
    kernels._impl = backends[kernels.BACKEND]
    if models["python"] != models["cython"]:
        print("train: backends disagree", file=sys.stderr)
        return 1
    t_py, t_cy = secs["python"], secs["cython"]
    print(f"{'train 400x6, 50 trees':<20}{1e3 * t_py:>12.3f}{1e3 * t_cy:>12.3f}{t_py / t_cy:>9.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
