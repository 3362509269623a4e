#!/usr/bin/env python3
"""Benchmark the DP kernels: numba backend vs pure-NumPy fallback.

Builds a seeded desk-scale lattice, verifies both backends agree, then
times each kernel.  Run from the repo root:

    python3 benchmarks/bench_kernels.py [--frames 50 --labels 20 --vocab 32]
"""

import argparse
import time

import numpy as np

from twrnnt import kernels


def make_instance(T, U, V, seed=0):
    rng = np.random.default_rng(seed)
    raw = rng.normal(scale=1.5, size=(T, U + 1, V + 1))
    logp = raw - np.log(np.sum(np.exp(raw), axis=-1, keepdims=True))
    labels = rng.integers(0, V, size=U).astype(np.int64)
    return np.ascontiguousarray(logp), labels


def time_call(fn, args, repeats):
    fn(*args)  # warmup (and JIT compile for the numba table)
    t0 = time.perf_counter()
    for _ in range(repeats):
        fn(*args)
    return (time.perf_counter() - t0) / repeats


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--frames", type=int, default=50)
    parser.add_argument("--labels", type=int, default=20)
    parser.add_argument("--vocab", type=int, default=32)
    parser.add_argument("--repeats", type=int, default=30)
    args = parser.parse_args()

    logp, labels = make_instance(args.frames, args.labels, args.vocab)
    impls = kernels.implementations()
    if impls["numba"] is None:
        print("numba unavailable or disabled; benchmarking the NumPy path only")

    lam = np.linspace(0.5, 1.5, args.labels)
    cases = {}
    for name, table in impls.items():
        if table is None:
            continue
        alpha, ll = table["forward_fill"](logp, labels)
        beta, _ = table["backward_fill"](logp, labels)
        A, R, prefix, ll2 = table["emission_sweep"](logp, labels)
        cases[name] = {
            "forward_fill": (table["forward_fill"], (logp, labels)),
            "backward_fill": (table["backward_fill"], (logp, labels)),
            "loglik_grad": (table["loglik_grad"], (logp, labels, alpha, beta, ll)),
            "emission_sweep": (table["emission_sweep"], (logp, labels)),
            "weighted_grad": (
                table["weighted_grad"],
                (logp, labels, A, R, prefix, ll2, lam, 1.0),
            ),
        }

    if len(cases) == 2:
        a, _ = impls["numpy"]["forward_fill"](logp, labels)
        b, _ = impls["numba"]["forward_fill"](logp, labels)
        assert np.array_equal(a, b), "backends disagree!"
        print("backend agreement check: OK")

    print(
        f"\nlattice T={args.frames} U={args.labels} |V|={args.vocab}, "
        f"{args.repeats} repeats\n"
    )
    header = f"{'kernel':<18}" + "".join(f"{n:>14}" for n in cases)
    if len(cases) == 2:
        header += f"{'speedup':>10}"
    print(header)
    print("-" * len(header))
    for kernel_name in next(iter(cases.values())):
        times = {}
        for backend, table in cases.items():
            fn, fargs = table[kernel_name]
            times[backend] = time_call(fn, fargs, args.repeats)
        row = f"{kernel_name:<18}" + "".join(
            f"{times[b] * 1e3:>12.3f}ms" for b in cases
        )
        if len(times) == 2:
            row += f"{times['numpy'] / times['numba']:>9.1f}x"
        print(row)


if __name__ == "__main__":
    main()
