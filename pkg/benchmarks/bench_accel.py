#!/usr/bin/env python3
"""Benchmark the JIT kernels against their pure-numpy twins.

Run after installing the package:

    python3 benchmarks/bench_accel.py

The dispatched path follows UNCAPS_NUMBA; this script times both
implementations directly regardless of the flag, warming the JIT first so
compilation is excluded.
"""

import timeit

import numpy as np
import scipy.linalg as sla

from uncaps import accel


def bench(label, fn, args, number):
    fn(*args)  # warm (JIT compile / cache touch)
    seconds = timeit.timeit(lambda: fn(*args), number=number) / number
    print(f"  {label:<10} {seconds * 1e6:10.2f} us/call")
    return seconds


def compare(name, jit_fn, np_fn, args, number):
    print(f"{name}:")
    t_np = bench("numpy", np_fn, args, max(number // 10, 1))
    t_jit = bench("numba", jit_fn, args, number)
    print(f"  {'speedup':<10} {t_np / t_jit:10.1f} x")


def main():
    rng = np.random.default_rng(0)

    n, d, q = 28, 3, 7
    x = rng.uniform(size=(n, d))
    gram = accel._rbf_matrix_np(x, x, 0.2, 1.0) + 1e-4 * np.eye(n)
    chol = np.linalg.cholesky(gram)
    alpha = sla.cho_solve((chol, True), rng.normal(size=n))
    queries = rng.uniform(size=(q, d))

    compare("rbf_matrix (28x28, d=3)",
            accel.rbf_matrix, accel._rbf_matrix_np,
            (x, x, 0.2, 1.0), 20_000)

    compare("chol_posterior (7 queries, n=28)",
            accel.chol_posterior, accel._chol_posterior_np,
            (x, chol, alpha, queries, 0.2, 1.0), 20_000)

    compare("uei_value (d=3, 7 sigma points)",
            accel.uei_value, accel._uei_value_np,
            (queries[0], 0.01, 2.0, x, chol, alpha, 0.2, 1.0, 0.5), 50_000)

    m = 2000
    omegas = rng.normal(0, 5.0, size=(m, d))
    phases = rng.uniform(0, 2 * np.pi, size=m)
    weights = rng.normal(size=m)
    theta = rng.uniform(size=d)
    compare(f"rff_value_grad (m={m}, d={d})",
            accel.rff_value_grad, accel._rff_value_grad_np,
            (theta, omegas, phases, weights, np.sqrt(2.0 / m)), 20_000)

    thetas = rng.uniform(size=(8, d))
    compare(f"rff_features (8 points, m={m})",
            accel.rff_features, accel._rff_features_np,
            (thetas, omegas, phases), 10_000)

    a = np.array([[1.0, 0.05], [-0.1, 0.98]])
    b = np.array([[0.0], [0.05]])
    gain = np.array([[3.0, 1.2]])
    noise = rng.normal(0, 0.1, size=(100, 2))
    compare("rollout_gain (horizon=100)",
            accel.rollout_gain, accel._rollout_gain_np,
            (a, b, gain, np.zeros(2), np.array([1.0, 0.0]),
             np.diag([1.0, 0.1]), np.array([[0.05]]), noise), 20_000)

    compare("dare_solve (2-state plant)",
            accel.dare_solve, accel._dare_solve_np,
            (a, b, np.diag([1.0, 0.1]), np.array([[0.05]]), 1e-12, 10_000), 500)


if __name__ == "__main__":
    main()
