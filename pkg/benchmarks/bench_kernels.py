"""Time the compiled and NumPy kernel backends on the same inputs.

Usage::

    python3 benchmarks/bench_kernels.py [--n 200] [--k 5] [--repeat 5]
"""
import argparse
import timeit

import numpy as np

from dczip import kernels
from dczip.model import BlockParams, sample_network


def make_inputs(n, K, seed=0):
    rng = np.random.default_rng(seed)
    Lam = rng.uniform(2.0, 8.0, (K, K))
    Lam = (Lam + Lam.T) / 2
    P = rng.uniform(0.3, 0.8, (K, K))
    P = (P + P.T) / 2
    mu = rng.lognormal(0.0, 0.5, n)
    nu = rng.lognormal(0.0, 0.5, n)
    params = BlockParams(np.full(K, 1.0 / K), P, Lam, mu / mu.mean(), nu / nu.mean())
    A, _ = sample_network(params, n, seed)
    tau = rng.dirichlet(np.ones(K), n)
    return A.weights, tau, P, Lam, params.mu, params.nu


def bench(backend, inputs, repeat):
    kernels.set_backend(backend)
    W, tau, P, Lam, mu, nu = inputs
    calls = {
        "pair_logpmf_matrix": lambda: kernels.pair_logpmf_matrix(W, P, Lam, mu, nu),
        "alpha_out_pass": lambda: kernels.alpha_out_pass(W, tau, P, Lam, mu, nu),
        "alpha_in_pass": lambda: kernels.alpha_in_pass(W, tau, P, Lam, mu, nu, mu),
    }
    return {name: min(timeit.repeat(fn, number=1, repeat=repeat)) for name, fn in calls.items()}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=200)
    ap.add_argument("--k", type=int, default=5)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    inputs = make_inputs(args.n, args.k)
    backends = kernels.available_backends()
    results = {b: bench(b, inputs, args.repeat) for b in backends}
    print(f"n={args.n} K={args.k} best of {args.repeat} (ms)")
    print(f"{'kernel':<22}" + "".join(f"{b:>12}" for b in backends)
          + ("     speedup" if "cython" in results else ""))
    for name in results[backends[0]]:
        row = f"{name:<22}" + "".join(f"{1e3 * results[b][name]:>12.2f}" for b in backends)
        if "cython" in results:
            row += f"{results['python'][name] / results['cython'][name]:>11.1f}x"
        print(row)


if __name__ == "__main__":
    main()
