"""Choosing the number of communities with the integrated completed likelihood."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Optional, Sequence

import numpy as np

from dczip.inference import FitOptions, FitResult, ecm_m_step, fit_vem
from dczip.init_eval import kmeans_points
from dczip.model import BlockParams, Partition, WeightedDigraph, complete_log_likelihood

DEFAULT_RESTARTS = 5
INIT_STRATEGIES = ("kmeans", "kmeans-presence", "portfolio")


@dataclass
class IclRow:
    k: int
    loglik: float
    block_penalty: float
    mixing_penalty: float
    icl: float
    elbo: float
    converged: bool
    warnings: list = field(default_factory=list)
    partition: Optional[Partition] = None


@dataclass
class IclTable:
    rows: list
    k_hat: int

    def row(self, k: int) -> IclRow:
        for r in self.rows:
            if r.k == k:
                return r
        raise KeyError(k)


def icl_penalties(n: int, k: int, degree_corrected: bool) -> tuple[float, float]:
    """Return ``(block_penalty, mixing_penalty)``, both subtracted from the log-likelihood."""
    n_block = k * (k + 1) / 2 + (n if degree_corrected else 0)
    return n_block * math.log(n * (n - 1)), (k - 1) / 2 * math.log(n)


def refit_at_partition(A: WeightedDigraph, Z: Partition, params: BlockParams,
                       opts: FitOptions) -> BlockParams:
    """Re-maximize all parameters for a fixed hard partition."""
    tau = Z.one_hot()
    out = ecm_m_step(A, tau, params, opts)
    pi = Z.counts() / Z.n
    return BlockParams(pi, out.P, out.Lambda, out.mu, out.nu, out.sparsity_mode, out.degree_corrected)


def icl_score(A: WeightedDigraph, fit: FitResult, k: int, degree_corrected: bool,
              opts: Optional[FitOptions] = None) -> IclRow:
    """ICL of a fitted model at its hard partition."""
    if fit.params.K != k:
        raise ValueError(f"fit has K={fit.params.K}, expected {k}")
    if fit.params.degree_corrected != degree_corrected:
        raise ValueError("fit and requested model disagree on degree correction")
    opts = replace(opts or FitOptions(), degree_corrected=degree_corrected,
                   sparsity_mode=fit.params.sparsity_mode)
    Z = fit.partition
    params = refit_at_partition(A, Z, fit.params, opts)
    loglik = complete_log_likelihood(A, Z, params)
    block, mixing = icl_penalties(A.n, k, degree_corrected)
    warnings = list(fit.warnings)
    small = np.flatnonzero(Z.counts() < 5)
    if small.size:
        names = ", ".join(str(a + 1) for a in small)
        noun = "community" if small.size == 1 else "communities"
        verb = "has" if small.size == 1 else "have"
        warnings.append(f"{noun} {names} {verb} fewer than 5 nodes")
    return IclRow(k, loglik, block, mixing, loglik - block - mixing, fit.elbo, fit.converged,
                  warnings, Z)


def initial_partitions(A: WeightedDigraph, k: int, seed: int, strategy: str = "portfolio") -> list:
    """Starting partitions from k-means on raw rows and/or edge-presence rows."""
    if strategy not in INIT_STRATEGIES:
        raise ValueError(f"init strategy must be one of {INIT_STRATEGIES}")
    W = A.weights.astype(float)
    out = []
    if strategy in ("kmeans", "portfolio"):
        out.append(kmeans_points(W, k, seed))
    if strategy in ("kmeans-presence", "portfolio"):
        out.append(kmeans_points((W > 0).astype(float), k, seed))
    return out


def best_fit(A: WeightedDigraph, k: int, opts: FitOptions, seeds: Iterable[int],
             strategy: str = "portfolio", audit: Optional[list] = None) -> FitResult:
    """Fit from every start and keep the highest ELBO (first wins ties).

    If ``audit`` is a list, every candidate fit is appended to it.
    """
    best = None
    for seed in seeds:
        for init in initial_partitions(A, k, seed, strategy):
            fit = fit_vem(A, k, init, replace(opts, seed=seed))
            if audit is not None:
                audit.append(fit)
            if best is None or fit.elbo > best.elbo:
                best = fit
    return best


def select_k(A: WeightedDigraph, k_min: int, k_max: int, opts: Optional[FitOptions] = None,
             restarts: Optional[Sequence[int]] = None, strategy: str = "portfolio",
             audit: Optional[list] = None) -> IclTable:
    """Fit every k in ``[k_min, k_max]`` and pick the ICL maximizer (smaller k on ties)."""
    if not 1 <= k_min <= k_max:
        raise ValueError("need 1 <= k_min <= k_max")
    if k_max > A.n:
        raise ValueError(f"k_max={k_max} exceeds n={A.n}")
    opts = opts or FitOptions()
    seeds = list(range(DEFAULT_RESTARTS)) if restarts is None else list(restarts)
    if not seeds:
        raise ValueError("need at least one restart seed")
    rows = []
    for k in range(k_min, k_max + 1):
        fit = best_fit(A, k, opts, seeds, strategy, audit)
        rows.append(icl_score(A, fit, k, opts.degree_corrected, opts))
    k_hat = rows[0].k
    best = rows[0].icl
    for r in rows[1:]:
        if r.icl > best:
            k_hat, best = r.k, r.icl
    return IclTable(rows, k_hat)
