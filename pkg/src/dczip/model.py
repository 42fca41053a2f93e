"""Generative model: graph and parameter containers, the ZIP mass function,
network sampling, expected strengths and the complete-data log-likelihood.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import stats
from scipy.special import gammaln

from dczip.errors import DataError

#: Returned in place of a log-probability when the probability is exactly 0.
LOG_ZERO = -math.inf

#: Lower bound on every Poisson rate used inside a log-pmf.
RATE_FLOOR = 1e-12

#: Upper bound applied to estimated structural-zero probabilities.
P_MAX = 1.0 - 1e-10

SPARSITY_MODES = ("local", "global")


@dataclass
class WeightedDigraph:
    """Directed network with non-negative integer edge counts.

    Weights are stored dense; the diagonal is always zero.
    """

    weights: np.ndarray
    node_labels: Optional[list[str]] = None

    def __post_init__(self):
        w = np.asarray(self.weights)
        if w.ndim != 2 or w.shape[0] != w.shape[1] or w.shape[0] < 1:
            raise DataError(f"weights must be a non-empty square matrix, got shape {w.shape}")
        if w.dtype.kind == "f":
            if not np.all(np.isfinite(w)) or np.any(w != np.round(w)):
                raise DataError("weights must be integers")
        elif w.dtype.kind not in "iub":
            raise DataError(f"unsupported weight dtype {w.dtype}")
        w = w.astype(np.int64)
        if np.any(w < 0):
            raise DataError("weights must be non-negative")
        if np.any(np.diag(w) != 0):
            raise DataError("self-loops are not allowed: diagonal must be zero")
        self.weights = w
        if self.node_labels is not None:
            labels = [str(x) for x in self.node_labels]
            if len(labels) != w.shape[0]:
                raise DataError(f"{len(labels)} node labels for {w.shape[0]} nodes")
            if len(set(labels)) != len(labels):
                raise DataError("node labels must be unique")
            self.node_labels = labels

    @property
    def n(self) -> int:
        return self.weights.shape[0]

    def labels(self) -> list[str]:
        """Node identifiers, defaulting to 1-based indices."""
        if self.node_labels is not None:
            return list(self.node_labels)
        return [str(i + 1) for i in range(self.n)]

    def out_strength(self) -> np.ndarray:
        return self.weights.sum(axis=1)

    def in_strength(self) -> np.ndarray:
        return self.weights.sum(axis=0)

    def __eq__(self, other):
        if not isinstance(other, WeightedDigraph):
            return NotImplemented
        return (
            np.array_equal(self.weights, other.weights)
            and self.node_labels == other.node_labels
        )


@dataclass
class Partition:
    """Hard assignment of ``n`` nodes to ``K`` communities.

    Labels are 0-based in memory; files use 1-based labels.
    """

    labels: np.ndarray
    K: int

    def __post_init__(self):
        labels = np.asarray(self.labels)
        if labels.ndim != 1:
            raise ValueError("labels must be one-dimensional")
        if labels.size and labels.dtype.kind == "f" and np.any(labels != np.round(labels)):
            raise ValueError("labels must be integers")
        labels = labels.astype(np.int64)
        if self.K < 1:
            raise ValueError(f"K must be positive, got {self.K}")
        if labels.size and (labels.min() < 0 or labels.max() >= self.K):
            raise ValueError(f"labels must lie in 0..{self.K - 1}")
        self.labels = labels
        self.K = int(self.K)

    @property
    def n(self) -> int:
        return self.labels.size

    def one_hot(self) -> np.ndarray:
        Z = np.zeros((self.n, self.K))
        Z[np.arange(self.n), self.labels] = 1.0
        return Z

    def counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.K)


@dataclass
class BlockParams:
    """Full parameter set of the degree-corrected ZIP block model.

    ``P`` holds structural-zero probabilities and ``Lambda`` Poisson rates,
    both ``K x K``; ``mu`` and ``nu`` are the per-node out- and in-strength
    corrections.
    """

    pi: np.ndarray
    P: np.ndarray
    Lambda: np.ndarray
    mu: np.ndarray
    nu: np.ndarray
    sparsity_mode: str = "local"
    degree_corrected: bool = True

    def __post_init__(self):
        self.pi = np.asarray(self.pi, dtype=float).ravel()
        self.P = np.atleast_2d(np.asarray(self.P, dtype=float))
        self.Lambda = np.atleast_2d(np.asarray(self.Lambda, dtype=float))
        self.mu = np.asarray(self.mu, dtype=float).ravel()
        self.nu = np.asarray(self.nu, dtype=float).ravel()
        self.validate()

    @property
    def K(self) -> int:
        return self.pi.size

    @property
    def n(self) -> int:
        return self.mu.size

    @classmethod
    def from_blocks(cls, pi, P, Lambda, n: int, mu=None, nu=None, sparsity_mode="local",
                    degree_corrected=None) -> "BlockParams":
        """Build parameters with unit strength corrections unless given."""
        mu = np.ones(n) if mu is None else mu
        nu = np.ones(n) if nu is None else nu
        if degree_corrected is None:
            degree_corrected = not (np.all(np.asarray(mu) == 1) and np.all(np.asarray(nu) == 1))
        return cls(pi, P, Lambda, mu, nu, sparsity_mode, degree_corrected)

    def validate(self) -> None:
        K = self.K
        if K < 1:
            raise ValueError("pi must be non-empty")
        if self.P.shape != (K, K) or self.Lambda.shape != (K, K):
            raise ValueError(f"P and Lambda must be {K}x{K}")
        if self.mu.size != self.nu.size or self.mu.size < 1:
            raise ValueError("mu and nu must have the same positive length")
        for name, arr in (("pi", self.pi), ("P", self.P), ("Lambda", self.Lambda),
                          ("mu", self.mu), ("nu", self.nu)):
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} has non-finite entries")
        if np.any(self.pi < 0) or abs(self.pi.sum() - 1.0) > 1e-12:
            raise ValueError("pi must be a probability vector")
        if np.any(self.P < 0) or np.any(self.P > 1):
            raise ValueError("P entries must lie in [0, 1]")
        if np.any(self.Lambda < 0):
            raise ValueError("Lambda entries must be non-negative")
        if np.any(self.mu < 0) or np.any(self.nu < 0):
            raise ValueError("mu and nu must be non-negative")
        if self.sparsity_mode not in SPARSITY_MODES:
            raise ValueError(f"sparsity_mode must be one of {SPARSITY_MODES}")
        if self.sparsity_mode == "global" and np.ptp(self.P) > 1e-12:
            raise ValueError("global sparsity requires all P entries equal")
        if not self.degree_corrected and (np.any(self.mu != 1) or np.any(self.nu != 1)):
            raise ValueError("mu and nu must be 1 without degree correction")

    def is_symmetric(self) -> bool:
        return bool(np.array_equal(self.P, self.P.T) and np.array_equal(self.Lambda, self.Lambda.T))

    def copy(self) -> "BlockParams":
        return BlockParams(self.pi.copy(), self.P.copy(), self.Lambda.copy(), self.mu.copy(),
                           self.nu.copy(), self.sparsity_mode, self.degree_corrected)

    def permuted(self, perm: Sequence[int]) -> "BlockParams":
        """Relabel communities so that new community ``a`` is old ``perm[a]``."""
        perm = np.asarray(perm)
        return BlockParams(self.pi[perm], self.P[np.ix_(perm, perm)],
                           self.Lambda[np.ix_(perm, perm)], self.mu.copy(), self.nu.copy(),
                           self.sparsity_mode, self.degree_corrected)


def zip_log_pmf(w, p: float, rate: float) -> float:
    """Log-probability of ``w`` under ZIP(p, rate).

    Returns :data:`LOG_ZERO` when the probability is exactly zero.
    """
    if isinstance(w, bool) or not float(w).is_integer() or w < 0:
        raise ValueError(f"w must be a non-negative integer, got {w!r}")
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must lie in [0, 1], got {p}")
    if not rate >= 0.0:
        raise ValueError(f"rate must be non-negative, got {rate}")
    w = int(w)
    rate = max(rate, RATE_FLOOR)
    if w == 0:
        if p == 0.0:
            return -rate
        if p == 1.0:
            return 0.0
        # log(p + (1-p) e^-rate) without forming e^-rate
        return float(np.logaddexp(math.log(p), math.log1p(-p) - rate))
    if p == 1.0:
        return LOG_ZERO
    return math.log1p(-p) + w * math.log(rate) - rate - math.lgamma(w + 1)


def _log_pmf_array(A: np.ndarray, p, rate) -> np.ndarray:
    """Vectorized ZIP log-pmf with the rate floor applied."""
    rate = np.maximum(rate, RATE_FLOOR)
    p = np.broadcast_to(np.asarray(p, dtype=float), np.shape(A))
    with np.errstate(divide="ignore", invalid="ignore"):
        log1mp = np.log1p(-p)
        zero = np.where(p > 0, np.logaddexp(np.log(p), log1mp - rate), -rate)
        pos = log1mp + A * np.log(rate) - rate - gammaln(A + 1.0)
    return np.where(A == 0, zero, pos)


def _stream(seed, key: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(key,))))


def sample_partition(pi, n: int, seed) -> Partition:
    """Draw iid community labels from ``pi``."""
    pi = np.asarray(pi, dtype=float)
    rng = _stream(seed, 0)
    labels = rng.choice(pi.size, size=n, p=pi)
    return Partition(labels, pi.size)


def sample_edges(params: BlockParams, partition: Partition, seed) -> WeightedDigraph:
    """Draw edge counts given a fixed partition.

    Each ordered pair consumes two uniforms at a position fixed by the pair
    index of a Philox counter stream, so ``A[i, j]`` depends only on
    ``(seed, i, j)`` and the parameters.
    """
    n = partition.n
    if params.n != n:
        raise ValueError(f"params carry {params.n} strength corrections for {n} nodes")
    gen = _stream(seed, 1)
    u = gen.random((2, n, n))
    z = partition.labels
    rate = np.outer(params.mu, params.nu) * params.Lambda[np.ix_(z, z)]
    structural = u[0] < params.P[np.ix_(z, z)]
    counts = stats.poisson.ppf(u[1], np.where(rate > 0, rate, 1.0))
    A = np.where(structural | (rate <= 0), 0, counts).astype(np.int64)
    np.fill_diagonal(A, 0)
    return WeightedDigraph(A)


def sample_network(params: BlockParams, n: int, seed) -> tuple[WeightedDigraph, Partition]:
    """Sample a network and its planted partition from the model."""
    if n < 2:
        raise ValueError("n must be at least 2")
    if params.n != n:
        raise ValueError(f"params carry {params.n} strength corrections, expected {n}")
    Z = sample_partition(params.pi, n, seed)
    return sample_edges(params, Z, seed), Z


def expected_strengths(params: BlockParams) -> tuple[np.ndarray, np.ndarray]:
    """Expected out- and in-strength of every node, marginal over communities."""
    c = float(params.pi @ ((1.0 - params.P) * params.Lambda) @ params.pi)
    out = params.mu * (params.nu.sum() - params.nu) * c
    inn = params.nu * (params.mu.sum() - params.mu) * c
    return out, inn


def complete_log_likelihood(A: WeightedDigraph, Z: Partition, params: BlockParams) -> float:
    """Joint log-probability of the network and a hard partition.

    Returns :data:`LOG_ZERO` if some observed pair or label has probability 0.
    """
    if Z.K != params.K:
        raise ValueError(f"partition has K={Z.K}, params have K={params.K}")
    if Z.n != A.n or params.n != A.n:
        raise ValueError("dimension mismatch between graph, partition and params")
    z = Z.labels
    counts = Z.counts()
    occupied = counts > 0
    if np.any(params.pi[occupied] == 0):
        return LOG_ZERO
    prior = float(counts[occupied] @ np.log(params.pi[occupied]))
    W = A.weights
    rate = np.outer(params.mu, params.nu) * params.Lambda[np.ix_(z, z)]
    logf = _log_pmf_array(W, params.P[np.ix_(z, z)], rate)
    np.fill_diagonal(logf, 0.0)
    total = prior + float(logf.sum())
    if math.isnan(total) or total == -math.inf:
        return LOG_ZERO
    return total
