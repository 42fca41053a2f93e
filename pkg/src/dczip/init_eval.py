"""Initial partitions (k-means on adjacency rows, directed spectral
clustering) and normalized mutual information between partitions."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import xlogy

from dczip.errors import NumericalError
from dczip.model import Partition, WeightedDigraph

KMEANS_RESTARTS = 10


@dataclass
class ContingencyTable:
    counts: np.ndarray
    n: int

    @classmethod
    def from_partitions(cls, p1: Partition, p2: Partition) -> "ContingencyTable":
        if p1.n != p2.n:
            raise ValueError(f"partitions have different lengths ({p1.n} vs {p2.n})")
        counts = np.zeros((p1.K, p2.K), dtype=np.int64)
        np.add.at(counts, (p1.labels, p2.labels), 1)
        return cls(counts, p1.n)


def _entropy(counts: np.ndarray, n: int) -> float:
    p = counts[counts > 0] / n
    return -math.fsum(p * np.log(p))


def nmi(p1: Partition, p2: Partition) -> float:
    """Normalized mutual information with arithmetic-mean normalization."""
    table = ContingencyTable.from_partitions(p1, p2)
    n = table.n
    if n == 0:
        raise ValueError("partitions are empty")
    c = table.counts.astype(float)
    h1 = _entropy(c.sum(axis=1), n)
    h2 = _entropy(c.sum(axis=0), n)
    if h1 == 0.0 and h2 == 0.0:
        return 1.0
    if h1 == 0.0 or h2 == 0.0:
        return 0.0
    outer = np.outer(c.sum(axis=1), c.sum(axis=0))
    nz = c > 0
    # fsum is order independent, so nmi(p, q) == nmi(q, p) exactly
    mi = math.fsum(c[nz] / n * np.log(n * c[nz] / outer[nz]))
    return float(min(1.0, max(0.0, 2.0 * mi / (h1 + h2))))


def _sq_dist(X, C):
    d = (X * X).sum(axis=1)[:, None] - 2.0 * X @ C.T + (C * C).sum(axis=1)[None, :]
    return np.maximum(d, 0.0)


def _kmeanspp(X, K, rng):
    n = X.shape[0]
    centers = [int(rng.integers(n))]
    d = _sq_dist(X, X[centers]).ravel()
    for _ in range(1, K):
        total = d.sum()
        if total <= 0:
            idx = int(rng.integers(n))
        else:
            idx = int(rng.choice(n, p=d / total))
        centers.append(idx)
        d = np.minimum(d, _sq_dist(X, X[[idx]]).ravel())
    return X[centers].copy()


def lloyd(X, K, rng, max_iters=100, trace=None):
    """One k-means run from k-means++ seeding; returns (labels, wcss)."""
    C = _kmeanspp(X, K, rng)
    labels = None
    for _ in range(max_iters):
        D = _sq_dist(X, C)
        new = np.argmin(D, axis=1)
        wcss = float(D[np.arange(X.shape[0]), new].sum())
        if trace is not None:
            trace.append(wcss)
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        for a in range(K):
            members = labels == a
            if members.any():
                C[a] = X[members].mean(axis=0)
            else:
                # re-seed from the point farthest from its center
                far = int(np.argmax(D[np.arange(X.shape[0]), labels]))
                C[a] = X[far]
                labels[far] = a
                D[far] = 0.0
    D = _sq_dist(X, C)
    labels = np.argmin(D, axis=1)
    return labels, float(D[np.arange(X.shape[0]), labels].sum())


def kmeans_points(X, K: int, seed: int, max_iters: int = 100, restarts: int = KMEANS_RESTARTS) -> Partition:
    X = np.asarray(X, dtype=float)
    if K > X.shape[0]:
        raise ValueError(f"K={K} exceeds the number of points {X.shape[0]}")
    if K < 1:
        raise ValueError("K must be at least 1")
    if K == 1:
        return Partition(np.zeros(X.shape[0], dtype=np.int64), 1)
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(restarts):
        labels, wcss = lloyd(X, K, rng, max_iters)
        if best is None or wcss < best[1]:
            best = (labels, wcss)
    return Partition(best[0], K)


def kmeans_rows(A: WeightedDigraph, K: int, seed: int = 0, max_iters: int = 100) -> Partition:
    """k-means on the raw rows of the weight matrix."""
    return kmeans_points(A.weights.astype(float), K, seed, max_iters)


def spectral_partition(A: WeightedDigraph, K: int, seed: int = 0) -> Partition:
    """k-means on the concatenated top-K left and right singular vectors."""
    if K > A.n:
        raise ValueError(f"K={K} exceeds n={A.n}")
    if K == 1:
        return Partition(np.zeros(A.n, dtype=np.int64), 1)
    try:
        U, s, Vt = np.linalg.svd(A.weights.astype(float))
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"SVD failed for {A.n}x{A.n} weight matrix: {exc}") from exc
    X = np.hstack([U[:, :K], Vt[:K].T])
    return kmeans_points(X, K, seed)
