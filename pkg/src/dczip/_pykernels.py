"""NumPy implementations of the O(n^2 K^2) kernels.

Reference fallback for the compiled ``_ckernels`` module; both expose the
same three functions with identical semantics.  Work is streamed one block
pair ``(a, b)`` at a time so only ``n x n`` temporaries are alive.
"""
import numpy as np
from scipy.special import gammaln

RATE_FLOOR = 1e-12


def _block_rate(Lam_ab, mu, nu):
    return np.maximum(Lam_ab * np.outer(mu, nu), RATE_FLOOR)


def _block_alpha(zero, p, rate):
    if p <= 0.0:
        return np.zeros_like(rate)
    e = (1.0 - p) * np.exp(-rate)
    return np.where(zero, p / (p + e), 0.0)


def pair_logpmf_matrix(A, P, Lam, mu, nu):
    """Return ``M`` of shape ``(n*K, n*K)`` with
    ``M[i*K + a, j*K + b] = log f_ab(A[i, j])`` and zero for ``i == j``."""
    A = np.asarray(A)
    n = A.shape[0]
    K = P.shape[0]
    Af = A.astype(float)
    zero = A == 0
    lgam = gammaln(Af + 1.0)
    M = np.zeros((n, K, n, K))
    for a in range(K):
        for b in range(K):
            p = P[a, b]
            rate = _block_rate(Lam[a, b], mu, nu)
            with np.errstate(divide="ignore"):
                log1mp = np.log1p(-p)
                if p > 0.0:
                    zval = np.logaddexp(np.log(p), log1mp - rate)
                else:
                    zval = -rate
            pos = log1mp + Af * np.log(rate) - rate - lgam
            block = np.where(zero, zval, pos)
            np.fill_diagonal(block, 0.0)
            M[:, a, :, b] = block
    return M.reshape(n * K, n * K)


def _alpha_blocks(A, P, Lam, mu, nu):
    """Yield ``(a, b, alpha)`` for every block pair, reusing ``alpha`` for
    ``(b, a)`` when the block matrices are symmetric."""
    n = A.shape[0]
    K = P.shape[0]
    zero = A == 0
    off = 1.0 - np.eye(n)
    sym = np.array_equal(P, P.T) and np.array_equal(Lam, Lam.T)
    for a in range(K):
        for b in range(a if sym else 0, K):
            alpha = _block_alpha(zero, P[a, b], _block_rate(Lam[a, b], mu, nu)) * off
            yield a, b, alpha
            if sym and b != a:
                yield b, a, alpha


def alpha_out_pass(A, tau, P, Lam, mu, nu):
    """Per-sender sums over the zero-origin responsibilities.

    Returns ``q, g`` of shape ``(n, K, K)`` with
    ``q[i, a, b] = sum_{j != i} tau[j, b] alpha_ij^ab`` and
    ``g[i, a, b] = sum_{j != i} tau[j, b] nu[j] (1 - alpha_ij^ab)``.
    """
    A = np.asarray(A)
    n = A.shape[0]
    K = P.shape[0]
    off = 1.0 - np.eye(n)
    q = np.empty((n, K, K))
    g = np.empty((n, K, K))
    for a, b, alpha in _alpha_blocks(A, P, Lam, mu, nu):
        q[:, a, b] = alpha @ tau[:, b]
        g[:, a, b] = (off - alpha) @ (tau[:, b] * nu)
    return q, g


def alpha_in_pass(A, tau, P, Lam, mu, nu, mu_new):
    """Per-receiver sums ``h[j, a, b] = sum_{i != j} tau[i, a] mu_new[i] (1 - alpha_ij^ab)``,
    with ``alpha`` evaluated at ``(P, Lam, mu, nu)``."""
    A = np.asarray(A)
    n = A.shape[0]
    K = P.shape[0]
    off = 1.0 - np.eye(n)
    h = np.empty((n, K, K))
    for a, b, alpha in _alpha_blocks(A, P, Lam, mu, nu):
        h[:, a, b] = (off - alpha).T @ (tau[:, a] * mu_new)
    return h
