# cython: language_level=3
"""Compiled kernels; see ``_pykernels`` for the reference semantics."""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, log1p, lgamma, INFINITY

cnp.import_array()

cdef double RATE_FLOOR = 1e-12


def pair_logpmf_matrix(const long long[:, ::1] A, const double[:, ::1] P,
                       const double[:, ::1] Lam, const double[::1] mu, const double[::1] nu):
    cdef Py_ssize_t n = A.shape[0], K = P.shape[0]
    cdef Py_ssize_t i, j, a, b
    cdef double[:, ::1] logp = np.empty((K, K))
    cdef double[:, ::1] log1mp = np.empty((K, K))
    cdef double[:, ::1] loglam = np.empty((K, K))
    cdef double p, m, r, lr, w, lg, lmu_i, lnu_j, u, v
    cdef long long aij
    out = np.zeros((n * K, n * K))
    cdef double[:, ::1] M = out
    cdef double[::1] lmu = np.empty(n)
    cdef double[::1] lnu = np.empty(n)

    for a in range(K):
        for b in range(K):
            p = P[a, b]
            logp[a, b] = log(p) if p > 0.0 else -INFINITY
            log1mp[a, b] = log1p(-p) if p < 1.0 else -INFINITY
            loglam[a, b] = log(Lam[a, b]) if Lam[a, b] > 0.0 else -INFINITY
    for i in range(n):
        lmu[i] = log(mu[i]) if mu[i] > 0.0 else -INFINITY
        lnu[i] = log(nu[i]) if nu[i] > 0.0 else -INFINITY

    with nogil:
        for i in range(n):
            for j in range(n):
                if i == j:
                    continue
                aij = A[i, j]
                m = mu[i] * nu[j]
                if aij == 0:
                    for a in range(K):
                        for b in range(K):
                            r = m * Lam[a, b]
                            if r < RATE_FLOOR:
                                r = RATE_FLOOR
                            p = P[a, b]
                            if p <= 0.0:
                                M[i * K + a, j * K + b] = -r
                            else:
                                # log(p + (1-p) e^-r) as a stable logaddexp
                                u = logp[a, b]
                                v = log1mp[a, b] - r
                                if u >= v:
                                    M[i * K + a, j * K + b] = u + log1p(exp(v - u))
                                else:
                                    M[i * K + a, j * K + b] = v + log1p(exp(u - v))
                else:
                    w = <double> aij
                    lg = lgamma(w + 1.0)
                    for a in range(K):
                        for b in range(K):
                            r = m * Lam[a, b]
                            if r < RATE_FLOOR:
                                r = RATE_FLOOR
                                lr = log(RATE_FLOOR)
                            else:
                                lr = lmu[i] + lnu[j] + loglam[a, b]
                            M[i * K + a, j * K + b] = log1mp[a, b] + w * lr - r - lg
    return out


cdef inline double _alpha(double p, double r) nogil:
    if p <= 0.0:
        return 0.0
    if r < RATE_FLOOR:
        r = RATE_FLOOR
    return p / (p + (1.0 - p) * exp(-r))


cdef inline void _fill_alpha(double* al, const double[:, ::1] P, const double[:, ::1] Lam,
                             double m, Py_ssize_t K, bint sym) nogil:
    cdef Py_ssize_t a, b
    for a in range(K):
        for b in range(K):
            if sym and b < a:
                al[a * K + b] = al[b * K + a]
            else:
                al[a * K + b] = _alpha(P[a, b], m * Lam[a, b])


def _is_symmetric(P, Lam):
    P = np.asarray(P)
    Lam = np.asarray(Lam)
    return bool(np.array_equal(P, P.T) and np.array_equal(Lam, Lam.T))


def alpha_out_pass(const long long[:, ::1] A, const double[:, ::1] tau, const double[:, ::1] P,
                   const double[:, ::1] Lam, const double[::1] mu, const double[::1] nu):
    cdef Py_ssize_t n = A.shape[0], K = P.shape[0]
    cdef Py_ssize_t i, j, a, b
    cdef double tb, tbn, al
    cdef bint sym = _is_symmetric(P, Lam)
    q_arr = np.zeros((n, K, K))
    g_arr = np.zeros((n, K, K))
    cdef double[:, :, ::1] q = q_arr
    cdef double[:, :, ::1] g = g_arr
    cdef double[::1] alb = np.empty(K * K)
    cdef double[::1] gpos = np.empty(K)
    cdef double* alp = &alb[0]

    with nogil:
        for i in range(n):
            for b in range(K):
                gpos[b] = 0.0
            for j in range(n):
                if i == j:
                    continue
                if A[i, j] == 0:
                    _fill_alpha(alp, P, Lam, mu[i] * nu[j], K, sym)
                    for a in range(K):
                        for b in range(K):
                            al = alp[a * K + b]
                            tb = tau[j, b]
                            q[i, a, b] += tb * al
                            g[i, a, b] += tb * nu[j] * (1.0 - al)
                else:
                    for b in range(K):
                        gpos[b] += tau[j, b] * nu[j]
            for a in range(K):
                for b in range(K):
                    g[i, a, b] += gpos[b]
    return q_arr, g_arr


def alpha_in_pass(const long long[:, ::1] A, const double[:, ::1] tau, const double[:, ::1] P,
                  const double[:, ::1] Lam, const double[::1] mu, const double[::1] nu,
                  const double[::1] mu_new):
    cdef Py_ssize_t n = A.shape[0], K = P.shape[0]
    cdef Py_ssize_t i, j, a, b
    cdef double w
    cdef bint sym = _is_symmetric(P, Lam)
    h_arr = np.zeros((n, K, K))
    cdef double[:, :, ::1] h = h_arr
    cdef double[::1] alb = np.empty(K * K)
    cdef double[::1] hpos = np.empty(K)
    cdef double* alp = &alb[0]

    with nogil:
        for j in range(n):
            for a in range(K):
                hpos[a] = 0.0
            for i in range(n):
                if i == j:
                    continue
                if A[i, j] == 0:
                    _fill_alpha(alp, P, Lam, mu[i] * nu[j], K, sym)
                    for a in range(K):
                        w = tau[i, a] * mu_new[i]
                        for b in range(K):
                            h[j, a, b] += w * (1.0 - alp[a * K + b])
                else:
                    for a in range(K):
                        hpos[a] += tau[i, a] * mu_new[i]
            for a in range(K):
                for b in range(K):
                    h[j, a, b] += hpos[a]
    return h_arr
