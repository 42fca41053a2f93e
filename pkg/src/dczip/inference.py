"""Variational EM for the degree-corrected ZIP block model.

The E-step is a mean-field fixed point on the responsibilities ``tau``; the
M-step updates ``pi`` in closed form and runs ECM sweeps over ``P``,
``Lambda``, ``mu`` and ``nu`` with a latent zero-origin indicator.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
from scipy.special import logsumexp, xlogy

from dczip import kernels
from dczip.errors import NumericalError
from dczip.model import (
    LOG_ZERO,
    P_MAX,
    RATE_FLOOR,
    SPARSITY_MODES,
    BlockParams,
    Partition,
    WeightedDigraph,
)

#: Minimum responsibility kept in every entry of ``tau``.
TAU_FLOOR = 1e-10

# Denominators below this leave the previous value in place.
_EMPTY = 1e-12


@dataclass
class FitOptions:
    max_outer_iters: int = 100
    elbo_tol: float = 1e-6
    # optional stopping tolerance relative to |ELBO|; 0 disables it
    elbo_rtol: float = 0.0
    estep_max_iters: int = 100
    estep_tol: float = 1e-8
    ecm_max_iters: int = 50
    ecm_tol: float = 1e-6
    symmetric_blocks: bool = True
    sparsity_mode: str = "local"
    degree_corrected: bool = True
    seed: int = 0
    # Include the incoming-pair terms in the E-step field; False uses only
    # the sender-side sum.
    estep_both_directions: bool = True

    def __post_init__(self):
        for name in ("max_outer_iters", "estep_max_iters", "ecm_max_iters"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be at least 1")
        for name in ("elbo_tol", "estep_tol", "ecm_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.elbo_rtol < 0:
            raise ValueError("elbo_rtol must be non-negative")
        if self.sparsity_mode not in SPARSITY_MODES:
            raise ValueError(f"sparsity_mode must be one of {SPARSITY_MODES}")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class FitResult:
    params: BlockParams
    tau: np.ndarray
    partition: Partition
    elbo_trace: list
    converged: bool
    outer_iters: int
    warnings: list = field(default_factory=list)
    elbo_init: float = math.nan
    # smallest ELBO change produced by an M-step at fixed tau
    min_mstep_gain: float = math.inf

    @property
    def elbo(self) -> float:
        """ELBO of the returned iterate (the best seen, start included)."""
        values = [v for v in [self.elbo_init, *self.elbo_trace] if not math.isnan(v)]
        return max(values)


def _warn(log: Optional[list], msg: str) -> None:
    if log is not None and msg not in log:
        log.append(msg)


def compute_alpha(a_ij: int, p: float, rate: float) -> float:
    """Posterior probability that an observed count came from the structural zero."""
    if a_ij > 0 or p <= 0.0:
        return 0.0
    rate = max(rate, RATE_FLOOR)
    return p / (p + (1.0 - p) * math.exp(-rate))


def floor_tau(tau: np.ndarray) -> np.ndarray:
    """Renormalize rows and lift every entry to at least ``TAU_FLOOR``."""
    tau = np.asarray(tau, dtype=float)
    K = tau.shape[1]
    tau = tau / tau.sum(axis=1, keepdims=True)
    if K == 1:
        return np.ones_like(tau)
    return TAU_FLOOR + (1.0 - K * TAU_FLOOR) * tau


def tau_from_partition(init: Partition, K: int) -> np.ndarray:
    if init.labels.size and init.labels.max() >= K:
        raise ValueError(f"partition label {init.labels.max() + 1} exceeds K={K}")
    return floor_tau(Partition(init.labels, K).one_hot())


def hard_assign(tau: np.ndarray) -> Partition:
    """Most probable community per node; ties go to the lowest index."""
    tau = np.asarray(tau)
    return Partition(np.argmax(tau, axis=1), tau.shape[1])


def update_pi(tau: np.ndarray) -> np.ndarray:
    pi = np.asarray(tau, dtype=float).mean(axis=0)
    return pi / pi.sum()


def _logpmf_matrix(A: WeightedDigraph, params: BlockParams) -> np.ndarray:
    return kernels.pair_logpmf_matrix(A.weights, params.P, params.Lambda, params.mu, params.nu)


def _elbo_from_matrix(M: np.ndarray, tau: np.ndarray, pi: np.ndarray) -> float:
    t = tau.ravel()
    with np.errstate(invalid="ignore"):
        first = float(t @ (M @ t))
    if math.isnan(first):
        # exact zeros in tau against -inf entries: 0 * log 0 := 0
        keep = t > 0
        first = float(t[keep] @ (M[np.ix_(keep, keep)] @ t[keep]))
    prior = float(xlogy(tau, pi[None, :]).sum())
    entropy = -float(xlogy(tau, tau).sum())
    total = first + prior + entropy
    if math.isnan(total):
        raise NumericalError("ELBO evaluated to NaN")
    return total if total > -math.inf else LOG_ZERO


def elbo(A: WeightedDigraph, tau: np.ndarray, params: BlockParams) -> float:
    """Evidence lower bound of the factorized distribution ``tau``."""
    tau = np.asarray(tau, dtype=float)
    if tau.shape != (A.n, params.K) or params.n != A.n:
        raise ValueError("dimension mismatch between graph, tau and params")
    return _elbo_from_matrix(_logpmf_matrix(A, params), tau, params.pi)


def _fixed_point(F, tau, logpi, opts: FitOptions, damping: float):
    n, K = tau.shape
    for it in range(opts.estep_max_iters):
        logits = (F @ tau.ravel()).reshape(n, K) + logpi
        logits -= logsumexp(logits, axis=1, keepdims=True)
        if damping < 1.0:
            logits = damping * logits + (1.0 - damping) * np.log(tau)
        new = floor_tau(np.exp(logits - logits.max(axis=1, keepdims=True)))
        delta = float(np.max(np.abs(new - tau)))
        tau = new
        if delta < opts.estep_tol:
            return tau, True
    return tau, False


def _run_estep(M, tau, params: BlockParams, opts: FitOptions, log, elbo_before=None):
    """Fixed-point E-step with one damped retry if the ELBO drops."""
    if params.K == 1:
        tau = np.ones_like(tau)
        return tau, _elbo_from_matrix(M, tau, params.pi)
    with np.errstate(divide="ignore"):
        logpi = np.log(params.pi)
    F = M + M.T if opts.estep_both_directions else M
    new, ok = _fixed_point(F, tau, logpi, opts, 1.0)
    value = _elbo_from_matrix(M, new, params.pi)
    if not ok:
        _warn(log, f"E-step did not converge within {opts.estep_max_iters} iterations")
    if elbo_before is not None and value < elbo_before - 1e-6:
        _warn(log, "E-step decreased the ELBO; retried with damping 0.5")
        damped, ok = _fixed_point(F, tau, logpi, opts, 0.5)
        damped_value = _elbo_from_matrix(M, damped, params.pi)
        if damped_value > value:
            new, value = damped, damped_value
        if value < elbo_before:
            new, value = tau, elbo_before
    return new, value


def e_step(A: WeightedDigraph, tau, params: BlockParams, opts: Optional[FitOptions] = None,
           log: Optional[list] = None) -> np.ndarray:
    """Mean-field update of the responsibilities at fixed parameters."""
    opts = opts or FitOptions()
    tau = floor_tau(tau)
    M = _logpmf_matrix(A, params)
    before = _elbo_from_matrix(M, tau, params.pi)
    return _run_estep(M, tau, params, opts, log, before)[0]


def _pool(x: np.ndarray, symmetric: bool) -> np.ndarray:
    return x + x.T if symmetric else x


def _rel_change(new, old) -> float:
    scale = max(float(np.max(np.abs(old))), 1e-12)
    return float(np.max(np.abs(new - old))) / scale


def _pair_mass(tau: np.ndarray) -> np.ndarray:
    """``sum_{i != j} tau[i, a] tau[j, b]`` for every block pair."""
    s = tau.sum(axis=0)
    return np.outer(s, s) - tau.T @ tau


def ecm_m_step(A: WeightedDigraph, tau, params_in: BlockParams, opts: Optional[FitOptions] = None,
               log: Optional[list] = None, on_sweep=None) -> BlockParams:
    """Conditional-maximization sweeps over (P, Lambda, mu, nu) at fixed ``tau``.

    ``on_sweep``, if given, is called after each sweep with a dict holding the
    responsibilities' sufficient statistics; used by the diagnostics tests.
    """
    opts = opts or FitOptions()
    tau = np.asarray(tau, dtype=float)
    W = A.weights
    n, K = tau.shape
    if params_in.K != K or params_in.n != n:
        raise ValueError("params do not match tau")
    dc = opts.degree_corrected
    sym = opts.symmetric_blocks
    glob = opts.sparsity_mode == "global"

    pairs = _pair_mass(tau)
    num = tau.T @ W @ tau
    s_out = W.sum(axis=1).astype(float)
    s_in = W.sum(axis=0).astype(float)
    pairs_p = _pool(pairs, sym)
    num_p = _pool(num, sym)

    P = np.minimum(params_in.P, P_MAX)
    Lam = np.maximum(params_in.Lambda, RATE_FLOOR)
    if dc:
        mu, nu = params_in.mu.copy(), params_in.nu.copy()
    else:
        mu, nu = np.ones(n), np.ones(n)

    for sweep in range(opts.ecm_max_iters):
        q, g = kernels.alpha_out_pass(W, tau, P, Lam, mu, nu)
        alpha_mass = np.einsum("ia,iab->ab", tau, q)
        lam_den = np.einsum("ia,iab->ab", tau * mu[:, None], g)

        if glob:
            total = pairs.sum()
            P_new = np.full((K, K), alpha_mass.sum() / total if total >= _EMPTY else P[0, 0])
        else:
            a_p = _pool(alpha_mass, sym)
            empty = pairs_p < _EMPTY
            P_new = np.where(empty, P, a_p / np.where(empty, 1.0, pairs_p))
        P_new = np.clip(P_new, 0.0, P_MAX)

        d_p = _pool(lam_den, sym)
        empty = d_p < _EMPTY
        if np.any(empty):
            _warn(log, "empty block pair: rate estimate kept from previous iteration")
        Lam_new = np.where(empty, Lam, num_p / np.where(empty, 1.0, d_p))
        Lam_new = np.maximum(Lam_new, RATE_FLOOR)

        mu_new, nu_new = mu, nu
        if dc:
            den_mu = np.einsum("ia,ab,iab->i", tau, Lam_new, g)
            mu_new = np.where(den_mu >= _EMPTY, s_out / np.where(den_mu >= _EMPTY, den_mu, 1.0), mu)
            h = kernels.alpha_in_pass(W, tau, P, Lam, mu, nu, mu_new)
            den_nu = np.einsum("jb,ab,jab->j", tau, Lam_new, h)
            nu_new = np.where(den_nu >= _EMPTY, s_in / np.where(den_nu >= _EMPTY, den_nu, 1.0), nu)
            if on_sweep is not None:
                on_sweep(dict(P_old=P, Lam_old=Lam, mu_old=mu, nu_old=nu, Lam=Lam_new,
                              mu=mu_new, nu=nu_new, den_mu=den_mu, den_nu=den_nu))
            cm, cn = mu_new.mean(), nu_new.mean()
            if cm > 0 and cn > 0:
                mu_new = mu_new / cm
                nu_new = nu_new / cn
                Lam_new = np.maximum(Lam_new * (cm * cn), RATE_FLOOR)

        change = max(_rel_change(P_new, P), _rel_change(Lam_new, Lam),
                     _rel_change(mu_new, mu), _rel_change(nu_new, nu))
        P, Lam, mu, nu = P_new, Lam_new, mu_new, nu_new
        if change < opts.ecm_tol:
            break

    return BlockParams(update_pi(tau), P, Lam, mu, nu, opts.sparsity_mode, dc)


def bootstrap_params(A: WeightedDigraph, tau, opts: FitOptions) -> BlockParams:
    """Moment-matching start for (P, Lambda) with unit strength corrections."""
    tau = np.asarray(tau, dtype=float)
    W = A.weights
    n, K = tau.shape
    sym = opts.symmetric_blocks
    pos = (W > 0).astype(float)
    pairs = _pool(_pair_mass(tau), sym)
    n_pos = _pool(tau.T @ pos @ tau, sym)
    w_sum = _pool(tau.T @ W @ tau, sym)
    if opts.sparsity_mode == "global":
        pairs, n_pos, w_sum = (np.full((K, K), x.sum()) for x in (pairs, n_pos, w_sum))
    Lam = np.where(n_pos > 0, w_sum / np.where(n_pos > 0, n_pos, 1.0), 1.0)
    zero_frac = np.where(pairs > 0, 1.0 - n_pos / np.where(pairs > 0, pairs, 1.0), 0.0)
    e = np.exp(-Lam)
    P = np.clip((zero_frac - e) / (1.0 - e), 0.0, P_MAX)
    return BlockParams(update_pi(tau), P, np.maximum(Lam, RATE_FLOOR), np.ones(n), np.ones(n),
                       opts.sparsity_mode, opts.degree_corrected)


def fit_vem(A: WeightedDigraph, K: int, init: Partition, opts: Optional[FitOptions] = None) -> FitResult:
    """Fit the block model by variational EM from an initial partition.

    Returns the iterate with the highest ELBO seen, including the start.
    """
    opts = opts or FitOptions()
    if K < 1:
        raise ValueError("K must be at least 1")
    if init.n != A.n:
        raise ValueError(f"initial partition has {init.n} nodes, graph has {A.n}")
    if init.K > K:
        raise ValueError(f"initial partition has K={init.K} > {K}")
    log: list = []
    tau = tau_from_partition(init, K)
    params = bootstrap_params(A, tau, opts)
    params = ecm_m_step(A, tau, params, opts, log)
    M = _logpmf_matrix(A, params)
    current = _elbo_from_matrix(M, tau, params.pi)
    elbo_init = current
    best = (current, tau, params)
    trace = []
    min_gain = math.inf
    converged = False
    prev = current
    t = 0
    for t in range(1, opts.max_outer_iters + 1):
        tau, e_value = _run_estep(M, tau, params, opts, log, current)
        params = ecm_m_step(A, tau, params, opts, log)
        M = _logpmf_matrix(A, params)
        current = _elbo_from_matrix(M, tau, params.pi)
        min_gain = min(min_gain, current - e_value)
        trace.append(current)
        if current > best[0]:
            best = (current, tau, params)
        mass = tau.sum(axis=0) - A.n * TAU_FLOOR
        for a in np.flatnonzero(mass < 1e-8):
            _warn(log, f"community {a + 1} is empty")
        if abs(current - prev) < max(opts.elbo_tol, opts.elbo_rtol * abs(current)):
            converged = True
            break
        prev = current
    if not converged:
        _warn(log, f"VEM did not converge within {opts.max_outer_iters} outer iterations")
    _, tau_best, params_best = best
    return FitResult(params_best, tau_best, hard_assign(tau_best), trace, converged, t, log,
                     elbo_init, min_gain)
