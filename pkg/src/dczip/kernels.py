"""Kernel backend selection.

The compiled module is used when importable; set ``DCZIP_BACKEND=python``
to force the NumPy fallback.
"""
import os

import numpy as np

from dczip import _pykernels

try:
    from dczip import _ckernels
except ImportError:  # extension not built
    _ckernels = None

_BACKENDS = {"python": _pykernels}
if _ckernels is not None:
    _BACKENDS["cython"] = _ckernels


def available_backends() -> list[str]:
    return sorted(_BACKENDS)


def _default() -> str:
    requested = os.environ.get("DCZIP_BACKEND", "").strip().lower()
    if requested:
        if requested not in _BACKENDS:
            raise ImportError(f"DCZIP_BACKEND={requested!r} is not available; have {available_backends()}")
        return requested
    return "cython" if "cython" in _BACKENDS else "python"


BACKEND = _default()
_impl = _BACKENDS[BACKEND]


def set_backend(name: str) -> None:
    """Switch the active backend for subsequent kernel calls."""
    global BACKEND, _impl
    if name not in _BACKENDS:
        raise ValueError(f"unknown backend {name!r}; have {available_backends()}")
    BACKEND = name
    _impl = _BACKENDS[name]


def _prep(A, *arrays):
    out = [np.ascontiguousarray(A, dtype=np.int64)]
    out += [np.ascontiguousarray(x, dtype=np.float64) for x in arrays]
    return out


def pair_logpmf_matrix(A, P, Lam, mu, nu):
    return _impl.pair_logpmf_matrix(*_prep(A, P, Lam, mu, nu))


def alpha_out_pass(A, tau, P, Lam, mu, nu):
    return _impl.alpha_out_pass(*_prep(A, tau, P, Lam, mu, nu))


def alpha_in_pass(A, tau, P, Lam, mu, nu, mu_new):
    return _impl.alpha_in_pass(*_prep(A, tau, P, Lam, mu, nu, mu_new))
