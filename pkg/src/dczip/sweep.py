"""Simulation sweeps comparing community detection methods on sampled networks.

A sweep crosses within-community rate gaps with sparsity levels, samples
``replications`` networks per cell and scores every method by NMI against
the planted partition.
"""
from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from itertools import product
from pathlib import Path
from typing import Optional

import numpy as np

from dczip.errors import DataError
from dczip.inference import FitOptions
from dczip.init_eval import kmeans_rows, nmi, spectral_partition
from dczip.model import BlockParams, Partition, _stream, sample_edges, sample_partition
from dczip.selection import INIT_STRATEGIES, best_fit, select_k

METHODS = ("dczip", "zip", "spectral", "kmeans")

#: Fit settings used by sweeps unless the config overrides them.
SWEEP_FIT_DEFAULTS = {"elbo_rtol": 1e-7, "ecm_max_iters": 5}

RECORD_FIELDS = (
    "cell", "n", "pi", "lambda_in", "lambda_out", "p_in", "p_out", "hub_fraction",
    "hub_factor", "method", "rep", "seed", "nmi", "selected_k", "elbo_gain",
    "min_mstep_gain", "status",
)
AXES = RECORD_FIELDS[:9]
SUMMARY_FIELDS = AXES + ("method", "reps", "ok", "nmi_mean", "nmi_sd",
                         "selected_k_mean", "selected_k_sd")


@dataclass
class SweepConfig:
    """Grid, replication and method settings for a simulation sweep.

    Cells are the product of ``lambda_gaps`` with ``p_global`` (when given,
    every block shares that zero probability) or the single ``(p_in, p_out)``
    pair.
    """

    n: int = 100
    pi: list = field(default_factory=lambda: [0.5, 0.5])
    lambda_out: float = 5.0
    lambda_gaps: list = field(default_factory=lambda: [0, 1, 2, 3, 4, 5])
    p_in: float = 0.5
    p_out: float = 0.7
    p_global: Optional[list] = None
    hub_fraction: float = 0.0
    hub_factor: float = 8.0
    methods: list = field(default_factory=lambda: list(METHODS))
    replications: int = 20
    seed_base: int = 0
    select_k: Optional[list] = None
    restarts: int = 1
    init: str = "portfolio"
    fit: dict = field(default_factory=dict)

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.n < 2:
            raise DataError("n must be at least 2")
        pi = np.asarray(self.pi, dtype=float)
        if pi.ndim != 1 or pi.size < 1 or np.any(pi < 0) or abs(pi.sum() - 1.0) > 1e-9:
            raise DataError("pi must be a probability vector")
        if self.lambda_out < 0 or any(self.lambda_out + g < 0 for g in self.lambda_gaps):
            raise DataError("rates must be non-negative")
        if not self.lambda_gaps:
            raise DataError("lambda_gaps must not be empty")
        ps = [self.p_in, self.p_out] + list(self.p_global or [])
        if any(not 0.0 <= p <= 1.0 for p in ps):
            raise DataError("zero probabilities must lie in [0, 1]")
        if self.p_global is not None and not self.p_global:
            raise DataError("p_global must not be empty")
        if not 0.0 <= self.hub_fraction <= 1.0 or self.hub_factor <= 0:
            raise DataError("need 0 <= hub_fraction <= 1 and hub_factor > 0")
        bad = [m for m in self.methods if m not in METHODS]
        if bad or not self.methods:
            raise DataError(f"methods must be a non-empty subset of {METHODS}, got {bad}")
        if self.replications < 1:
            raise DataError("replications must be at least 1")
        if self.restarts < 1:
            raise DataError("restarts must be at least 1")
        if self.init not in INIT_STRATEGIES:
            raise DataError(f"init must be one of {INIT_STRATEGIES}")
        if self.select_k is not None:
            if len(self.select_k) != 2 or not 1 <= self.select_k[0] <= self.select_k[1]:
                raise DataError("select_k must be [k_min, k_max] with 1 <= k_min <= k_max")
        try:
            self.fit_options(True)
        except (TypeError, ValueError) as exc:
            raise DataError(f"bad fit options: {exc}") from None

    @property
    def K(self) -> int:
        return len(self.pi)

    def fit_options(self, degree_corrected: bool) -> FitOptions:
        known = {f.name for f in fields(FitOptions)}
        unknown = set(self.fit) - known
        if unknown:
            raise TypeError(f"unknown fit options {sorted(unknown)}")
        kw = {**SWEEP_FIT_DEFAULTS, **self.fit, "degree_corrected": degree_corrected}
        return FitOptions(**kw)

    def cells(self) -> list[dict]:
        """Grid points in deterministic order (gap-major)."""
        ps = [(p, p) for p in self.p_global] if self.p_global is not None else [(self.p_in, self.p_out)]
        return [
            {"lambda_in": self.lambda_out + gap, "lambda_out": self.lambda_out,
             "p_in": p_in, "p_out": p_out}
            for gap, (p_in, p_out) in product(self.lambda_gaps, ps)
        ]

    @classmethod
    def from_dict(cls, d: dict) -> "SweepConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise DataError(f"unknown sweep config keys {sorted(unknown)}")
        try:
            return cls(**d)
        except TypeError as exc:
            raise DataError(str(exc)) from None

    @classmethod
    def load(cls, path) -> "SweepConfig":
        try:
            with open(path, encoding="utf-8") as fh:
                d = json.load(fh)
        except OSError as exc:
            raise DataError(f"cannot read {path}: {exc.strerror}") from exc
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}:{exc.lineno}: invalid JSON ({exc.msg})") from None
        if not isinstance(d, dict):
            raise DataError(f"{path}: expected a JSON object")
        return cls.from_dict(d)

    def to_dict(self) -> dict:
        return asdict(self)


def cell_params(config: SweepConfig, cell: dict, Z: Partition, seed: int) -> BlockParams:
    """Generating parameters for one network, hubs included.

    In community 1 a ``hub_fraction`` share of nodes get out-correction
    ``hub_factor``; in community 2 the same share gets in-correction.
    """
    K, n = config.K, config.n
    Lam = np.full((K, K), float(cell["lambda_out"]))
    np.fill_diagonal(Lam, cell["lambda_in"])
    P = np.full((K, K), float(cell["p_out"]))
    np.fill_diagonal(P, cell["p_in"])
    mu = np.ones(n)
    nu = np.ones(n)
    if config.hub_fraction > 0:
        rng = _stream(seed, 2)
        for a, target in ((0, mu), (1, nu)):
            if a >= K:
                break
            members = np.flatnonzero(Z.labels == a)
            m = int(round(config.hub_fraction * members.size))
            if m:
                target[rng.choice(members, size=m, replace=False)] = config.hub_factor
    dc = bool(np.any(mu != 1) or np.any(nu != 1))
    return BlockParams(np.asarray(config.pi, dtype=float), P, Lam, mu, nu, "local", dc)


def _vem(A, Z, config: SweepConfig, dc: bool, seed: int) -> dict:
    opts = replace(config.fit_options(dc), seed=seed)
    seeds = list(range(config.restarts))
    audit: list = []
    if config.select_k is not None:
        k_min, k_max = config.select_k
        table = select_k(A, k_min, min(k_max, A.n), opts, seeds, config.init, audit)
        part = table.row(table.k_hat).partition
        selected = table.k_hat
    else:
        part = best_fit(A, config.K, opts, seeds, config.init, audit).partition
        selected = math.nan
    gain = min(f.elbo - f.elbo_init for f in audit)
    mstep = min(f.min_mstep_gain for f in audit)
    return {"nmi": nmi(Z, part), "selected_k": selected, "elbo_gain": gain, "min_mstep_gain": mstep}


def run_method(method: str, A, Z: Partition, config: SweepConfig, seed: int) -> dict:
    if method in ("dczip", "zip"):
        return _vem(A, Z, config, method == "dczip", seed)
    if method == "spectral":
        part = spectral_partition(A, config.K, seed)
    elif method == "kmeans":
        part = kmeans_rows(A, config.K, seed)
    else:
        raise ValueError(f"unknown method {method!r}")
    return {"nmi": nmi(Z, part)}


def _axes(config: SweepConfig, index: int, cell: dict) -> dict:
    return {
        "cell": index, "n": config.n, "pi": " ".join(repr(float(x)) for x in config.pi),
        "lambda_in": cell["lambda_in"], "lambda_out": cell["lambda_out"],
        "p_in": cell["p_in"], "p_out": cell["p_out"],
        "hub_fraction": config.hub_fraction, "hub_factor": config.hub_factor,
    }


def run_replicate(config: SweepConfig, index: int, rep: int) -> list[dict]:
    """Sample one network for a cell and score every method on it."""
    cell = config.cells()[index]
    seed = config.seed_base + index * config.replications + rep
    base = _axes(config, index, cell)
    try:
        Z = sample_partition(config.pi, config.n, seed)
        A = sample_edges(cell_params(config, cell, Z, seed), Z, seed)
    except Exception as exc:  # noqa: BLE001 - recorded, never fatal
        return [{**base, "method": m, "rep": rep, "seed": seed, "status": type(exc).__name__}
                for m in config.methods]
    out = []
    for method in config.methods:
        row = {**base, "method": method, "rep": rep, "seed": seed, "status": "ok"}
        try:
            row.update(run_method(method, A, Z, config, seed))
        except Exception as exc:  # noqa: BLE001
            row["status"] = type(exc).__name__
        out.append(row)
    return out


def _task(args):
    config_dict, index, rep = args
    return run_replicate(SweepConfig(**config_dict), index, rep)


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return "" if math.isnan(value) else repr(float(value))
    return str(value)


def _write_csv(path, header, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_cell(row.get(k)) for k in header) + "\n")


def summarize(records: list[dict], config: SweepConfig) -> list[dict]:
    """Per cell and method: mean and sample standard deviation of NMI and selected k."""
    groups: dict = {}
    for r in records:
        groups.setdefault((r["cell"], r["method"]), []).append(r)
    out = []
    for index, cell in enumerate(config.cells()):
        for method in config.methods:
            rows = groups.get((index, method), [])
            ok = [r for r in rows if r.get("status") == "ok"]
            row = {**_axes(config, index, cell), "method": method, "reps": len(rows), "ok": len(ok)}
            for key in ("nmi", "selected_k"):
                vals = np.array([r.get(key, math.nan) for r in ok], dtype=float)
                vals = vals[~np.isnan(vals)]
                row[f"{key}_mean"] = float(vals.mean()) if vals.size else math.nan
                row[f"{key}_sd"] = float(vals.std(ddof=1)) if vals.size > 1 else math.nan
            out.append(row)
    return out


def summary_path(out_path) -> Path:
    p = Path(out_path)
    return p.with_name(p.stem + "_summary" + (p.suffix or ".csv"))


def run_sweep(config: SweepConfig, out_path, workers: int = 1) -> list[dict]:
    """Run every cell and replication; write records and a summary table.

    The records file goes to ``out_path`` and the summary next to it with a
    ``_summary`` suffix.  Output order is the grid order regardless of
    ``workers``.
    """
    if workers < 1:
        raise ValueError("workers must be at least 1")
    tasks = [(index, rep) for index in range(len(config.cells()))
             for rep in range(config.replications)]
    if workers == 1:
        chunks = [run_replicate(config, i, r) for i, r in tasks]
    else:
        d = config.to_dict()
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(_task, [(d, i, r) for i, r in tasks]))
    records = [row for chunk in chunks for row in chunk]
    _write_csv(out_path, RECORD_FIELDS, records)
    _write_csv(summary_path(out_path), SUMMARY_FIELDS, summarize(records, config))
    return records
