"""Edge lists, node lists, parameter documents, partitions and fit artifacts.

Every writer emits ``\\n`` line endings and locale-independent numbers so
outputs are byte-identical for identical inputs.
"""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from dczip.errors import DataError
from dczip.model import BlockParams, Partition, WeightedDigraph

EDGE_HEADER = ("src", "dst", "weight")
PARAMS_FORMAT = "dczip-params/1"


def fmt(x: float) -> str:
    """Decimal text that round-trips a float64 exactly."""
    x = float(x)
    if math.isnan(x):
        return ""
    return format(x, ".17g")


def _open_read(path):
    try:
        return open(path, "r", encoding="utf-8", newline="")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror}") from exc


def _open_write(path):
    try:
        return open(path, "w", encoding="utf-8", newline="\n")
    except OSError as exc:
        raise OSError(exc.errno, f"cannot write {path}: {exc.strerror}") from exc


def read_node_list(path) -> list[str]:
    """One node identifier per line; blank lines and ``#`` comments skipped."""
    nodes = []
    seen = set()
    with _open_read(path) as fh:
        for lineno, line in enumerate(fh, 1):
            node = line.strip()
            if not node or node.startswith("#"):
                continue
            if node in seen:
                raise DataError(f"{path}:{lineno}: duplicate node {node!r}")
            seen.add(node)
            nodes.append(node)
    return nodes


def write_node_list(nodes: Sequence[str], path) -> None:
    with _open_write(path) as fh:
        for node in nodes:
            fh.write(f"{node}\n")


def _parse_weight(text: str, where: str) -> int:
    try:
        w = int(text)
    except ValueError:
        raise DataError(f"{where}: weight {text!r} is not an integer") from None
    if w < 1:
        raise DataError(f"{where}: weight must be a positive integer, got {w}")
    return w


def read_edge_list(path, node_list=None) -> WeightedDigraph:
    """Read a ``src<TAB>dst<TAB>weight`` file into a dense graph.

    Node order follows ``node_list`` when given, otherwise first appearance.
    """
    nodes = read_node_list(node_list) if node_list is not None else None
    index = {v: i for i, v in enumerate(nodes)} if nodes is not None else {}
    order = list(nodes) if nodes is not None else []
    records = []
    seen = set()
    with _open_read(path) as fh:
        header = fh.readline()
        if header.rstrip("\r\n").split("\t") != list(EDGE_HEADER):
            raise DataError(f"{path}:1: expected header 'src<TAB>dst<TAB>weight'")
        for lineno, line in enumerate(fh, 2):
            line = line.rstrip("\r\n")
            if not line.strip():
                continue
            where = f"{path}:{lineno}"
            parts = line.split("\t")
            if len(parts) != 3:
                raise DataError(f"{where}: expected 3 tab-separated fields, got {len(parts)}")
            src, dst, wtext = (p.strip() for p in parts)
            if not src or not dst:
                raise DataError(f"{where}: empty node identifier")
            if src == dst:
                raise DataError(f"{where}: self-loop on {src!r}")
            if (src, dst) in seen:
                raise DataError(f"{where}: duplicate pair {src!r} -> {dst!r}")
            seen.add((src, dst))
            w = _parse_weight(wtext, where)
            for v in (src, dst):
                if v not in index:
                    if nodes is not None:
                        raise DataError(f"{where}: node {v!r} is not in {node_list}")
                    index[v] = len(order)
                    order.append(v)
            records.append((index[src], index[dst], w))
    n = len(order)
    if n == 0:
        raise DataError(f"{path}: no nodes")
    W = np.zeros((n, n), dtype=np.int64)
    for i, j, w in records:
        W[i, j] = w
    return WeightedDigraph(W, order)


def write_edge_list(A: WeightedDigraph, path, node_list=None) -> None:
    """Write positive entries in row-major order; optionally the node list too."""
    labels = A.labels()
    with _open_write(path) as fh:
        fh.write("\t".join(EDGE_HEADER) + "\n")
        rows, cols = np.nonzero(A.weights)
        for i, j in zip(rows, cols):
            fh.write(f"{labels[i]}\t{labels[j]}\t{int(A.weights[i, j])}\n")
    if node_list is not None:
        write_node_list(labels, node_list)


def _vec(x) -> str:
    return " ".join(fmt(v) for v in np.ravel(x))


def write_params(params: BlockParams, path) -> None:
    lines = [
        "# degree-corrected ZIP block model parameters",
        f"format = {PARAMS_FORMAT}",
        f"K = {params.K}",
        f"n = {params.n}",
        f"sparsity_mode = {params.sparsity_mode}",
        f"degree_corrected = {'true' if params.degree_corrected else 'false'}",
        f"pi = {_vec(params.pi)}",
    ]
    lines += [f"P.{a + 1} = {_vec(row)}" for a, row in enumerate(params.P)]
    lines += [f"Lambda.{a + 1} = {_vec(row)}" for a, row in enumerate(params.Lambda)]
    lines += [f"mu = {_vec(params.mu)}", f"nu = {_vec(params.nu)}"]
    with _open_write(path) as fh:
        fh.write("\n".join(lines) + "\n")


def _floats(text: str, where: str) -> np.ndarray:
    try:
        return np.array([float(t) for t in text.split()], dtype=float)
    except ValueError:
        raise DataError(f"{where}: expected numbers, got {text!r}") from None


def read_params(path, n: Optional[int] = None) -> BlockParams:
    """Read a parameter document.

    ``mu``/``nu`` may be omitted, in which case ``n`` (argument or ``n`` key)
    sets their length and they default to one.
    """
    kv = {}
    with _open_read(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise DataError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (s.strip() for s in line.split("=", 1))
            kv[key] = (value, f"{path}:{lineno}")
    if "pi" not in kv or "K" not in kv:
        raise DataError(f"{path}: missing 'K' or 'pi'")
    K = int(kv["K"][0])
    pi = _floats(*kv["pi"])
    try:
        P = np.vstack([_floats(*kv[f"P.{a + 1}"]) for a in range(K)])
        Lam = np.vstack([_floats(*kv[f"Lambda.{a + 1}"]) for a in range(K)])
    except KeyError as exc:
        raise DataError(f"{path}: missing row {exc.args[0]}") from None
    if n is None and "n" in kv:
        n = int(kv["n"][0])
    mu = _floats(*kv["mu"]) if "mu" in kv else None
    nu = _floats(*kv["nu"]) if "nu" in kv else None
    if mu is None or nu is None:
        if n is None:
            raise DataError(f"{path}: give 'n' or both 'mu' and 'nu'")
        mu = np.ones(n) if mu is None else mu
        nu = np.ones(n) if nu is None else nu
    if n is not None and (mu.size != n or nu.size != n):
        raise DataError(f"{path}: mu/nu have length {mu.size}/{nu.size}, expected {n}")
    mode = kv.get("sparsity_mode", ("local",))[0]
    if "degree_corrected" in kv:
        dc = kv["degree_corrected"][0].lower() in ("true", "1", "yes")
    else:
        dc = not (np.all(mu == 1) and np.all(nu == 1))
    try:
        return BlockParams(pi, P, Lam, mu, nu, mode, dc)
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from None


def write_partition(Z: Partition, path, node_labels: Optional[Sequence[str]] = None) -> None:
    labels = list(node_labels) if node_labels is not None else [str(i + 1) for i in range(Z.n)]
    with _open_write(path) as fh:
        fh.write("node,label\n")
        for node, lab in zip(labels, Z.labels):
            fh.write(f"{node},{int(lab) + 1}\n")


def read_partition(path) -> tuple[list[str], Partition]:
    """Read a ``node,label[,...]`` CSV with 1-based labels."""
    nodes, labels = [], []
    with _open_read(path) as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        if len(header) < 2 or header[0] != "node" or header[1] != "label":
            raise DataError(f"{path}:1: expected header starting 'node,label'")
        for lineno, row in enumerate(reader, 2):
            if not row:
                continue
            try:
                lab = int(row[1])
            except (IndexError, ValueError):
                raise DataError(f"{path}:{lineno}: bad label") from None
            if lab < 1:
                raise DataError(f"{path}:{lineno}: labels are 1-based")
            nodes.append(row[0])
            labels.append(lab - 1)
    if len(set(nodes)) != len(nodes):
        raise DataError(f"{path}: duplicate node ids")
    if not labels:
        raise DataError(f"{path}: no records")
    return nodes, Partition(np.array(labels), max(labels) + 1)


def write_fit(fit, out_dir, A: Optional[WeightedDigraph] = None, options=None,
              version: Optional[str] = None) -> dict:
    """Persist membership, parameters, ELBO trace and run metadata."""
    from dczip import __version__, kernels

    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(exc.errno, f"cannot create {out}: {exc.strerror}") from exc
    paths = {
        "membership": out / "membership.csv",
        "params": out / "params.txt",
        "trace": out / "elbo_trace.csv",
        "metadata": out / "metadata.json",
    }
    n, K = fit.tau.shape
    nodes = A.labels() if A is not None else [str(i + 1) for i in range(n)]
    with _open_write(paths["membership"]) as fh:
        fh.write(",".join(["node", "label"] + [f"tau_{a + 1}" for a in range(K)]) + "\n")
        for i in range(n):
            fh.write(",".join([nodes[i], str(int(fit.partition.labels[i]) + 1)]
                              + [fmt(t) for t in fit.tau[i]]) + "\n")
    write_params(fit.params, paths["params"])
    with _open_write(paths["trace"]) as fh:
        fh.write("iter,elbo\n")
        for t, value in enumerate(fit.elbo_trace, 1):
            fh.write(f"{t},{fmt(value)}\n")
    meta = {
        "version": version or __version__,
        "backend": kernels.BACKEND,
        "K": K,
        "n": n,
        "seed": getattr(options, "seed", None),
        "options": options.to_dict() if options is not None else None,
        "converged": bool(fit.converged),
        "outer_iters": int(fit.outer_iters),
        "elbo_init": fit.elbo_init,
        "elbo_best": fit.elbo,
        "warnings": list(fit.warnings),
    }
    with _open_write(paths["metadata"]) as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return paths
