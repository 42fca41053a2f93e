"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import sys
from typing import Optional, Sequence

import numpy as np

from dczip import io
from dczip.errors import DataError, NumericalError
from dczip.inference import FitOptions, fit_vem
from dczip.init_eval import nmi
from dczip.model import Partition, sample_network
from dczip.selection import DEFAULT_RESTARTS, INIT_STRATEGIES, best_fit, select_k

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERICAL = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _positive_float(text: str) -> float:
    value = float(text)
    if not value > 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text}")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dczip", description="Degree-corrected zero-inflated Poisson block models.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="sample a network from a parameter file")
    p.add_argument("--params", required=True)
    p.add_argument("--n", type=_positive_int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True, help="edge-list output")
    p.add_argument("--truth", help="write the planted partition here")
    p.add_argument("--nodes-out", help="write the node list here (keeps isolated nodes)")

    p = sub.add_parser("fit", help="fit a model with a fixed number of communities")
    p.add_argument("--graph", required=True)
    p.add_argument("--nodes")
    p.add_argument("--k", type=_positive_int, required=True)
    p.add_argument("--no-degree-correction", action="store_true")
    p.add_argument("--global-sparsity", action="store_true")
    p.add_argument("--init", default="portfolio",
                   help="portfolio (default), kmeans, kmeans-presence or file:<partition>")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--restarts", type=_positive_int, default=1)
    p.add_argument("--tol", type=_positive_float, default=FitOptions.elbo_tol)
    p.add_argument("--max-iters", type=_positive_int, default=FitOptions.max_outer_iters)
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("select", help="choose the number of communities by ICL")
    p.add_argument("--graph", required=True)
    p.add_argument("--nodes")
    p.add_argument("--k-min", type=_positive_int, required=True)
    p.add_argument("--k-max", type=_positive_int, required=True)
    p.add_argument("--restarts", type=_positive_int, default=DEFAULT_RESTARTS)
    p.add_argument("--no-degree-correction", action="store_true")
    p.add_argument("--global-sparsity", action="store_true")
    p.add_argument("--out", required=True, help="ICL table output (CSV)")

    p = sub.add_parser("eval", help="print the NMI between two partition files")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)

    p = sub.add_parser("sweep", help="run a simulation sweep from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--workers", type=_positive_int, default=1)
    return parser


def _options(args, **extra) -> FitOptions:
    return FitOptions(
        degree_corrected=not args.no_degree_correction,
        sparsity_mode="global" if args.global_sparsity else "local",
        **extra,
    )


def _aligned(nodes: list, part: Partition, labels: list, path) -> Partition:
    """Reorder a partition read from ``path`` to the node order ``labels``."""
    where = {v: i for i, v in enumerate(nodes)}
    missing = [v for v in labels if v not in where]
    if missing or len(nodes) != len(labels):
        raise DataError(f"{path}: node set differs from the graph (e.g. {missing[:3]})")
    return Partition(part.labels[[where[v] for v in labels]], part.K)


def cmd_simulate(args) -> int:
    params = io.read_params(args.params, n=args.n)
    if params.n != args.n:
        raise DataError(f"{args.params}: parameters are for n={params.n}, not {args.n}")
    A, Z = sample_network(params, args.n, args.seed)
    io.write_edge_list(A, args.out, args.nodes_out)
    if args.truth:
        io.write_partition(Z, args.truth, A.labels())
    return EXIT_OK


def cmd_fit(args) -> int:
    A = io.read_edge_list(args.graph, args.nodes)
    if args.k > A.n:
        raise UsageError(f"--k {args.k} exceeds the number of nodes {A.n}")
    opts = _options(args, elbo_tol=args.tol, max_outer_iters=args.max_iters, seed=args.seed)
    seeds = range(args.seed, args.seed + args.restarts)
    if args.init.startswith("file:"):
        path = args.init[5:]
        nodes, part = io.read_partition(path)
        init = _aligned(nodes, part, A.labels(), path)
        if init.K > args.k:
            raise DataError(f"{path}: partition has {init.K} labels, more than --k {args.k}")
        fit = fit_vem(A, args.k, Partition(init.labels, args.k), opts)
    elif args.init in INIT_STRATEGIES:
        fit = best_fit(A, args.k, opts, seeds, args.init)
    else:
        raise UsageError(f"--init must be one of {', '.join(INIT_STRATEGIES)} or file:<path>")
    io.write_fit(fit, args.out, A, opts)
    for msg in fit.warnings:
        print(f"warning: {msg}", file=sys.stderr)
    print(f"elbo={io.fmt(fit.elbo)} converged={str(fit.converged).lower()} iters={fit.outer_iters}")
    return EXIT_OK


def cmd_select(args) -> int:
    if args.k_min > args.k_max:
        raise UsageError("--k-min must not exceed --k-max")
    A = io.read_edge_list(args.graph, args.nodes)
    if args.k_max > A.n:
        raise UsageError(f"--k-max {args.k_max} exceeds the number of nodes {A.n}")
    table = select_k(A, args.k_min, args.k_max, _options(args), range(args.restarts))
    write_icl_table(table, args.out)
    for row in table.rows:
        for msg in row.warnings:
            print(f"warning: k={row.k}: {msg}", file=sys.stderr)
    print(f"k_hat={table.k_hat}")
    return EXIT_OK


def write_icl_table(table, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("k,loglik,block_penalty,mixing_penalty,icl,elbo,converged,selected\n")
        for r in table.rows:
            vals = [str(r.k)] + [io.fmt(v) for v in (r.loglik, r.block_penalty, r.mixing_penalty,
                                                     r.icl, r.elbo)]
            vals += [str(r.converged).lower(), str(r.k == table.k_hat).lower()]
            fh.write(",".join(vals) + "\n")


def cmd_eval(args) -> int:
    nodes_a, pa = io.read_partition(args.a)
    nodes_b, pb = io.read_partition(args.b)
    pb = _aligned(nodes_b, pb, nodes_a, args.b)
    print(repr(nmi(pa, pb)))
    return EXIT_OK


def cmd_sweep(args) -> int:
    from dczip.sweep import SweepConfig, run_sweep

    config = SweepConfig.load(args.config)
    run_sweep(config, args.out, args.workers)
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "select": cmd_select,
    "eval": cmd_eval,
    "sweep": cmd_sweep,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"dczip {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, OSError, ValueError) as exc:
        print(f"dczip {args.command}: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericalError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"dczip {args.command}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
