"""Command-line front end.

Exit codes: 0 when the solve converged, 2 when it did not (the status is in
the JSON payload), 3 for invalid input.  Results are written as JSON; floats
use Python's shortest round-trip representation, so re-reading a result
reproduces every matrix bit for bit.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import __version__
from .errors import ConvergenceError, EntcovError
from .mixed import EntryPartition, fit_mixed
from .model import AffineSubspace, graph_from_spec, subspace_from_spec
from .solve import SOLVERS, FitResult, SolveOptions, fit, pd_completion
from .specfun import LinkFunction, SymMatrix, parse_link
from .stats import clt_check, simulate_gaussian

__all__ = ["main", "run", "read_matrix", "load_result", "result_payload"]

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_NOT_CONVERGED = 2
EXIT_INPUT = 3
CSV_SYMMETRY_RTOL = 1e-9


class InputError(Exception):
    """Invalid command line or input file."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise InputError(message)


# input -------------------------------------------------------------------------


def read_matrix(path: str | Path, allow_nan: bool = False) -> np.ndarray:
    """Square matrix from a headerless comma-separated file.

    Symmetry is checked at 1e-9 relative on entries where both mirror
    values are given; ``nan`` marks unobserved entries when ``allow_nan``.
    """
    try:
        a = np.loadtxt(path, delimiter=",", ndmin=2, dtype=float)
    except (OSError, ValueError) as exc:
        raise InputError(f"cannot read matrix from {path}: {exc}") from exc
    if a.shape[0] != a.shape[1] or a.size == 0:
        raise InputError(f"{path}: expected a square matrix, got shape {a.shape}")
    finite = np.isfinite(a)
    if not allow_nan and not finite.all():
        raise InputError(f"{path}: non-finite entries")
    both = finite & finite.T
    diff = np.abs(np.where(both, a - a.T, 0.0))
    if np.any(diff > CSV_SYMMETRY_RTOL * np.maximum(1.0, np.abs(np.where(both, a, 0.0)))):
        raise InputError(f"{path}: matrix is not symmetric")
    if allow_nan and not np.array_equal(finite, finite.T):
        raise InputError(f"{path}: missing entries must be symmetric")
    return a


def read_json(path: str | Path) -> Any:
    try:
        with open(path) as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read JSON from {path}: {exc}") from exc


def _floats(text: str) -> np.ndarray:
    try:
        vals = [float(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise InputError(f"bad number list {text!r}") from exc
    return np.array(vals)


# output ------------------------------------------------------------------------


def _num(x: float) -> float | None:
    x = float(x)
    return x if np.isfinite(x) else None


def _mat(a) -> list[list[float | None]]:
    return [[_num(v) for v in row] for row in np.asarray(a)]


def result_payload(res: FitResult, config: dict) -> dict:
    payload = {
        "status": res.status.value,
        "sigma_hat": _mat(res.sigma_hat.array),
        "l_hat": _mat(res.l_hat.array),
        "kkt": {
            "primal_feas": _num(res.kkt.primal_feas),
            "dual_feas": _num(res.kkt.dual_feas),
            "min_eig_sigma": _num(res.kkt.min_eig_sigma),
            "min_eig_L_domain": _num(res.kkt.min_eig_L_domain),
        },
        "iters": res.iters,
        "solver": res.solver,
        "config": config,
    }
    if res.theta_hat is not None and res.theta_hat.size:
        payload["theta_hat"] = [_num(v) for v in res.theta_hat]
    if res.info.get("message"):
        payload["message"] = res.info["message"]
    return payload


def load_result(source: str | Path | dict) -> dict:
    """Parse a result payload and validate its matrices as SymMatrix."""
    data = source if isinstance(source, dict) else json.loads(Path(source).read_text())
    out = dict(data)
    for key in ("sigma_hat", "l_hat"):
        if key in data:
            out[key] = SymMatrix(data[key])
    return out


def _emit(payload: dict, output: str | None) -> None:
    text = json.dumps(payload, indent=2, allow_nan=False)
    if output in (None, "-"):
        sys.stdout.write(text + "\n")
    else:
        Path(output).write_text(text + "\n")


# commands ------------------------------------------------------------------------


def _opts(args) -> SolveOptions:
    kw = {}
    if args.tol is not None:
        kw["tol_kkt"] = args.tol
    if args.max_iter is not None:
        kw["max_iter"] = args.max_iter
    return SolveOptions(**kw)


def _config(args, link: LinkFunction, **extra) -> dict:
    cfg = {k: v for k, v in vars(args).items() if k not in ("func", "verbose")}
    cfg["link"] = link.name
    cfg.update(extra)
    return cfg


def _exit_for(res: FitResult) -> int:
    return EXIT_OK if res.converged else EXIT_NOT_CONVERGED


def cmd_fit(args) -> int:
    link = parse_link(args.link)
    sub = subspace_from_spec(read_json(args.constraint))
    S = SymMatrix(read_matrix(args.input), rtol=CSV_SYMMETRY_RTOL)
    if S.m != sub.m:
        raise InputError(f"input is {S.m}x{S.m} but the model is for m={sub.m}")
    res = fit(link, sub, S, solver=args.solver, opts=_opts(args))
    _emit(result_payload(res, _config(args, link, resolved_solver=res.solver)), args.output)
    return _exit_for(res)


def cmd_complete(args) -> int:
    link = parse_link(args.link)
    g = graph_from_spec(read_json(args.constraint))
    S = read_matrix(args.input, allow_nan=True)
    if S.shape[0] != g.m:
        raise InputError(f"input is {S.shape[0]}x{S.shape[0]} but the graph has {g.m} nodes")
    res = pd_completion(link, g, S, _opts(args))
    _emit(result_payload(res, _config(args, link)), args.output)
    return _exit_for(res)


def cmd_corr(args) -> int:
    link = parse_link(args.link)
    vals = _floats(args.offdiag)
    m = args.m
    if m is None:
        m = int(round((1 + np.sqrt(1 + 8 * vals.size)) / 2))
    if vals.size != m * (m - 1) // 2:
        raise InputError(f"expected {m * (m - 1) // 2} off-diagonal values for m={m}")
    res = fit_mixed(link, EntryPartition.diagonal(m), np.ones(m), vals, _opts(args))
    _emit(result_payload(res, _config(args, link, m=m)), args.output)
    return _exit_for(res)


def _partition(spec: str, m: int) -> EntryPartition:
    if spec == "diagonal":
        return EntryPartition.diagonal(m)
    data = read_json(spec)
    pairs = data.get("A") if isinstance(data, dict) else data
    if not isinstance(pairs, list):
        raise InputError('partition JSON needs a list "A" of 1-based index pairs')
    return EntryPartition(m, frozenset((int(i) - 1, int(j) - 1) for i, j in pairs))


def cmd_mixed(args) -> int:
    link = parse_link(args.link)
    M = read_matrix(args.input)
    part = _partition(args.partition, M.shape[0])
    sigma_a = {p: M[p] for p in part.pairs_A}
    l_b = {p: M[p] for p in part.pairs_B}
    res = fit_mixed(link, part, sigma_a, l_b, _opts(args))
    _emit(result_payload(res, _config(args, link)), args.output)
    return _exit_for(res)


def cmd_simulate(args) -> int:
    sigma0 = SymMatrix(read_matrix(args.input), rtol=CSV_SYMMETRY_RTOL)
    S_n = simulate_gaussian(sigma0, args.n, args.seed)
    cfg = {k: v for k, v in vars(args).items() if k not in ("func", "verbose")}
    _emit({"status": "Converged", "s_n": _mat(S_n.array), "config": cfg}, args.output)
    return EXIT_OK


def cmd_clt_check(args) -> int:
    link = parse_link(args.link)
    sub = subspace_from_spec(read_json(args.constraint))
    sigma0 = SymMatrix(read_matrix(args.input), rtol=CSV_SYMMETRY_RTOL)
    summ = clt_check(link, sub, sigma0, args.n, args.reps, args.seed, solver=args.solver, opts=_opts(args))
    payload = {
        "status": "Converged" if summ.failures == 0 else "MaxIter",
        "reps": summ.reps,
        "failures": summ.failures,
        "mean": [_num(v) for v in summ.mean],
        "variance": [_num(v) for v in summ.variance],
        "max_abs_z": _num(summ.max_abs_z),
        "config": _config(args, link),
    }
    _emit(payload, args.output)
    return EXIT_OK if summ.failures == 0 else EXIT_NOT_CONVERGED


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="entcov", description="Entropic covariance model fitting.")
    parser.add_argument("--version", action="version", version=f"entcov {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log solver progress")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, link=True, solve=True):
        if link:
            p.add_argument("--link", default="logdet", help="logdet, vonneumann, power:<q> or shifted:<lambda>")
        p.add_argument("--output", "-o", default=None, help="output JSON path (default: stdout)")
        if solve:
            p.add_argument("--tol", type=float, default=None, help="KKT tolerance")
            p.add_argument("--max-iter", type=int, default=None)

    p = sub.add_parser("fit", help="fit an entropic covariance model")
    common(p)
    p.add_argument("--constraint", required=True, help="model-spec JSON")
    p.add_argument("--input", required=True, help="sample covariance CSV")
    p.add_argument("--solver", choices=SOLVERS, default="auto")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("complete", help="completion of a partially observed matrix on a graph")
    common(p)
    p.add_argument("--constraint", required=True, help="graph model-spec JSON")
    p.add_argument("--input", required=True, help="CSV; entries off the graph may be nan")
    p.set_defaults(func=cmd_complete)

    p = sub.add_parser("corr", help="correlation matrix from off-diagonal link values")
    common(p)
    p.add_argument("--offdiag", required=True, help="comma-separated strict upper triangle, row by row")
    p.add_argument("--m", type=int, default=None)
    p.set_defaults(func=cmd_corr)

    p = sub.add_parser("mixed", help="matrix from Sigma on A and grad F on B")
    common(p)
    p.add_argument("--input", required=True, help="CSV holding Sigma targets on A and L targets on B")
    p.add_argument("--partition", default="diagonal", help='"diagonal" or JSON {"A": [[i, j], ...]} (1-based)')
    p.set_defaults(func=cmd_mixed)

    p = sub.add_parser("simulate", help="Gaussian sample covariance")
    common(p, link=False, solve=False)
    p.add_argument("--input", required=True, help="Sigma0 CSV")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("clt-check", help="Monte Carlo check of the asymptotic normal law")
    common(p)
    p.add_argument("--constraint", required=True, help="model-spec JSON")
    p.add_argument("--input", required=True, help="Sigma0 CSV")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--reps", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--solver", choices=SOLVERS, default="auto")
    p.set_defaults(func=cmd_clt_check)
    return parser


def run(argv: Sequence[str] | None = None) -> int:
    """Run the CLI and return its exit code."""
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
        return args.func(args)
    except ConvergenceError as exc:
        print(f"entcov: {exc}", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    except (InputError, EntcovError, ValueError, KeyError, TypeError) as exc:
        print(f"entcov: {exc}", file=sys.stderr)
        return EXIT_INPUT


def main() -> None:
    sys.exit(run())
