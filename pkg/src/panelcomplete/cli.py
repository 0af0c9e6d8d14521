"""Command-line surface: fit, infer, treat, select-rank, simulate.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
Reports are JSON (or flattened CSV) with no timestamps, so a command
repeated with the same seed produces byte-identical output.
"""

from __future__ import annotations

import argparse
import json
import sys

from . import __version__
from .errors import DataError, NumericalError, OutOfRange
from .inference import group_average_ci
from .io import file_digest, load_panel, save_completed, write_report
from .panel import GroupSpec, estimate_propensity
from .rank import DEFAULT_CANDIDATES, rank_cv, rank_threshold
from .simulate import DgpSpec, run_mc
from .solver import SolverOptions, solve_nuclear_norm
from .treatment import TreatmentPanel, ate_inference, bh_fdr
from .twostep import _refit, tls_fit


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}error: {message}")


def _parse_lambda(text):
    if text == "auto":
        return None
    try:
        value = float(text)
    except ValueError:
        raise UsageError(f"--lambda must be 'auto' or a number, got {text!r}") from None
    if value < 0:
        raise UsageError("--lambda must be nonnegative")
    return value


def _parse_indices(text, limit, what):
    """1-based comma list of indices and inclusive a..b ranges, or @all."""
    if text == "@all":
        return tuple(range(limit))
    out = []
    for item in text.split(","):
        item = item.strip()
        try:
            if ".." in item:
                a, b = item.split("..")
                lo, hi = int(a), int(b)
                if lo < 1 or hi < lo:
                    raise ValueError
                out.extend(range(lo - 1, hi))
            else:
                v = int(item)
                if v < 1:
                    raise ValueError
                out.append(v - 1)
        except ValueError:
            raise UsageError(
                f"bad {what} item {item!r}; use 1-based indices like 2 or 4..7"
            ) from None
    return tuple(out)


def parse_group(text, n_units, n_periods) -> GroupSpec:
    """Parse 'units=1..10,25 periods=3..8' (1-based) or '@all'."""
    text = text.strip()
    if text == "@all":
        return GroupSpec.all(n_units, n_periods)
    units = None
    periods = None
    for token in text.split():
        key, eq, val = token.partition("=")
        if not eq:
            raise UsageError(f"bad group token {token!r}; expected key=value")
        if key == "units":
            units = _parse_indices(val, n_units, "units")
        elif key == "periods":
            periods = _parse_indices(val, n_periods, "periods")
        else:
            raise UsageError(f"unknown group key {key!r}; use units= or periods=")
    if units is None and periods is None:
        raise UsageError(f"group {text!r} selects nothing")
    if units is None:
        units = tuple(range(n_units))
    if periods is None:
        periods = tuple(range(n_periods))
    return GroupSpec(units, periods)


def _parse_missing(text):
    kind, _, rest = text.partition(":")
    try:
        if kind == "uniform":
            return ("uniform", float(rest))
        if kind in ("hetero", "heterogeneous"):
            lo, hi = rest.split(",")
            return ("heterogeneous", float(lo), float(hi))
    except ValueError:
        pass
    raise UsageError(
        f"bad --missing {text!r}; use uniform:P or hetero:LO,HI"
    )


def _solver_opts(args, lam_attr="lam"):
    return SolverOptions(
        lam=getattr(args, lam_attr),
        max_iters=args.max_iters,
        rel_tol=args.tol,
        step_size=args.step if args.step is not None else "auto",
    )


def _add_common(parser):
    parser.add_argument("--input", required=True, help="long-format panel file")
    parser.add_argument("--delimiter", default=",")
    parser.add_argument("--output", default=None, help="report destination (default: stdout)")
    parser.add_argument("--format", choices=("json", "csv"), default="json")


def _add_solver_flags(parser):
    parser.add_argument("--lambda", dest="lam", type=_parse_lambda, default=None,
                        metavar="LAMBDA", help="penalty weight or 'auto' (default)")
    parser.add_argument("--tol", type=float, default=SolverOptions().rel_tol)
    parser.add_argument("--max-iters", type=int, default=SolverOptions().max_iters)
    parser.add_argument("--step", type=float, default=None,
                        help="fixed step size (default: safe automatic step)")


def build_parser() -> _Parser:
    parser = _Parser(prog="panelcomplete", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p_fit = sub.add_parser("fit", help="complete a panel and write the matrix")
    _add_common(p_fit)
    _add_solver_flags(p_fit)
    p_fit.add_argument("--k", type=int, required=True, help="factor dimension")
    p_fit.add_argument("--completed", required=True, help="completed-matrix file")

    p_inf = sub.add_parser("infer", help="confidence intervals for group averages")
    _add_common(p_inf)
    _add_solver_flags(p_inf)
    p_inf.add_argument("--k", type=int, required=True)
    p_inf.add_argument("--group", action="append", required=True,
                       help="e.g. 'units=1..10,25 periods=3..8' or '@all' (repeatable)")
    p_inf.add_argument("--level", type=float, default=0.95)
    p_inf.add_argument("--alternative", choices=("two-sided", "greater", "less"),
                       default="two-sided")

    p_tr = sub.add_parser("treat", help="average treatment effects per group")
    _add_common(p_tr)
    _add_solver_flags(p_tr)
    p_tr.add_argument("--k", type=int, required=True, help="factor dimension (both arms)")
    p_tr.add_argument("--k0", type=int, default=None, help="control-arm override")
    p_tr.add_argument("--k1", type=int, default=None, help="treated-arm override")
    p_tr.add_argument("--lambda0", dest="lam0", type=_parse_lambda, default=None)
    p_tr.add_argument("--lambda1", dest="lam1", type=_parse_lambda, default=None)
    p_tr.add_argument("--group", action="append", required=True)
    p_tr.add_argument("--level", type=float, default=0.95)
    p_tr.add_argument("--alternative", choices=("two-sided", "greater", "less"),
                      default="two-sided")
    p_tr.add_argument("--fdr", type=float, default=None,
                      help="Benjamini-Hochberg level across the groups")

    p_rk = sub.add_parser("select-rank", help="choose the factor dimension")
    _add_common(p_rk)
    _add_solver_flags(p_rk)
    p_rk.add_argument("--method", choices=("threshold", "cv"), default="threshold")
    p_rk.add_argument("--candidates", default=",".join(map(str, DEFAULT_CANDIDATES)),
                      help="comma list for --method cv")
    p_rk.add_argument("--seed", type=int, default=0)

    p_sim = sub.add_parser("simulate", help="Monte Carlo runs of the estimators")
    p_sim.add_argument("--dgp", choices=("factor", "sine", "poly", "treatment"),
                       required=True)
    p_sim.add_argument("--n", type=int, required=True)
    p_sim.add_argument("--t", type=int, required=True)
    p_sim.add_argument("--reps", type=int, required=True)
    p_sim.add_argument("--estimator", choices=("tls", "tls_ss", "plain_nuclear"),
                       default="tls")
    p_sim.add_argument("--seed", type=int, default=0)
    p_sim.add_argument("--k", type=int, default=None)
    p_sim.add_argument("--noise-sd", type=float, default=1.0)
    p_sim.add_argument("--missing", type=_parse_missing,
                       default=("heterogeneous", 0.3, 0.7),
                       help="uniform:P or hetero:LO,HI (default hetero:0.3,0.7)")
    p_sim.add_argument("--truncation", type=int, default=100)
    p_sim.add_argument("--decay-a", type=float, default=2.0)
    p_sim.add_argument("--group", action="append", default=None,
                       help="target groups (1-based; default: the middle cell)")
    p_sim.add_argument("--level", type=float, default=0.95)
    _add_solver_flags(p_sim)
    p_sim.add_argument("--output", default=None)
    p_sim.add_argument("--format", choices=("json", "csv"), default="json")
    return parser


def _emit(report, args):
    if args.output is None:
        print(json.dumps(report, sort_keys=True, indent=2))
    else:
        write_report(report, args.output, args.format)


def _input_block(args):
    return {
        "path": args.input,
        "sha256": file_digest(args.input),
    }


def _result_row(label, res):
    return {
        "group": label,
        "estimate": res.estimate,
        "variance": res.variance,
        "std_error": res.std_error,
        "t_stat": res.t_stat,
        "ci_lower": res.ci_lower,
        "ci_upper": res.ci_upper,
        "p_value": res.p_value,
    }


def _cmd_fit(args):
    panel = load_panel(args.input, delimiter=args.delimiter)
    if isinstance(panel, TreatmentPanel):
        raise OutOfRange("fit expects a plain panel; use the treat command")
    opts = _solver_opts(args)
    prop = estimate_propensity(panel)
    est = solve_nuclear_norm(panel, prop, opts)
    fit = _refit(panel, est, args.k)
    save_completed(fit.m_hat, panel, args.completed, delimiter=args.delimiter)
    report = {
        "command": "fit",
        "package": {"name": "panelcomplete", "version": __version__},
        "input": _input_block(args),
        "config": {
            "k": args.k,
            "lambda": est.lam,
            "tol": args.tol,
            "max_iters": args.max_iters,
        },
        "results": {
            "completed_path": args.completed,
            "n_units": panel.n_units,
            "n_periods": panel.n_periods,
            "n_observed": panel.n_observed,
            "converged": est.converged,
            "iterations": est.n_iters,
            "objective": float(est.objective_trace[-1]),
            "singular_values": [float(s) for s in est.singular_values[: args.k + 5]],
        },
    }
    _emit(report, args)
    return 0


def _cmd_infer(args):
    panel = load_panel(args.input, delimiter=args.delimiter)
    if isinstance(panel, TreatmentPanel):
        raise OutOfRange("infer expects a plain panel; use the treat command")
    opts = _solver_opts(args)
    fit = tls_fit(panel, args.k, opts)
    rows = []
    for label in args.group:
        group = parse_group(label, panel.n_units, panel.n_periods)
        res = group_average_ci(panel, fit, group, args.level, args.alternative)
        rows.append(_result_row(label, res))
    report = {
        "command": "infer",
        "package": {"name": "panelcomplete", "version": __version__},
        "input": _input_block(args),
        "config": {
            "k": args.k,
            "level": args.level,
            "alternative": args.alternative,
            "tol": args.tol,
            "max_iters": args.max_iters,
        },
        "rows": rows,
    }
    _emit(report, args)
    return 0


def _cmd_treat(args):
    tp = load_panel(args.input, delimiter=args.delimiter)
    if not isinstance(tp, TreatmentPanel):
        raise OutOfRange("treat requires a file with a treated column")
    opts = _solver_opts(args)
    opts0 = _solver_opts(args, "lam0") if args.lam0 is not None else None
    opts1 = _solver_opts(args, "lam1") if args.lam1 is not None else None
    rows = []
    for label in args.group:
        group = parse_group(label, tp.n_units, tp.n_periods)
        res = ate_inference(
            tp, group, args.k, opts, args.level, args.alternative,
            k0=args.k0, k1=args.k1, opts0=opts0, opts1=opts1,
        )
        row = _result_row(label, res)
        row["variance_by_arm"] = list(res.variance_by_arm)
        rows.append(row)
    if args.fdr is not None:
        rejected = bh_fdr([row["p_value"] for row in rows], args.fdr)
        for i, row in enumerate(rows):
            row["fdr_rejected"] = i in rejected
    report = {
        "command": "treat",
        "package": {"name": "panelcomplete", "version": __version__},
        "input": _input_block(args),
        "config": {
            "k": args.k,
            "k0": args.k0,
            "k1": args.k1,
            "level": args.level,
            "alternative": args.alternative,
            "fdr": args.fdr,
        },
        "rows": rows,
    }
    _emit(report, args)
    return 0


def _cmd_select_rank(args):
    panel = load_panel(args.input, delimiter=args.delimiter)
    if isinstance(panel, TreatmentPanel):
        raise OutOfRange("select-rank expects a plain panel")
    opts = _solver_opts(args)
    if args.method == "threshold":
        prop = estimate_propensity(panel)
        est = solve_nuclear_norm(panel, prop, opts)
        sel = rank_threshold(est, panel.n_units, panel.n_periods)
        diagnostics = {
            "threshold": sel.diagnostics["threshold"],
            "raw_count": sel.diagnostics["raw_count"],
            "singular_values": [float(s) for s in sel.diagnostics["singular_values"]],
        }
    else:
        candidates = [int(x) for x in args.candidates.split(",")]
        sel = rank_cv(panel, candidates, opts, seed=args.seed)
        diagnostics = {
            "candidates": sel.diagnostics["candidates"],
            "score_sums": [float(s) for s in sel.diagnostics["score_sums"]],
        }
    report = {
        "command": "select-rank",
        "package": {"name": "panelcomplete", "version": __version__},
        "input": _input_block(args),
        "config": {"method": args.method, "seed": args.seed},
        "results": {"chosen_k": sel.chosen_k, "method": sel.method, **diagnostics},
    }
    _emit(report, args)
    return 0


def _cmd_simulate(args):
    spec = DgpSpec(
        family=args.dgp,
        n=args.n,
        t=args.t,
        noise_sd=args.noise_sd,
        missing=args.missing,
        series_truncation=args.truncation,
        decay_a=args.decay_a,
        seed=args.seed,
    )
    if args.group is None:
        targets = [GroupSpec.cell(args.n // 2, args.t // 2)]
        labels = ["(middle cell)"]
    else:
        targets = [parse_group(label, args.n, args.t) for label in args.group]
        labels = list(args.group)
    opts = _solver_opts(args)
    report_obj = run_mc(
        spec, args.estimator, args.reps, targets, args.level, k=args.k, opts=opts
    )
    report = {
        "command": "simulate",
        "package": {"name": "panelcomplete", "version": __version__},
        "config": {"target_labels": labels},
        **report_obj.to_dict(),
    }
    _emit(report, args)
    return 0


_COMMANDS = {
    "fit": _cmd_fit,
    "infer": _cmd_infer,
    "treat": _cmd_treat,
    "select-rank": _cmd_select_rank,
    "simulate": _cmd_simulate,
}


def cli_dispatch(argv) -> int:
    """Parse argv and run one command, mapping errors to exit codes."""
    try:
        parser = build_parser()
        args = parser.parse_args(list(argv))
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


def main() -> None:
    sys.exit(cli_dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
