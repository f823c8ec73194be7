"""Command-line front end. Every subcommand writes CSV with a '#' config header.

Exit codes: 0 success, 2 invalid arguments, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
from contextlib import contextmanager

from . import __version__
from .convergence import DEFAULT_PATHS, ConvergenceReport, run_convergence_experiment
from .driver_paths import SeedSpec, build_grid, dump_path, sample_fine_path
from .errors import InvalidArgumentError, JumpMilError, NumericalOverflowError
from .levy_area import levy_mse_levels
from .schemes import SchemeKind
from .sde_problem import builtin_example_sde, builtin_linear_jump_diffusion, example_jcc_family

PROBLEMS = ("example", "linear", "jcc-family")
SCHEME_NAMES = [s.value for s in SchemeKind]
CONVERGENCE_COLUMNS = (
    "problem", "scheme", "p", "k", "delta", "error", "std_error", "paths", "aborted",
    "slope", "slope_std_error", "theoretical_rate",
)
LEVY_COLUMNS = ("level", "n", "empirical_mse", "theoretical_mse", "std_error", "paths")
# Left out of the config echo: they do not change any number in the output.
NOT_ECHOED = ("threads", "output", "func")


def fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, bool):
        return str(x).lower()
    if isinstance(x, int):
        return str(x)
    x = float(x)
    if math.isnan(x):
        return "nan"
    if x.is_integer() and abs(x) < 1e16:
        return str(int(x))
    return f"{x:.17g}"


def default_threads() -> int:
    env = os.environ.get("JUMPMIL_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise InvalidArgumentError(f"JUMPMIL_THREADS must be an integer, got {env!r}")
    return os.cpu_count() or 1


def make_problem(args):
    if args.lam is None:
        args.lam = 1.0 if args.problem == "linear" else 100.0
    if args.problem == "example":
        return builtin_example_sde(args.M, args.rho1, args.rho2, args.lam)
    if args.problem == "linear":
        return builtin_linear_jump_diffusion(args.a, args.b, args.c, args.x0, args.T, args.lam)
    if args.problem == "jcc-family":
        return example_jcc_family(args.M, args.rho1, args.rho2, args.lam)
    raise InvalidArgumentError(f"unknown problem {args.problem!r}")


def config_header(args) -> list[str]:
    cfg = {k: v for k, v in sorted(vars(args).items()) if k not in NOT_ECHOED}
    lines = [f"# jumpmil {__version__}"]
    lines += [f"# {k}={json.dumps(v)}" for k, v in cfg.items()]
    return lines


def convergence_rows(reports: list[ConvergenceReport]) -> list[list[str]]:
    rows = []
    for rep in reports:
        le = rep.level_errors
        base = [rep.problem_name, rep.scheme.value, fmt(le.p)]
        for k, d, e, se in zip(le.levels, le.deltas, le.errors, le.std_errors):
            rows.append(base + [fmt(k), fmt(d), fmt(e), fmt(se), fmt(le.n_paths), fmt(le.aborted_paths), "", "", ""])
        rows.append(base + [
            "summary", "", "", "", fmt(le.n_paths), fmt(le.aborted_paths),
            fmt(rep.fitted_slope), fmt(rep.slope_std_error), fmt(rep.theoretical_rate),
        ])
    return rows


def render_csv(header: list[str], columns, rows) -> str:
    lines = list(header)
    lines.append(",".join(columns))
    lines += [",".join(r) for r in rows]
    return "\n".join(lines) + "\n"


@contextmanager
def _open_text(path):
    if path in (None, "-"):
        yield sys.stdout
    else:
        with open(path, "w", newline="") as fh:
            yield fh


def _write(args, text):
    with _open_text(args.output) as fh:
        fh.write(text)


def _schemes(args, default):
    names = args.scheme or default
    return [SchemeKind(n) for n in names]


def _run(args, schemes, p_values, mode):
    problem = make_problem(args)
    return run_convergence_experiment(
        problem, schemes, p_values, args.kmin, args.kmax, args.paths, args.seed,
        mode=mode, fit_kmin=args.fit_kmin, threads=args.threads,
    )


def cmd_convergence(args):
    schemes = _schemes(args, ["rand-milstein-jcc"])
    reports = _run(args, schemes, args.p or [2.0], args.mode)
    _write(args, render_csv(config_header(args), CONVERGENCE_COLUMNS, convergence_rows(reports)))


def cmd_compare(args):
    problem = make_problem(args)
    mode = args.mode or ("exact" if problem.exact_terminal is not None else "successive")
    args.mode = mode
    schemes = _schemes(args, SCHEME_NAMES)
    reports = _run(args, schemes, args.p or [2.0], mode)
    _write(args, render_csv(config_header(args), CONVERGENCE_COLUMNS, convergence_rows(reports)))


def _levy_rows(results, paths):
    rows = []
    for trap, _left in results:
        rows.append([
            fmt(trap.level_k), fmt(1 << trap.level_k), fmt(trap.empirical_mse),
            fmt(trap.theoretical_mse), fmt(trap.mc_standard_error), fmt(paths),
        ])
    return rows


def cmd_levy(args):
    levels = args.level or [2]
    results = levy_mse_levels(args.lam, args.T, levels, args.paths, args.seed, threads=args.threads)
    _write(args, render_csv(config_header(args), LEVY_COLUMNS, _levy_rows(results, args.paths)))


def cmd_path_dump(args):
    if args.output in (None, "-"):
        raise InvalidArgumentError("path-dump needs --output FILE")
    grid = build_grid(args.T, args.level)
    path = sample_fine_path(SeedSpec(args.seed, args.path_index), grid, args.lam)
    with open(args.output, "wb") as fh:
        dump_path(path, fh)


def cmd_figure1(args):
    args.problem = "example"
    args.mode = "successive"
    reports = _run(args, [SchemeKind.RANDOMIZED_MILSTEIN_JCC], [1.0, 2.0, 3.0, 4.0], "successive")
    _write(args, render_csv(config_header(args), CONVERGENCE_COLUMNS, convergence_rows(reports)))


def cmd_figure2(args):
    args.problem = "example"
    args.mode = "successive"
    reports = _run(args, [SchemeKind.RANDOMIZED_MILSTEIN_JCC], [float(p) for p in range(1, 9)], "successive")
    rows = [[fmt(r.level_errors.p), fmt(r.fitted_slope), fmt(r.slope_std_error), fmt(r.theoretical_rate)]
            for r in reports]
    _write(args, render_csv(config_header(args), ("p", "slope", "slope_std_error", "theoretical_rate"), rows))


def cmd_levy_table(args):
    rows = []
    for lam in (1.0, 100.0):
        results = levy_mse_levels(lam, args.T, [2, 4, 6], args.paths, args.seed, threads=args.threads)
        for trap, left in results:
            rows.append([
                fmt(lam), fmt(trap.level_k), fmt(1 << trap.level_k),
                fmt(trap.empirical_mse), fmt(trap.theoretical_mse), fmt(trap.mc_standard_error),
                fmt(left.empirical_mse), fmt(left.theoretical_mse), fmt(left.mc_standard_error),
                fmt(args.paths),
            ])
    columns = (
        "lambda", "level", "n", "empirical_mse", "theoretical_mse", "std_error",
        "left_point_mse", "left_point_theoretical_mse", "left_point_std_error", "paths",
    )
    _write(args, render_csv(config_header(args), columns, rows))


def _common(p: argparse.ArgumentParser, paths_default=DEFAULT_PATHS):
    p.add_argument("--paths", type=int, default=paths_default, help="Monte Carlo paths (default %(default)s)")
    p.add_argument("--seed", type=int, default=0, help="master seed (default %(default)s)")
    p.add_argument("--threads", type=int, default=None,
                   help="worker threads; falls back to $JUMPMIL_THREADS, then the CPU count")
    p.add_argument("--output", default="-", help="output file, '-' for stdout (default)")


def _problem_flags(p: argparse.ArgumentParser):
    p.add_argument("--problem", choices=PROBLEMS, default="example")
    p.add_argument("--lambda", dest="lam", type=float, default=None,
                   help="jump intensity (default 100 for example/jcc-family, 1 for linear)")
    p.add_argument("--M", type=float, default=100.0)
    p.add_argument("--rho1", type=float, default=0.1)
    p.add_argument("--rho2", type=float, default=0.6)
    p.add_argument("--a", type=float, default=0.5)
    p.add_argument("--b", type=float, default=0.2)
    p.add_argument("--c", type=float, default=0.1)
    p.add_argument("--x0", type=float, default=1.0, help="initial value (linear problem)")
    p.add_argument("--T", type=float, default=1.0, help="horizon (linear problem)")


def _level_flags(p: argparse.ArgumentParser):
    p.add_argument("--kmin", type=int, default=4, help="first level with an error estimate")
    p.add_argument("--kmax", type=int, default=10, help="finest level")
    p.add_argument("--fit-kmin", type=int, default=None, help="first level used in the slope fit (default max(kmin, 4))")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="jumpmil", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"jumpmil {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    p = sub.add_parser("convergence", help="strong-error curves and fitted slopes")
    _problem_flags(p)
    _level_flags(p)
    p.add_argument("--scheme", action="append", choices=SCHEME_NAMES, help="repeatable (default rand-milstein-jcc)")
    p.add_argument("--p", action="append", type=float, help="repeatable L^p exponent (default 2)")
    p.add_argument("--mode", choices=("successive", "exact"), default="successive")
    _common(p)
    p.set_defaults(func=cmd_convergence)

    p = sub.add_parser("compare-schemes", help="run several schemes on the same coupled paths")
    _problem_flags(p)
    _level_flags(p)
    p.add_argument("--scheme", action="append", choices=SCHEME_NAMES, help="repeatable (default: all)")
    p.add_argument("--p", action="append", type=float, help="repeatable L^p exponent (default 2)")
    p.add_argument("--mode", choices=("successive", "exact"), default=None,
                   help="default: exact when the problem has a closed-form solution")
    _common(p)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("levy-mse", help="trapezoidal Levy-area MSE against the closed form")
    p.add_argument("--lambda", dest="lam", type=float, default=1.0)
    p.add_argument("--T", type=float, default=1.0)
    p.add_argument("--level", action="append", type=int, help="repeatable grid level (default 2)")
    _common(p)
    p.set_defaults(func=cmd_levy)

    p = sub.add_parser("path-dump", help="write one driving path in the binary debug format")
    p.add_argument("--lambda", dest="lam", type=float, default=1.0)
    p.add_argument("--T", type=float, default=1.0)
    p.add_argument("--level", type=int, default=4)
    p.add_argument("--path-index", type=int, default=0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=None, help=argparse.SUPPRESS)
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_path_dump)

    for name, func, helptext in (
        ("preset-figure1", cmd_figure1, "benchmark error curves for p in 1..4"),
        ("preset-figure2", cmd_figure2, "benchmark fitted slopes for p in 1..8"),
    ):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--M", type=float, default=100.0)
        p.add_argument("--rho1", type=float, default=0.1)
        p.add_argument("--rho2", type=float, default=0.6)
        p.add_argument("--lambda", dest="lam", type=float, default=100.0)
        _level_flags(p)
        _common(p)
        p.set_defaults(func=func)

    p = sub.add_parser("preset-levy-table", help="Levy-area MSE table, lambda in {1, 100}, n in {4, 16, 64}")
    p.add_argument("--T", type=float, default=1.0)
    _common(p, paths_default=100_000)
    p.set_defaults(func=cmd_levy_table)
    return parser


def parse_and_run(argv=None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    if not argv:
        parser.print_usage(sys.stderr)
        return 2
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 2
    try:
        if args.threads is None:
            args.threads = default_threads()
        args.func(args)
    except NumericalOverflowError as exc:
        print(f"jumpmil: numerical failure: {exc}", file=sys.stderr)
        return 3
    except (InvalidArgumentError, ValueError) as exc:
        print(f"jumpmil: error: {exc}", file=sys.stderr)
        return 2
    except (JumpMilError, ArithmeticError, FloatingPointError) as exc:
        print(f"jumpmil: numerical failure: {exc}", file=sys.stderr)
        return 3
    return 0


def main() -> None:
    sys.exit(parse_and_run())
