"""Strong L^p error estimation and rate fitting on coupled dyadic levels."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .driver_paths import build_grid, sample_batch
from .errors import InvalidArgumentError, NumericalOverflowError
from .schemes import SchemeKind, run_scheme_batch
from .sde_problem import SdeProblem

DEFAULT_PATHS = 2**12
DEFAULT_FIT_KMIN = 4


def _lp_mean(diff, p):
    if not p >= 1:
        raise InvalidArgumentError(f"p must be >= 1, got {p}")
    a = np.abs(diff)
    scale = float(np.max(a)) if a.size else 0.0
    if scale == 0.0:
        return 0.0, 0.0
    if not math.isfinite(scale):
        return math.inf, math.inf
    # factor out the largest difference so |d|^p cannot overflow
    powered = (a / scale) ** p
    m = float(np.mean(powered))
    n = powered.size
    var = float(np.var(powered, ddof=1)) if n > 1 else 0.0
    err = scale * m ** (1.0 / p)
    # delta method for g(m) = m^(1/p), rescaled
    se = scale * (1.0 / p) * m ** (1.0 / p - 1.0) * math.sqrt(var / n)
    return err, se


def _paired(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise InvalidArgumentError(f"expected equal-length 1-d inputs, got {a.shape} and {b.shape}")
    if a.size == 0:
        raise InvalidArgumentError("empty input")
    return a, b


def successive_error(terminal_fine, terminal_coarse, p: float) -> tuple[float, float]:
    """mean(|X^(k)(T) - X^(k-1)(T)|^p)^(1/p) with a delta-method standard error."""
    a, b = _paired(terminal_fine, terminal_coarse)
    return _lp_mean(a - b, p)


def exact_error(terminal_numeric, terminal_exact, p: float) -> tuple[float, float]:
    a, b = _paired(terminal_numeric, terminal_exact)
    return _lp_mean(a - b, p)


def fit_slope(log_deltas, log_errors) -> tuple[float, float]:
    """OLS slope of log2(error) against log2(delta) and its standard error."""
    x = np.asarray(log_deltas, dtype=float)
    y = np.asarray(log_errors, dtype=float)
    if x.shape != y.shape or x.size < 3:
        raise InvalidArgumentError("need at least 3 (delta, error) points")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise InvalidArgumentError("non-finite value in regression input")
    if np.all(x == x[0]):
        raise InvalidArgumentError("all step sizes are equal")
    if np.all(y == y[0]):
        return 0.0, 0.0
    res = stats.linregress(x, y)
    # linregress derives stderr from 1 - r^2, which cancels badly for
    # near-perfect fits; residuals give the same quantity without that loss
    resid = y - (res.intercept + res.slope * x)
    sxx = float(np.sum((x - x.mean()) ** 2))
    se = math.sqrt(float(np.sum(resid**2)) / (x.size - 2) / sxx)
    return float(res.slope), se


RATE_VARIANTS = ("jump", "jump_free", "classical_milstein")


def theoretical_rate(p: float, rho1: float, rho2: float, rho3: float, variant: str = "jump") -> float:
    """Upper-bound strong rate for the Milstein family.

    jump:               min{2/p, rho1 + 1/p, rho2, rho3}
    classical_milstein: min{2/p, rho1, rho2, rho3}
    jump_free:          min{rho1 + 1/2, rho2}
    For p in [1, 2) the p = 2 rate is used.
    """
    for r in (rho1, rho2, rho3):
        if not 0 < r <= 1:
            raise InvalidArgumentError(f"exponent must lie in (0, 1], got {r}")
    if not p >= 1:
        raise InvalidArgumentError(f"p must be >= 1, got {p}")
    p = max(p, 2.0)
    if variant == "jump":
        return min(2.0 / p, rho1 + 1.0 / p, rho2, rho3)
    if variant == "classical_milstein":
        return min(2.0 / p, rho1, rho2, rho3)
    if variant == "jump_free":
        return min(rho1 + 0.5, rho2)
    raise InvalidArgumentError(f"unknown rate variant {variant!r}")


def scheme_rate(scheme: SchemeKind, p: float, problem: SdeProblem) -> float:
    """Theoretical rate attached to reports; NaN where no rate law is provided."""
    scheme = SchemeKind(scheme)
    r1, r2, r3 = problem.exponents
    if problem.intensity_lambda == 0:
        variant = "jump_free"
    else:
        variant = "jump"
    if scheme in (SchemeKind.RANDOMIZED_MILSTEIN, SchemeKind.RANDOMIZED_MILSTEIN_JCC):
        return theoretical_rate(p, r1, r2, r3, variant)
    if scheme is SchemeKind.CLASSICAL_MILSTEIN and variant == "jump":
        return theoretical_rate(p, r1, r2, r3, "classical_milstein")
    return math.nan


@dataclass(frozen=True)
class LevelErrors:
    p: float
    levels: list
    deltas: list
    errors: list
    std_errors: list
    n_paths: int
    aborted_paths: int


@dataclass(frozen=True)
class ConvergenceReport:
    level_errors: LevelErrors
    fitted_slope: float
    slope_std_error: float
    theoretical_rate: float
    scheme: SchemeKind
    problem_name: str
    degenerate: bool = False
    fit_levels: tuple = ()


def _fit(level_errors: LevelErrors, fit_kmin: int):
    pts = [
        (math.log2(d), math.log2(e))
        for k, d, e in zip(level_errors.levels, level_errors.deltas, level_errors.errors)
        if k >= fit_kmin and e > 0 and math.isfinite(e)
    ]
    dropped = [
        k for k, e in zip(level_errors.levels, level_errors.errors)
        if k >= fit_kmin and not (e > 0 and math.isfinite(e))
    ]
    if dropped:
        warnings.warn(f"levels {dropped} have zero or non-finite error and are left out of the fit", RuntimeWarning)
    if len(pts) < 3:
        return math.nan, math.nan, True, ()
    x, y = zip(*pts)
    slope, se = fit_slope(x, y)
    used = tuple(k for k in level_errors.levels if k >= fit_kmin and k not in dropped)
    return slope, se, False, used


def run_convergence_experiment(
    problem: SdeProblem,
    schemes,
    p_values,
    k_min: int,
    k_max: int,
    n_paths: int = DEFAULT_PATHS,
    seed: int = 0,
    *,
    mode: str = "successive",
    fit_kmin: int | None = None,
    threads: int = 1,
    chunk_size: int = 1024,
) -> list[ConvergenceReport]:
    """Estimate error(k) for k_min <= k <= k_max and fit log-log slopes.

    Every path is sampled once at level ``k_max`` and coarsened through the
    lower levels, so all levels share the same driving noise. In
    ``"successive"`` mode error(k) compares levels k and k-1; in ``"exact"``
    mode it compares level k with the problem's exact terminal value.
    Reports are ordered by scheme, then p.
    """
    if isinstance(schemes, (str, SchemeKind)):
        schemes = [schemes]
    schemes = [SchemeKind(s) for s in schemes]
    p_values = [float(p) for p in p_values]
    if mode not in ("successive", "exact"):
        raise InvalidArgumentError(f"unknown mode {mode!r}")
    if not k_max > k_min >= 1:
        raise InvalidArgumentError(f"need k_max > k_min >= 1, got k_min={k_min}, k_max={k_max}")
    if n_paths < 100:
        raise InvalidArgumentError("need at least 100 paths")
    if mode == "exact" and problem.exact_terminal is None:
        raise InvalidArgumentError(f"problem {problem.name!r} has no exact solution")
    fit_kmin = max(k_min, DEFAULT_FIT_KMIN) if fit_kmin is None else max(k_min, fit_kmin)

    lowest = k_min - 1 if mode == "successive" else k_min
    levels = list(range(lowest, k_max + 1))
    grid = build_grid(problem.horizon_T, k_max)
    terminal = {s: {k: np.empty(n_paths) for k in levels} for s in schemes}
    aborted = {s: np.zeros(n_paths, dtype=bool) for s in schemes}
    exact = np.empty(n_paths) if mode == "exact" else None

    for start in range(0, n_paths, chunk_size):
        count = min(chunk_size, n_paths - start)
        rows = slice(start, start + count)
        batch = sample_batch(grid, problem.intensity_lambda, count, seed, start_index=start, threads=threads)
        if exact is not None:
            exact[rows] = problem.exact_terminal(batch.dW.sum(axis=1), batch.dN.sum(axis=1))
        for k in range(k_max, lowest - 1, -1):
            for s in schemes:
                res = run_scheme_batch(problem, s, batch, check_jcc_first=(start == 0 and k == k_max))
                terminal[s][k][rows] = res.terminal
                aborted[s][rows] |= res.aborted
            if k > lowest:
                batch = batch.coarsen()

    reports = []
    for s in schemes:
        ok = ~aborted[s]
        n_ok = int(ok.sum())
        n_bad = n_paths - n_ok
        if n_ok == 0:
            raise NumericalOverflowError(None, f"every path of scheme {s.value!r} reached a non-finite state")
        for p in p_values:
            errs, ses = [], []
            err_levels = list(range(k_min, k_max + 1))
            for k in err_levels:
                ref = terminal[s][k - 1] if mode == "successive" else exact
                e, se = _lp_mean(terminal[s][k][ok] - ref[ok], p)
                errs.append(e)
                ses.append(se)
            le = LevelErrors(
                p=p,
                levels=err_levels,
                deltas=[problem.horizon_T / 2**k for k in err_levels],
                errors=errs,
                std_errors=ses,
                n_paths=n_paths,
                aborted_paths=n_bad,
            )
            slope, slope_se, degenerate, used = _fit(le, fit_kmin)
            reports.append(ConvergenceReport(
                le, slope, slope_se, scheme_rate(s, p, problem), s, problem.name, degenerate, used
            ))
    return reports
