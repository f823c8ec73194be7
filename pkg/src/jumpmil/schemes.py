"""One-step maps and drivers for the Euler and Milstein families.

Every step function works elementwise, so the same code advances a single
path (scalars) or a whole batch of paths (arrays of equal shape). Terms are
always added in the order drift, diffusion, jump, then the four corrections.

The general randomized Milstein step consumes I(N,W) and I(W,N), which need
the jump times inside each cell. That information is simulated here; under the
jump-commutativity condition the JCC variant needs only node values.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .driver_paths import Grid, IteratedIntegrals, PathBatch, PathPrimitive, path_iterated_integrals
from .errors import InvalidArgumentError, JccError, NumericalOverflowError
from .sde_problem import SdeProblem, check_jcc, l1_apply, lm1_apply


class SchemeKind(enum.Enum):
    EULER_MARUYAMA = "euler"
    RANDOMIZED_EULER = "rand-euler"
    CLASSICAL_MILSTEIN = "milstein"
    RANDOMIZED_MILSTEIN = "rand-milstein"
    RANDOMIZED_MILSTEIN_JCC = "rand-milstein-jcc"

    @property
    def randomized(self) -> bool:
        return self in (SchemeKind.RANDOMIZED_EULER, SchemeKind.RANDOMIZED_MILSTEIN,
                        SchemeKind.RANDOMIZED_MILSTEIN_JCC)

    @property
    def needs_jump_integrals(self) -> bool:
        return self in (SchemeKind.CLASSICAL_MILSTEIN, SchemeKind.RANDOMIZED_MILSTEIN)


@dataclass(frozen=True)
class Trajectory:
    grid: Grid
    values: np.ndarray

    @property
    def terminal(self) -> float:
        return float(self.values[-1])


def step_randomized_milstein(problem: SdeProblem, t_i, x_i, dW, dN, integrals: IteratedIntegrals, xi_i, delta):
    mu, sigma, rho = problem.mu, problem.sigma, problem.rho
    return (
        x_i
        + mu(xi_i, x_i) * delta
        + sigma(t_i, x_i) * dW
        + rho(t_i, x_i) * dN
        + l1_apply(sigma, sigma, t_i, x_i) * integrals.i_ww
        + lm1_apply(rho, rho, t_i, x_i) * integrals.i_nn
        + lm1_apply(sigma, rho, t_i, x_i) * integrals.i_nw
        + l1_apply(rho, sigma, t_i, x_i) * integrals.i_wn
    )


def step_classical_milstein(problem: SdeProblem, t_i, x_i, dW, dN, integrals: IteratedIntegrals, delta):
    return step_randomized_milstein(problem, t_i, x_i, dW, dN, integrals, t_i, delta)


def step_randomized_milstein_jcc(problem: SdeProblem, t_i, x_i, dW, dN, i_ww, i_nn, xi_i, delta):
    """Milstein step using node information only; valid when JCC holds."""
    mu, sigma, rho = problem.mu, problem.sigma, problem.rho
    return (
        x_i
        + mu(xi_i, x_i) * delta
        + sigma(t_i, x_i) * dW
        + rho(t_i, x_i) * dN
        + l1_apply(sigma, sigma, t_i, x_i) * i_ww
        + lm1_apply(rho, rho, t_i, x_i) * i_nn
        + lm1_apply(sigma, rho, t_i, x_i) * (dW * dN)
    )


def step_euler(problem: SdeProblem, t_i, x_i, dW, dN, delta, randomized=False, xi_i=None):
    tau = xi_i if randomized else t_i
    return (
        x_i
        + problem.mu(tau, x_i) * delta
        + problem.sigma(t_i, x_i) * dW
        + problem.rho(t_i, x_i) * dN
    )


def _require_jcc(problem: SdeProblem) -> None:
    report = check_jcc(problem)
    if not report.passed:
        raise JccError(
            f"problem {problem.name!r} fails JCC (max residual {report.max_abs_residual:.3e}); "
            "use rand-milstein instead"
        )


def _check_horizon(problem: SdeProblem, grid: Grid) -> None:
    if not np.isclose(grid.horizon_T, problem.horizon_T, rtol=1e-12, atol=0.0):
        raise InvalidArgumentError(
            f"path horizon {grid.horizon_T} does not match problem horizon {problem.horizon_T}"
        )


def _stepper(problem, scheme, delta):
    if scheme is SchemeKind.EULER_MARUYAMA:
        return lambda t, x, dW, dN, ints, xi: step_euler(problem, t, x, dW, dN, delta)
    if scheme is SchemeKind.RANDOMIZED_EULER:
        return lambda t, x, dW, dN, ints, xi: step_euler(problem, t, x, dW, dN, delta, True, xi)
    if scheme is SchemeKind.CLASSICAL_MILSTEIN:
        return lambda t, x, dW, dN, ints, xi: step_classical_milstein(problem, t, x, dW, dN, ints, delta)
    if scheme is SchemeKind.RANDOMIZED_MILSTEIN:
        return lambda t, x, dW, dN, ints, xi: step_randomized_milstein(problem, t, x, dW, dN, ints, xi, delta)
    if scheme is SchemeKind.RANDOMIZED_MILSTEIN_JCC:
        return lambda t, x, dW, dN, ints, xi: step_randomized_milstein_jcc(
            problem, t, x, dW, dN, ints.i_ww, ints.i_nn, xi, delta
        )
    raise InvalidArgumentError(f"unknown scheme {scheme!r}")


def run_scheme(problem: SdeProblem, scheme: SchemeKind, path: PathPrimitive) -> Trajectory:
    """Fold the one-step map of ``scheme`` over every cell of ``path``."""
    scheme = SchemeKind(scheme)
    grid = path.grid
    _check_horizon(problem, grid)
    if scheme is SchemeKind.RANDOMIZED_MILSTEIN_JCC:
        _require_jcc(problem)
    ints = path_iterated_integrals(path)
    step = _stepper(problem, scheme, grid.delta)
    nodes = grid.nodes
    values = np.empty(grid.n + 1)
    values[0] = x = problem.x0
    for i in range(grid.n):
        cell_ints = IteratedIntegrals(ints.i_ww[i], ints.i_nn[i], ints.i_nw[i], ints.i_wn[i])
        with np.errstate(all="ignore"):
            x = float(step(nodes[i], x, path.dW[i], float(path.dN[i]), cell_ints, path.xi[i]))
        if not np.isfinite(x):
            raise NumericalOverflowError(i)
        values[i + 1] = x
    values.setflags(write=False)
    return Trajectory(grid, values)


@dataclass(frozen=True)
class BatchResult:
    terminal: np.ndarray
    aborted: np.ndarray
    values: np.ndarray | None = None


def run_scheme_batch(
    problem: SdeProblem,
    scheme: SchemeKind,
    batch: PathBatch,
    *,
    keep_values: bool = False,
    check_jcc_first: bool = True,
) -> BatchResult:
    """Advance every path of ``batch`` at once.

    Paths that hit a non-finite state are flagged in ``aborted`` instead of
    raising, so the caller can count them.
    """
    scheme = SchemeKind(scheme)
    grid = batch.grid
    _check_horizon(problem, grid)
    if scheme is SchemeKind.RANDOMIZED_MILSTEIN_JCC and check_jcc_first:
        _require_jcc(problem)
    if scheme.randomized and batch.xi is None:
        raise InvalidArgumentError("randomized schemes need randomization points")
    step = _stepper(problem, scheme, grid.delta)
    nodes = grid.nodes
    P = batch.n_paths
    dN = batch.dN.astype(float)
    i_ww, i_nn = batch.i_ww, batch.i_nn
    x = np.full(P, float(problem.x0))
    aborted = np.zeros(P, dtype=bool)
    values = None
    if keep_values:
        values = np.empty((P, grid.n + 1))
        values[:, 0] = x
    with np.errstate(all="ignore"):
        for i in range(grid.n):
            ints = IteratedIntegrals(i_ww[:, i], i_nn[:, i], batch.i_nw[:, i], batch.i_wn[:, i])
            xi = batch.xi[:, i] if batch.xi is not None else None
            x = step(nodes[i], x, batch.dW[:, i], dN[:, i], ints, xi)
            aborted |= ~np.isfinite(x)
            if values is not None:
                values[:, i + 1] = x
    return BatchResult(x, aborted, values)
