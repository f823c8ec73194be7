"""Scalar jump-diffusion problems dX = mu dt + sigma dW + rho dN.

Coefficients are numpy-vectorised callables ``f(t, y)`` with an analytic
spatial derivative. ``t`` may be a scalar or an array broadcastable to ``y``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import InvalidArgumentError, JccError

Fn = Callable[..., np.ndarray]


@dataclass(frozen=True)
class Coefficient:
    value: Fn
    deriv_y: Fn
    hoelder_exponent: float = 1.0

    def __post_init__(self):
        if not 0 < self.hoelder_exponent <= 1:
            raise InvalidArgumentError(f"Hoelder exponent must lie in (0, 1], got {self.hoelder_exponent}")

    def __call__(self, t, y):
        return self.value(t, y)


def constant(c: float, hoelder_exponent: float = 1.0) -> Coefficient:
    return Coefficient(
        lambda t, y: np.full_like(np.asarray(y, dtype=float), c),
        lambda t, y: np.zeros_like(np.asarray(y, dtype=float)),
        hoelder_exponent,
    )


def linear(slope: float, hoelder_exponent: float = 1.0) -> Coefficient:
    return Coefficient(
        lambda t, y: slope * np.asarray(y, dtype=float),
        lambda t, y: np.full_like(np.asarray(y, dtype=float), slope),
        hoelder_exponent,
    )


ZERO = constant(0.0)


@dataclass(frozen=True)
class SdeProblem:
    mu: Coefficient
    sigma: Coefficient
    rho: Coefficient
    x0: float
    horizon_T: float
    intensity_lambda: float
    exact_terminal: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None
    name: str = "custom"
    params: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not (self.horizon_T > 0 and math.isfinite(self.horizon_T)):
            raise InvalidArgumentError("horizon must be positive")
        if not (self.intensity_lambda >= 0 and math.isfinite(self.intensity_lambda)):
            raise InvalidArgumentError("intensity must be non-negative")
        if not math.isfinite(self.x0):
            raise InvalidArgumentError("initial value must be finite")

    @property
    def exponents(self) -> tuple[float, float, float]:
        return (self.mu.hoelder_exponent, self.sigma.hoelder_exponent, self.rho.hoelder_exponent)


def l1_apply(f: Coefficient, sigma: Coefficient, t, y):
    """sigma(t, y) * f'_y(t, y)."""
    return sigma.value(t, y) * f.deriv_y(t, y)


def lm1_apply(f: Coefficient, rho: Coefficient, t, y):
    """f(t, y + rho(t, y)) - f(t, y)."""
    return f.value(t, y + rho.value(t, y)) - f.value(t, y)


@dataclass(frozen=True)
class JccReport:
    max_abs_residual: float
    sample_count: int
    passed: bool
    tolerance: float


def check_jcc(
    problem: SdeProblem,
    t_samples: int = 41,
    y_samples: int = 201,
    y_range: tuple[float, float] = (-5.0, 5.0),
    tolerance: float = 1e-9,
) -> JccReport:
    """Check L_{-1} sigma == L_1 rho on a (t, y) lattice over [0, T] x y_range."""
    if t_samples < 1 or y_samples < 1:
        raise InvalidArgumentError("sample counts must be positive")
    if not tolerance > 0:
        raise InvalidArgumentError("tolerance must be positive")
    lo, hi = y_range
    if not lo < hi:
        raise InvalidArgumentError(f"empty y range {y_range!r}")
    t = np.linspace(0.0, problem.horizon_T, t_samples)[:, None]
    y = np.linspace(lo, hi, y_samples)[None, :]
    resid = np.abs(lm1_apply(problem.sigma, problem.rho, t, y) - l1_apply(problem.rho, problem.sigma, t, y))
    worst = float(np.max(resid))
    return JccReport(worst, t_samples * y_samples, bool(worst <= tolerance), tolerance)


def builtin_example_sde(
    M: float = 100.0, rho1: float = 0.1, rho2: float = 0.6, intensity_lambda: float = 100.0
) -> SdeProblem:
    """Nonlinear benchmark with time-irregular drift and JCC-compatible jumps.

    mu = sin(M y (1+t)^rho1), sigma = cos(M y (1+t)^rho2),
    rho = -y + pi / (2 M (1+t)^rho2), X(0) = 1 on [0, 1].
    """
    if M == 0:
        raise InvalidArgumentError("M must be non-zero")
    for r in (rho1, rho2):
        if not 0 < r <= 1:
            raise InvalidArgumentError(f"exponent must lie in (0, 1], got {r}")

    def scale(t, r):
        return M * (1.0 + np.asarray(t, dtype=float)) ** r

    mu = Coefficient(
        lambda t, y: np.sin(scale(t, rho1) * y),
        lambda t, y: scale(t, rho1) * np.cos(scale(t, rho1) * y),
        rho1,
    )
    sigma = Coefficient(
        lambda t, y: np.cos(scale(t, rho2) * y),
        lambda t, y: -scale(t, rho2) * np.sin(scale(t, rho2) * y),
        rho2,
    )
    rho = Coefficient(
        lambda t, y: -np.asarray(y, dtype=float) + np.pi / (2.0 * scale(t, rho2)),
        lambda t, y: np.full_like(np.asarray(y, dtype=float), -1.0),
        rho2,
    )
    return SdeProblem(
        mu, sigma, rho, x0=1.0, horizon_T=1.0, intensity_lambda=float(intensity_lambda),
        name="example", params={"M": M, "rho1": rho1, "rho2": rho2, "lambda": intensity_lambda},
    )


def builtin_linear_jump_diffusion(
    a: float, b: float, c: float, x0: float = 1.0, T: float = 1.0, intensity_lambda: float = 1.0
) -> SdeProblem:
    """dX = aX dt + bX dW + cX- dN, solved by x0 exp((a - b^2/2)T + b W_T) (1+c)^N_T."""
    if c < -1:
        raise InvalidArgumentError("c must be >= -1")

    def exact(w_T, n_T):
        w_T = np.asarray(w_T, dtype=float)
        n_T = np.asarray(n_T)
        return x0 * np.exp((a - 0.5 * b * b) * T + b * w_T) * np.power(1.0 + c, n_T)

    return SdeProblem(
        linear(a), linear(b), linear(c), x0=float(x0), horizon_T=float(T),
        intensity_lambda=float(intensity_lambda), exact_terminal=exact, name="linear",
        params={"a": a, "b": b, "c": c, "x0": x0, "T": T, "lambda": intensity_lambda},
    )


def builtin_jcc_family(
    F: Fn,
    alpha: Fn,
    beta: Fn,
    gamma: Fn,
    *,
    F_prime: Fn,
    mu: Coefficient = ZERO,
    x0: float = 1.0,
    horizon_T: float = 1.0,
    intensity_lambda: float = 1.0,
    sigma_exponent: float = 1.0,
    rho_exponent: float = 1.0,
    name: str = "jcc-family",
    params: dict | None = None,
) -> SdeProblem:
    """sigma(t, y) = F(alpha(t) y + beta(t)) and rho(t, y) = -y + gamma(t).

    JCC holds when F vanishes at alpha(t) gamma(t) + beta(t) for every t, since
    then both sides of the condition equal -sigma(t, y). That is verified
    numerically; a violation raises :class:`JccError`.
    """

    def arg(t, y):
        return alpha(t) * y + beta(t)

    sigma = Coefficient(
        lambda t, y: F(arg(t, y)),
        lambda t, y: alpha(t) * F_prime(arg(t, y)),
        sigma_exponent,
    )
    rho = Coefficient(
        lambda t, y: -np.asarray(y, dtype=float) + gamma(t),
        lambda t, y: np.full_like(np.asarray(y, dtype=float), -1.0),
        rho_exponent,
    )
    problem = SdeProblem(
        mu, sigma, rho, x0=float(x0), horizon_T=float(horizon_T),
        intensity_lambda=float(intensity_lambda), name=name, params=params or {},
    )
    report = check_jcc(problem)
    if not report.passed:
        raise JccError(f"JCC violated: max residual {report.max_abs_residual:.3e}")
    return problem


def example_jcc_family(
    M: float = 100.0, rho1: float = 0.1, rho2: float = 0.6, intensity_lambda: float = 100.0
) -> SdeProblem:
    """The nonlinear benchmark rebuilt through the family with F = sin.

    sin(x + pi/2) = cos(x), so beta = pi/2 and the zero of F sits at pi.
    """
    base = builtin_example_sde(M, rho1, rho2, intensity_lambda)

    def alpha(t):
        return M * (1.0 + np.asarray(t, dtype=float)) ** rho2

    return builtin_jcc_family(
        np.sin,
        alpha,
        lambda t: np.pi / 2 + 0.0 * np.asarray(t, dtype=float),
        lambda t: np.pi / (2.0 * alpha(t)),
        F_prime=np.cos,
        mu=base.mu,
        x0=1.0,
        horizon_T=1.0,
        intensity_lambda=intensity_lambda,
        sigma_exponent=rho2,
        rho_exponent=rho2,
        params=dict(base.params),
    )


@dataclass(frozen=True)
class CoefficientDiagnostics:
    lipschitz: float
    deriv_lipschitz: float
    hoelder_quotient: float
    l1_lipschitz: float | None = None


@dataclass(frozen=True)
class AssumptionReport:
    """Observed constants on a finite lattice. Not a proof of anything."""

    coefficients: dict
    t_points: int
    y_points: int
    y_range: tuple


def _lipschitz_y(fn, t, y):
    vals = fn(t, y)
    vals = np.broadcast_to(vals, np.broadcast(t, y).shape)
    return float(np.max(np.abs(np.diff(vals, axis=1)) / np.diff(y, axis=1)))


def spot_check_assumptions(
    problem: SdeProblem,
    t_points: int = 21,
    y_points: int = 101,
    y_range: tuple[float, float] = (-5.0, 5.0),
) -> AssumptionReport:
    t = np.linspace(0.0, problem.horizon_T, t_points)[:, None]
    y = np.linspace(y_range[0], y_range[1], y_points)[None, :]
    ia, ib = np.triu_indices(t_points, k=1)
    out = {}
    for name in ("mu", "sigma", "rho"):
        f = getattr(problem, name)
        vals = np.broadcast_to(f(t, y), (t_points, y_points))
        gaps = np.abs(t[ib, 0] - t[ia, 0])[:, None] ** f.hoelder_exponent
        quot = np.abs(vals[ib] - vals[ia]) / ((1.0 + np.abs(y)) * gaps)
        l1 = None
        if name != "mu":
            l1 = _lipschitz_y(lambda tt, yy: l1_apply(f, problem.sigma, tt, yy), t, y)
        out[name] = CoefficientDiagnostics(
            lipschitz=_lipschitz_y(f.value, t, y),
            deriv_lipschitz=_lipschitz_y(f.deriv_y, t, y),
            hoelder_quotient=float(np.max(quot)) if quot.size else 0.0,
            l1_lipschitz=l1,
        )
    return AssumptionReport(out, t_points, y_points, tuple(y_range))


def derivative_mismatch(
    problem: SdeProblem,
    n_points: int = 100,
    step: float = 1e-5,
    y_range: tuple[float, float] = (-5.0, 5.0),
    seed: int = 0,
) -> dict[str, float]:
    """Normwise relative gap between ``deriv_y`` and central differences.

    Returns max|d - fd| / max|d| per coefficient at random points, with the
    denominator floored at 1.
    """
    rng = np.random.default_rng(seed)
    t = rng.uniform(0.0, problem.horizon_T, n_points)
    y = rng.uniform(*y_range, n_points)
    out = {}
    for name in ("mu", "sigma", "rho"):
        f = getattr(problem, name)
        d = np.broadcast_to(f.deriv_y(t, y), y.shape)
        fd = (f(t, y + step) - f(t, y - step)) / (2.0 * step)
        out[name] = float(np.max(np.abs(d - fd)) / max(1.0, float(np.max(np.abs(d)))))
    return out
