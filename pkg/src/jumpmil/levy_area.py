"""Jump-diffusion Levy area J(N, W) = int_0^T N(t) dW(t) and its discretisations.

The pathwise value is exact given the simulated jump times and bridge values:
J = sum_i N(t_i) dW_i + I_{t_i, t_{i+1}}(N, W), so only floating-point
rounding separates it from the true integral.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .driver_paths import PathBatch, PathPrimitive, build_grid, path_iterated_integrals, sample_batch
from .errors import InvalidArgumentError


@dataclass(frozen=True)
class LevyAreaSample:
    exact: float
    trapezoid: float
    left_point: float
    level_k: int


@dataclass(frozen=True)
class MseReport:
    empirical_mse: float
    theoretical_mse: float
    mc_standard_error: float
    n_paths: int
    level_k: int | None = None
    method: str = "trapezoid"


def exact_levy_area(path: PathPrimitive) -> float:
    if path.jump_times.size != int(path.dN.sum()):
        raise InvalidArgumentError("path lacks within-cell jump data")
    ints = path_iterated_integrals(path)
    n_left = path.count_nodes()[:-1].astype(float)
    return float(np.sum(n_left * path.dW + ints.i_nw))


def batch_levy_area(batch: PathBatch) -> np.ndarray:
    """Exact J for every row of a batch, from increments and I(N,W)."""
    n_left = batch.count_nodes()[:, :-1].astype(float)
    return np.sum(n_left * batch.dW + batch.i_nw, axis=1)


def _node_arrays(w_nodes, n_nodes):
    w = np.asarray(w_nodes, dtype=float)
    n = np.asarray(n_nodes, dtype=float)
    if w.shape != n.shape:
        raise InvalidArgumentError(f"node arrays differ in shape: {w.shape} vs {n.shape}")
    if w.shape[-1] < 2:
        raise InvalidArgumentError("need at least two nodes")
    return w, n


def trapezoid_levy_area(w_nodes, n_nodes):
    """sum_i (W_{i+1} - W_i) (N_{i+1} + N_i) / 2, along the last axis."""
    w, n = _node_arrays(w_nodes, n_nodes)
    return 0.5 * np.sum(np.diff(w, axis=-1) * (n[..., 1:] + n[..., :-1]), axis=-1)


def left_point_levy_area(w_nodes, n_nodes):
    w, n = _node_arrays(w_nodes, n_nodes)
    return np.sum(np.diff(w, axis=-1) * n[..., :-1], axis=-1)


def theoretical_trapezoid_mse(lam: float, T: float, n: int) -> float:
    if n < 1:
        raise InvalidArgumentError("n must be >= 1")
    return lam * T**2 / (4 * n) + lam**2 * T**3 / (12 * n**2)


def theoretical_left_point_mse(lam: float, T: float, n: int) -> float:
    # per cell: int_0^delta (lam s + lam^2 s^2) ds
    if n < 1:
        raise InvalidArgumentError("n must be >= 1")
    return lam * T**2 / (2 * n) + lam**2 * T**3 / (3 * n**2)


def poisson_bridge_mean(n_left, n_right, t_left, t_right, s):
    """E[N(s) | N(t_left), N(t_right)]: linear interpolation of the counts."""
    if not t_left < t_right:
        raise InvalidArgumentError("degenerate interval")
    if not t_left <= s <= t_right:
        raise InvalidArgumentError(f"s={s} outside [{t_left}, {t_right}]")
    return (n_right * (s - t_left) + n_left * (t_right - s)) / (t_right - t_left)


def wiener_increment_conditional_mean(dW_cell, sub_left, sub_right, t_left, t_right):
    if not t_left < t_right:
        raise InvalidArgumentError("degenerate cell")
    if not t_left <= sub_left <= sub_right <= t_right:
        raise InvalidArgumentError("sub-interval not inside the cell")
    return dW_cell * (sub_right - sub_left) / (t_right - t_left)


def _mse(err, theoretical, level_k, method):
    sq = err * err
    n = sq.size
    se = float(np.std(sq, ddof=1) / np.sqrt(n)) if n > 1 else 0.0
    return MseReport(float(np.mean(sq)), theoretical, se, n, level_k, method)


def levy_mse_levels(
    lam: float,
    T: float,
    levels,
    n_paths: int,
    seed: int,
    *,
    threads: int = 1,
) -> list[tuple[MseReport, MseReport]]:
    """Trapezoid and left-point MSE at several levels from one coupled sample.

    Paths are drawn at the finest level; coarser node values are subsets of the
    fine ones. Returns ``(trapezoid, left_point)`` reports in the order of
    ``levels``.
    """
    if n_paths < 100:
        raise InvalidArgumentError("need at least 100 paths")
    levels = [int(k) for k in levels]
    if not levels or min(levels) < 0:
        raise InvalidArgumentError("levels must be non-negative")
    finest = max(levels)
    batch = sample_batch(build_grid(T, finest), lam, n_paths, seed, threads=threads, keep_xi=False)
    exact = batch_levy_area(batch)
    w_fine = batch.wiener_nodes()
    n_fine = batch.count_nodes()
    out = []
    for k in levels:
        stride = 1 << (finest - k)
        w, n = w_fine[:, ::stride], n_fine[:, ::stride]
        cells = 1 << k
        trap = _mse(exact - trapezoid_levy_area(w, n), theoretical_trapezoid_mse(lam, T, cells), k, "trapezoid")
        left = _mse(exact - left_point_levy_area(w, n), theoretical_left_point_mse(lam, T, cells), k, "left-point")
        out.append((trap, left))
    return out


def run_levy_mse_experiment(lam: float, T: float, level_k: int, n_paths: int, seed: int, *, threads: int = 1) -> MseReport:
    return levy_mse_levels(lam, T, [level_k], n_paths, seed, threads=threads)[0][0]
