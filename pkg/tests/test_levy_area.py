import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from jumpmil.driver_paths import PathPrimitive, SeedSpec, build_grid, sample_batch, sample_fine_path
from jumpmil.errors import DataCorruptionError, InvalidArgumentError
from jumpmil.levy_area import (
    batch_levy_area,
    exact_levy_area,
    left_point_levy_area,
    levy_mse_levels,
    poisson_bridge_mean,
    run_levy_mse_experiment,
    theoretical_left_point_mse,
    theoretical_trapezoid_mse,
    trapezoid_levy_area,
    wiener_increment_conditional_mean,
)


def _hand_path(dW, dN, jump_times, w_at_jumps, k):
    grid = build_grid(1.0, k)
    return PathPrimitive(
        grid, np.array(dW, dtype=float), np.array(dN, dtype=np.int64), np.array(jump_times, dtype=float),
        np.array(w_at_jumps, dtype=float), grid.nodes[:-1].copy(), seed=SeedSpec(0, 0),
    )


def test_zero_jumps_give_zero():
    path = sample_fine_path(SeedSpec(1, 1), build_grid(1.0, 4), 0.0)
    assert exact_levy_area(path) == 0.0
    w, n = path.wiener_nodes(), path.count_nodes()
    assert trapezoid_levy_area(w, n) == 0.0
    assert left_point_levy_area(w, n) == 0.0


def test_single_jump():
    # one jump at 0.6 inside cell [0.5, 1]; bridge value 0.1 above W(0.5)
    path = _hand_path([0.3, -0.2], [0, 1], [0.6], [0.1], 1)
    w_T, w_tau = 0.3 - 0.2, 0.3 + 0.1
    assert exact_levy_area(path) == pytest.approx(w_T - w_tau)


def test_exact_matches_jump_sum_oracle():
    # J = int N dW = sum over jumps of (W(T) - W(tau_j))
    for j in range(10):
        path = sample_fine_path(SeedSpec(21, j), build_grid(1.0, 4), 15.0)
        w_nodes = path.wiener_nodes()
        cells = path.jump_cells
        w_tau = w_nodes[cells] + path.w_at_jumps
        oracle = math.fsum(w_nodes[-1] - w_tau)
        assert exact_levy_area(path) == pytest.approx(oracle, abs=1e-12)


def test_batch_exact_matches_single():
    grid = build_grid(1.0, 4)
    batch = sample_batch(grid, 15.0, 8, 21)
    single = [exact_levy_area(sample_fine_path(SeedSpec(21, j), grid, 15.0)) for j in range(8)]
    np.testing.assert_allclose(batch_levy_area(batch), single, atol=1e-12)


def test_path_without_jump_data_is_rejected():
    with pytest.raises(DataCorruptionError):
        _hand_path([0.3, -0.2], [0, 1], [], [], 1)


def test_levy_area_moments():
    batch = sample_batch(build_grid(1.0, 0), 1.0, 100_000, 13, keep_xi=False)
    J = batch_levy_area(batch)
    se = J.std(ddof=1) / math.sqrt(J.size)
    assert abs(J.mean()) < 3 * se
    sq = J * J
    assert abs(sq.mean() - 5 / 6) < 3 * sq.std(ddof=1) / math.sqrt(sq.size)


def test_trapezoid_examples():
    assert trapezoid_levy_area([0.0, 0.7], [0, 3]) == pytest.approx(0.5 * 0.7 * 3)
    assert trapezoid_levy_area([0, 0.1, -0.4, 0.2], [0, 0, 0, 0]) == 0.0
    w = [0.0, 0.3, -0.1, 0.5]
    m = 2
    assert trapezoid_levy_area(w, [0, m, m, m]) == pytest.approx(m * w[-1] - 0.5 * m * (w[1] - w[0]))


def test_left_point_examples():
    assert left_point_levy_area([0.0, 0.7], [0, 5]) == 0.0
    assert left_point_levy_area([0, 0.1, -0.4], [0, 0, 0]) == 0.0


def test_node_shape_mismatch():
    with pytest.raises(InvalidArgumentError):
        trapezoid_levy_area([0, 1, 2], [0, 1])
    with pytest.raises(InvalidArgumentError):
        left_point_levy_area([0, 1], [0, 1, 1])


def test_theoretical_mse_examples():
    assert theoretical_trapezoid_mse(0.0, 1.0, 5) == 0.0
    assert theoretical_trapezoid_mse(1.0, 1.0, 1) == pytest.approx(1 / 3)
    assert theoretical_trapezoid_mse(100.0, 1.0, 100) == pytest.approx(0.25 + 1 / 12)
    with pytest.raises(InvalidArgumentError):
        theoretical_trapezoid_mse(1.0, 1.0, 0)


def test_left_point_mse_oracle_by_quadrature():
    # integrate lam s + lam^2 s^2 over each cell numerically
    from scipy import integrate

    lam, T, n = 3.0, 2.0, 5
    per_cell, _ = integrate.quad(lambda s: lam * s + lam**2 * s**2, 0.0, T / n)
    assert theoretical_left_point_mse(lam, T, n) == pytest.approx(n * per_cell, rel=1e-12)


@given(
    lam=st.floats(0.01, 100), T=st.floats(0.1, 10), n=st.integers(1, 1000)
)
def test_theoretical_mse_scaling(lam, T, n):
    a = lam * T**2 / (4 * n)
    b = lam**2 * T**3 / (12 * n**2)
    for factor in (1, 2, 4):
        got = theoretical_trapezoid_mse(factor * lam, T, n)
        assert got == pytest.approx(factor * a + factor**2 * b, rel=1e-12)
    assert theoretical_left_point_mse(lam, T, n) > theoretical_trapezoid_mse(lam, T, n)


def test_poisson_bridge_mean_examples():
    assert poisson_bridge_mean(2, 6, 0.0, 1.0, 0.0) == 2
    assert poisson_bridge_mean(2, 6, 0.0, 1.0, 0.5) == 4
    from scipy import integrate

    area, _ = integrate.quad(lambda s: poisson_bridge_mean(2, 6, 0.5, 1.5, s), 0.5, 1.5)
    assert area == pytest.approx(0.5 * (2 + 6) * 1.0)
    with pytest.raises(InvalidArgumentError):
        poisson_bridge_mean(0, 1, 0.0, 1.0, 1.5)


def test_wiener_conditional_mean_examples():
    assert wiener_increment_conditional_mean(0.8, 0.0, 1.0, 0.0, 1.0) == 0.8
    assert wiener_increment_conditional_mean(0.8, 0.25, 0.75, 0.0, 1.0) == pytest.approx(0.4)
    assert wiener_increment_conditional_mean(0.0, 0.2, 0.3, 0.0, 1.0) == 0.0
    with pytest.raises(InvalidArgumentError):
        wiener_increment_conditional_mean(0.8, 0.0, 1.0, 1.0, 1.0)


def test_mse_zero_intensity_exact_zero():
    rep = run_levy_mse_experiment(0.0, 1.0, 3, 200, 0)
    assert rep.empirical_mse == 0.0 and rep.mc_standard_error == 0.0


def test_mse_law_small_sample():
    for trap, left in levy_mse_levels(4.0, 1.0, [1, 3], 20_000, 8):
        assert trap.empirical_mse >= 0 and trap.mc_standard_error >= 0
        assert abs(trap.empirical_mse - trap.theoretical_mse) <= 3 * trap.mc_standard_error
        assert abs(left.empirical_mse - left.theoretical_mse) <= 3 * left.mc_standard_error
        assert left.empirical_mse > trap.empirical_mse


def test_mse_needs_enough_paths():
    with pytest.raises(InvalidArgumentError):
        run_levy_mse_experiment(1.0, 1.0, 2, 50, 0)


def test_trapezoid_residual_orthogonal_to_node_functions():
    lam, k = 5.0, 2
    batch = sample_batch(build_grid(1.0, k), lam, 40_000, 44, keep_xi=False)
    w, n = batch.wiener_nodes(), batch.count_nodes()
    resid = batch_levy_area(batch) - trapezoid_levy_area(w, n)
    for f in (np.tanh(w[:, -1]) * np.cos(n[:, 2]), np.sign(w[:, 1]) / (1 + n[:, -1]), np.minimum(n[:, 1], 3.0)):
        prod = (resid - resid.mean()) * (f - f.mean())
        se = prod.std(ddof=1) / math.sqrt(prod.size)
        assert abs(prod.mean()) < 4 * se
    # the left-point residual is not orthogonal: it correlates with the count increments
    lp = batch_levy_area(batch) - left_point_levy_area(w, n)
    f = (n[:, -1] - n[:, -2]) * np.sign(w[:, -1] - w[:, -2])
    prod = (lp - lp.mean()) * (f - f.mean())
    assert abs(prod.mean()) > 4 * prod.std(ddof=1) / math.sqrt(prod.size)


def test_coarse_nodes_are_fine_node_subsets():
    batch = sample_batch(build_grid(1.0, 4), 10.0, 16, 2)
    w, n = batch.wiener_nodes(), batch.count_nodes()
    coarse = batch.coarsen()
    np.testing.assert_allclose(coarse.wiener_nodes(), w[:, ::2], atol=1e-14)
    np.testing.assert_array_equal(coarse.count_nodes(), n[:, ::2])
