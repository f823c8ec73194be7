import math

import numpy as np
import pytest

from jumpmil.driver_paths import IteratedIntegrals, SeedSpec, build_grid, sample_batch, sample_fine_path
from jumpmil.errors import InvalidArgumentError, JccError, NumericalOverflowError
from jumpmil.schemes import (
    SchemeKind,
    run_scheme,
    run_scheme_batch,
    step_classical_milstein,
    step_euler,
    step_randomized_milstein,
    step_randomized_milstein_jcc,
)
from jumpmil.sde_problem import (
    Coefficient,
    SdeProblem,
    ZERO,
    builtin_example_sde,
    builtin_linear_jump_diffusion,
    constant,
    linear,
)

NO_INTS = IteratedIntegrals(0.0, 0.0, 0.0, 0.0)


def test_zero_coefficients_leave_state_unchanged():
    prob = SdeProblem(ZERO, ZERO, ZERO, 1.0, 1.0, 1.0)
    ints = IteratedIntegrals(0.3, 1.0, 0.2, -0.1)
    assert step_randomized_milstein(prob, 0.0, 1.3, 0.5, 2.0, ints, 0.1, 0.25) == 1.3
    assert step_euler(prob, 0.0, 1.3, 0.5, 2.0, 0.25) == 1.3


def test_drift_only_step():
    prob = SdeProblem(constant(2.0), ZERO, ZERO, 0.0, 1.0, 0.0)
    assert step_randomized_milstein(prob, 0.0, 0.0, 0.0, 0.0, NO_INTS, 0.05, 0.1) == pytest.approx(0.2)


def test_time_dependent_drift_is_read_at_xi():
    mu = Coefficient(lambda t, y: np.asarray(t, dtype=float) + 0 * y, lambda t, y: 0 * y)
    prob = SdeProblem(mu, ZERO, ZERO, 0.0, 1.0, 0.0)
    assert step_randomized_milstein(prob, 0.0, 0.0, 0.0, 0.0, NO_INTS, 0.08, 0.1) == pytest.approx(0.008)
    assert step_classical_milstein(prob, 0.0, 0.0, 0.0, 0.0, NO_INTS, 0.1) == 0.0
    assert step_euler(prob, 0.0, 0.0, 0.0, 0.0, 0.1, True, 0.08) == pytest.approx(0.008)


def test_linear_jcc_step_closed_form():
    a, b, c = 0.5, 0.2, 0.1
    prob = builtin_linear_jump_diffusion(a, b, c)
    x, dW, dN, delta = 1.7, 0.3, 2.0, 0.125
    i_ww, i_nn = (dW**2 - delta) / 2, dN * (dN - 1) / 2
    want = x * (1 + a * delta + b * dW + c * dN + b * b * i_ww + c * c * i_nn + b * c * dW * dN)
    got = step_randomized_milstein_jcc(prob, 0.0, x, dW, dN, i_ww, i_nn, 0.01, delta)
    assert got == pytest.approx(want, rel=1e-14)


def test_euler_exponential_growth():
    prob = SdeProblem(linear(1.0), ZERO, ZERO, 1.0, 1.0, 0.0)
    path = sample_fine_path(SeedSpec(0, 0), build_grid(1.0, 16), 0.0)
    traj = run_scheme(prob, SchemeKind.EULER_MARUYAMA, path)
    assert abs(traj.terminal - math.e) < 1e-4
    assert traj.values[0] == 1.0
    assert len(traj.values) == 2**16 + 1


def test_jcc_collapse_single_paths():
    prob = builtin_linear_jump_diffusion(0.5, 0.2, 0.1, intensity_lambda=20.0)
    for j in range(20):
        path = sample_fine_path(SeedSpec(8, j), build_grid(1.0, 5), 20.0)
        gen = run_scheme(prob, SchemeKind.RANDOMIZED_MILSTEIN, path).values
        jcc = run_scheme(prob, SchemeKind.RANDOMIZED_MILSTEIN_JCC, path).values
        assert np.all(np.abs(gen - jcc) <= 1e-12 * np.maximum(1.0, np.abs(gen)))


def test_batch_matches_single_path_runs():
    prob = builtin_linear_jump_diffusion(0.5, 0.2, 0.1, intensity_lambda=30.0)
    grid = build_grid(1.0, 6)
    batch = sample_batch(grid, 30.0, 5, 17)
    for scheme in SchemeKind:
        res = run_scheme_batch(prob, scheme, batch)
        for r in range(5):
            path = sample_fine_path(SeedSpec(17, r), grid, 30.0)
            assert res.terminal[r] == pytest.approx(run_scheme(prob, scheme, path).terminal, rel=1e-12)


def test_batch_matches_single_path_first_step_on_example():
    # the M = 100 example amplifies last-bit differences between vectorised and
    # scalar sin/cos, so only the first step is compared
    prob = builtin_example_sde()
    grid = build_grid(1.0, 6)
    batch = sample_batch(grid, 100.0, 5, 17)
    for scheme in SchemeKind:
        vals = run_scheme_batch(prob, scheme, batch, keep_values=True).values
        for r in range(5):
            single = run_scheme(prob, scheme, sample_fine_path(SeedSpec(17, r), grid, 100.0)).values
            assert vals[r, 1] == pytest.approx(single[1], rel=1e-13, abs=1e-15)


def test_time_independent_drift_makes_randomization_irrelevant():
    prob = builtin_linear_jump_diffusion(0.5, 0.2, 0.1, intensity_lambda=5.0)
    batch = sample_batch(build_grid(1.0, 6), 5.0, 200, 3)
    pairs = [
        (SchemeKind.RANDOMIZED_MILSTEIN, SchemeKind.CLASSICAL_MILSTEIN),
        (SchemeKind.RANDOMIZED_EULER, SchemeKind.EULER_MARUYAMA),
    ]
    for rand, det in pairs:
        a = run_scheme_batch(prob, rand, batch, keep_values=True).values
        b = run_scheme_batch(prob, det, batch, keep_values=True).values
        assert np.array_equal(a, b)


def test_additive_noise_collapses_to_euler():
    mu = Coefficient(lambda t, y: np.sin(y) * (1 + np.asarray(t)), lambda t, y: np.cos(y) * (1 + np.asarray(t)))
    prob = SdeProblem(mu, constant(0.4), constant(-0.2), 0.5, 1.0, 10.0)
    batch = sample_batch(build_grid(1.0, 6), 10.0, 100, 4)
    euler = run_scheme_batch(prob, SchemeKind.RANDOMIZED_EULER, batch, keep_values=True).values
    for scheme in (SchemeKind.RANDOMIZED_MILSTEIN, SchemeKind.RANDOMIZED_MILSTEIN_JCC):
        assert np.array_equal(run_scheme_batch(prob, scheme, batch, keep_values=True).values, euler)
    euler = run_scheme_batch(prob, SchemeKind.EULER_MARUYAMA, batch, keep_values=True).values
    assert np.array_equal(run_scheme_batch(prob, SchemeKind.CLASSICAL_MILSTEIN, batch, keep_values=True).values, euler)


def test_overflow_is_tagged():
    prob = builtin_linear_jump_diffusion(1e308, 0.0, 0.0, intensity_lambda=0.0)
    path = sample_fine_path(SeedSpec(0, 0), build_grid(1.0, 3), 0.0)
    with pytest.raises(NumericalOverflowError) as info:
        run_scheme(prob, SchemeKind.EULER_MARUYAMA, path)
    # 1 + 1e308 * 0.125 is still finite; the second step overflows
    assert info.value.step == 1
    res = run_scheme_batch(prob, SchemeKind.EULER_MARUYAMA, sample_batch(build_grid(1.0, 3), 0.0, 4, 0))
    assert res.aborted.all()


def test_horizon_mismatch():
    prob = builtin_linear_jump_diffusion(0.5, 0.2, 0.1, T=2.0)
    path = sample_fine_path(SeedSpec(0, 0), build_grid(1.0, 3), 1.0)
    with pytest.raises(InvalidArgumentError):
        run_scheme(prob, SchemeKind.RANDOMIZED_MILSTEIN, path)


def test_jcc_variant_refuses_non_jcc_problem():
    cos = Coefficient(lambda t, y: np.cos(y), lambda t, y: -np.sin(y))
    prob = SdeProblem(ZERO, cos, constant(1.0), 1.0, 1.0, 1.0)
    path = sample_fine_path(SeedSpec(0, 0), build_grid(1.0, 3), 1.0)
    with pytest.raises(JccError):
        run_scheme(prob, SchemeKind.RANDOMIZED_MILSTEIN_JCC, path)
    # the general scheme still runs
    assert math.isfinite(run_scheme(prob, SchemeKind.RANDOMIZED_MILSTEIN, path).terminal)


def test_randomized_batch_needs_xi():
    prob = builtin_linear_jump_diffusion(0.5, 0.2, 0.1)
    batch = sample_batch(build_grid(1.0, 3), 1.0, 4, 0, keep_xi=False)
    with pytest.raises(InvalidArgumentError):
        run_scheme_batch(prob, SchemeKind.RANDOMIZED_MILSTEIN, batch)


def _max_second_moment(prob, k, n_paths, seed, chunk=2500):
    grid = build_grid(1.0, k)
    total = np.zeros(grid.n + 1)
    for start in range(0, n_paths, chunk):
        batch = sample_batch(grid, prob.intensity_lambda, chunk, seed, start_index=start)
        vals = run_scheme_batch(prob, SchemeKind.RANDOMIZED_MILSTEIN_JCC, batch, keep_values=True).values
        total += np.sum(vals**2, axis=0)
    return float(np.max(total / n_paths))


@pytest.mark.slow
def test_moment_stability_example():
    prob = builtin_example_sde()
    moments = {k: _max_second_moment(prob, k, 10_000, 5) for k in range(4, 13)}
    assert all(math.isfinite(m) for m in moments.values()), moments
    # once lambda * delta < 1 the bound is flat across levels; on the coarser
    # levels each multi-jump cell multiplies the state, so the bound is finite but large
    assert max(moments[k] for k in range(7, 13)) <= 10.0, moments
