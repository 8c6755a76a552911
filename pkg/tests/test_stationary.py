import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from granflow.dynamics import pde_step
from granflow.measures import GridMeasure, moments
from granflow.potentials import builtin
from granflow.stationary import (
    FixedPointError,
    StationaryState,
    coercivity_diagnostics,
    envelope_holds,
    fit_envelope,
    fixed_point_solve,
    free_energy_change,
    mean_of,
    minimizer_audit,
    state_from_measure,
    stationarity_residual,
    translate,
)
from granflow.transport import translation_map, wasserstein2

GRID = (-10.0, 10.0, 400)
DX = 20.0 / 400
Z = builtin("zero")
Q = builtin("quadratic")
CUBIC = builtin("cubic_abs")


@pytest.fixture(scope="module")
def cubic_state():
    return fixed_point_solve(Z, CUBIC, GRID, pin_mean=0.0, tol=1e-11)


def std_normal():
    return GridMeasure.gaussian(0, 1, *GRID)


# -- fixed point


def test_quadratic_confinement_gives_gaussian():
    s = fixed_point_solve(Q, Z, GRID)
    assert wasserstein2(s.mu, std_normal()) < 2 * DX
    assert s.residual_inf < 1e-6
    assert s.pinned_mean is None


def test_quadratic_interaction_self_consistency():
    # moment iteration: W * mu = x^2/2 - m x + const, so the Gibbs state is N(m, 1)
    # and the pinned mean selects m = 0
    s = fixed_point_solve(Z, Q, GRID, pin_mean=0.0)
    assert wasserstein2(s.mu, std_normal()) < 2 * DX
    mean, second = moments(s.mu)
    assert abs(mean) < 1e-10
    assert second == pytest.approx(1.0, abs=1e-3)


def test_cubic_pinned_state(cubic_state):
    s = cubic_state
    assert s.residual_inf < 1e-6
    np.testing.assert_allclose(s.mu.density, s.mu.density[::-1], atol=1e-12)
    assert abs(mean_of(s)) < 1e-12
    assert s.mu.is_normalized(1e-12)


def test_fixed_point_argument_errors():
    with pytest.raises(ValueError):
        fixed_point_solve(Z, CUBIC, GRID)
    with pytest.raises(ValueError):
        fixed_point_solve(Q, Z, GRID, damping=0.0)
    with pytest.raises(ValueError):
        fixed_point_solve(Q, Z, GRID, init=GridMeasure.gaussian(0, 1, -5, 5, 100))
    with pytest.raises(FixedPointError):
        fixed_point_solve(Q, CUBIC, GRID, max_iter=3)


def test_solver_output_is_dynamic_fixed_point(cubic_state):
    dt = 1e-3
    out = pde_step(cubic_state.mu, Z, CUBIC, dt)
    assert np.sum(np.abs(out.density - cubic_state.mu.density)) * DX < 1e-6 * dt


def test_translation_family(cubic_state):
    m = 1.3
    moved = fixed_point_solve(Z, CUBIC, GRID, pin_mean=m)
    shifted = cubic_state.mu.with_density(translate(cubic_state.mu.density, m, DX))
    assert wasserstein2(moved.mu, shifted) < 2 * DX
    assert mean_of(moved) == pytest.approx(m, abs=1e-10)


def test_uniqueness_for_convex_case():
    lo, hi, m = GRID
    inits = [GridMeasure.gaussian(0, 0.3, lo, hi, m), GridMeasure.uniform(-4, 1, lo, hi, m),
             GridMeasure.mixture([(0.5, GridMeasure.gaussian(-3, 0.5, lo, hi, m)),
                                  (0.5, GridMeasure.gaussian(2, 1, lo, hi, m))])]
    V = builtin("quadratic", [0.5])
    states = [fixed_point_solve(V, CUBIC, GRID, init=i) for i in inits]
    for a in states:
        for b in states:
            assert wasserstein2(a.mu, b.mu) < 5 * DX


def test_non_convex_outputs_are_stationary():
    lo, hi, m = GRID
    V = builtin("double_well", [1.0])
    tol = 1e-6
    for c in (-1.0, 0.0, 1.0):
        s = fixed_point_solve(V, CUBIC, GRID, init=GridMeasure.gaussian(c, 0.4, lo, hi, m))
        assert stationarity_residual(s, V, CUBIC) < tol


# -- residual


def test_residual_idempotent(cubic_state):
    assert stationarity_residual(cubic_state, Z, CUBIC) == pytest.approx(cubic_state.residual_inf, abs=1e-12)
    assert cubic_state.residual_inf < 1e-6


def test_residual_of_exact_gibbs_density():
    mu = GridMeasure.from_function(lambda x: np.exp(-x * x / 2) / np.sqrt(2 * np.pi), *GRID)
    assert stationarity_residual(state_from_measure(mu, Q, Z), Q, Z) < 1e-8


def test_residual_of_perturbed_state():
    s = fixed_point_solve(Q, Z, GRID)
    bumped = s.mu.with_density(s.mu.density * (1 + 0.01 * np.sin(s.mu.centers))).normalize()
    assert stationarity_residual(state_from_measure(bumped, Q, Z), Q, Z) > 1e-3


def test_lambda_is_weighted_gibbs_constant():
    # log rho + V + W * rho for the Gaussian equals -log sqrt(2 pi) exactly
    mu = GridMeasure.from_function(lambda x: np.exp(-x * x / 2) / np.sqrt(2 * np.pi), *GRID)
    assert state_from_measure(mu, Q, Z).lambda_mult == pytest.approx(-0.5 * np.log(2 * np.pi), abs=1e-8)


# -- minimizer audit


def test_audit_confined_gaussian():
    s = fixed_point_solve(Q, Z, GRID)
    assert minimizer_audit(s, Q, Z, 100, seed=1)


def test_audit_cubic_pinned(cubic_state):
    assert minimizer_audit(cubic_state, Z, CUBIC, 200, seed=0)


def test_audit_detects_shifted_state():
    s = fixed_point_solve(Q, Z, GRID)
    moved = s.mu.with_density(translate(s.mu.density, 1.0, DX))
    assert not minimizer_audit(StationaryState(moved, 0.0, 0.0, 0), Q, Z, 60, seed=0)
    assert free_energy_change(moved, translation_map(-1.0), Q, Z) < 0


# -- coercivity


def test_coercivity_case_i_cubic():
    r = coercivity_diagnostics(Z, CUBIC, "i")
    assert r.holds and r.b > 0
    x = np.linspace(-10, 10, 2001)
    assert envelope_holds(np.abs(x) ** 3, x * x, r.b, r.b_prime)


def test_coercivity_case_iii_quadratic():
    r = coercivity_diagnostics(Q, CUBIC, "iii")
    assert r.holds
    assert r.a == pytest.approx(0.5, abs=1e-12)
    assert r.a_prime == pytest.approx(0.0, abs=1e-12)


def test_coercivity_case_ii_pseudo_huber():
    r = coercivity_diagnostics(builtin("pseudo_huber"), Q, "ii")
    assert r.holds and r.a >= 1.0
    x = np.linspace(-10, 10, 2001)
    assert envelope_holds(np.sqrt(1 + x * x), np.abs(x), 1.0, 0.0)


def test_coercivity_case_iv_reports_unverified():
    r = coercivity_diagnostics(Q, builtin("gauss_well", [0.1]), "iv")
    assert r.holds
    assert "not verified" in r.notes
    with pytest.raises(ValueError):
        coercivity_diagnostics(Q, Z, "v")


def test_coercivity_case_i_needs_zero_confinement():
    assert not coercivity_diagnostics(Q, CUBIC, "i").holds


# -- properties


@settings(max_examples=40, deadline=None)
@given(st.floats(-2, 2))
def test_translate_moves_mean_exactly(shift):
    mu = GridMeasure.gaussian(0.2, 0.7, *GRID)
    out = mu.with_density(translate(mu.density, shift, DX))
    assert moments(out)[0] == pytest.approx(moments(mu)[0] + shift, abs=1e-10)
    assert out.mass == pytest.approx(1.0, abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(0.1, 5.0), min_size=5, max_size=50))
def test_fitted_envelope_holds(vals):
    x = np.linspace(-3, 3, len(vals))
    f = np.asarray(vals) * (1 + x * x)
    slope, intercept = fit_envelope(f, x * x, x)
    assert intercept >= 0
    assert envelope_holds(f, x * x, slope, intercept)
