import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from granflow.dynamics import (
    SolverConfig,
    SolverError,
    bernoulli,
    coupled_dissipation_run,
    mean_field_force,
    particle_solve,
    particle_step,
    pde_solve,
    pde_step,
)
from granflow.measures import GridMeasure, ParticleEnsemble, moments, sample_from_grid
from granflow.potentials import builtin
from granflow.stationary import fixed_point_solve
from granflow.transport import wasserstein2, wasserstein2_empirical

LO, HI, M = -10.0, 10.0, 400
Z = builtin("zero")
Q = builtin("quadratic")
CUBIC = builtin("cubic_abs")


def gauss(m=0.0, s=1.0, lo=LO, hi=HI, n=M):
    return GridMeasure.gaussian(m, s, lo, hi, n)


def variance(mu):
    mean, second = moments(mu)
    return second - mean * mean


# -- configuration


def test_solver_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(dt=0, t_end=1)
    with pytest.raises(ValueError):
        SolverConfig(dt=1e-3, t_end=1, record_every=0)
    with pytest.raises(ValueError):
        SolverConfig(dt=1e-3, t_end=1, scheme="leapfrog")
    cfg = SolverConfig(dt=1e-2, t_end=1, scheme="explicit")
    with pytest.raises(ValueError):
        cfg.check_grid(0.05)
    SolverConfig(dt=1e-3, t_end=1, scheme="explicit").check_grid(0.05)


def test_bernoulli_identities():
    z = np.array([-800.0, -30, -1, -1e-9, 0, 1e-9, 1, 30, 800])
    b = bernoulli(z)
    assert np.all(b >= 0)
    assert bernoulli(np.array([0.0]))[0] == 1.0
    # B(-z) = B(z) + z
    np.testing.assert_allclose(bernoulli(-z[1:-1]), b[1:-1] + z[1:-1], rtol=1e-12, atol=1e-12)


# -- single steps


def test_heat_kernel_variance():
    mu = gauss(0, 1)
    rec = pde_solve(mu, Z, Z, SolverConfig(dt=1e-3, t_end=1.0, record_every=100))
    assert variance(rec.final) == pytest.approx(1 + 2 * 1.0, rel=0.01)


def test_ornstein_uhlenbeck_moments():
    m0, s0 = 1.0, 0.5
    rec = pde_solve(gauss(m0, s0), Q, Z, SolverConfig(dt=1e-3, t_end=1.0, record_every=100))
    mean = moments(rec.final)[0]
    assert mean == pytest.approx(m0 * np.exp(-1), rel=0.01)
    assert variance(rec.final) == pytest.approx(1 + (s0**2 - 1) * np.exp(-2), rel=0.01)


def test_stationary_input_is_fixed():
    s = fixed_point_solve(Q, CUBIC, (LO, HI, M), tol=1e-12)
    dt = 1e-3
    out = pde_step(s.mu, Q, CUBIC, dt)
    assert np.sum(np.abs(out.density - s.mu.density)) * s.mu.dx < 1e-6 * dt


def test_pde_step_conserves_mass():
    mu = GridMeasure.mixture([(0.3, gauss(-2, 0.4)), (0.7, gauss(1.5, 0.8))])
    out = pde_step(mu, builtin("double_well", [0.2]), CUBIC, 1e-3)
    assert abs(out.mass - 1.0) < 1e-13
    assert np.all(out.density >= 0)


def test_explicit_and_implicit_agree():
    mu = gauss(0.5, 0.8, -4, 4, 160)
    dx = mu.dx
    dt = 0.2 * dx * dx
    cfg_e = SolverConfig(dt=dt, t_end=0.2, record_every=50, scheme="explicit")
    cfg_i = SolverConfig(dt=dt, t_end=0.2, record_every=50)
    a = pde_solve(mu, Q, CUBIC, cfg_e)
    b = pde_solve(mu, Q, CUBIC, cfg_i)
    assert a.clamped_mass == 0
    assert np.sum(np.abs(a.final.density - b.final.density)) * dx < 1e-3
    with pytest.raises(ValueError):
        pde_step(mu, Q, Z, dx * dx, scheme="explicit")


def test_explicit_rejects_positivity_loss():
    # the interaction drift near the edge of [-6, 6] outruns the diffusive guard
    mu = gauss(0.5, 0.8, -6, 6, 120)
    with pytest.raises(SolverError):
        pde_step(mu, Q, CUBIC, 0.4 * mu.dx**2, scheme="explicit")


def test_blow_up_is_reported():
    with pytest.raises(SolverError), np.errstate(over="ignore"):
        pde_step(gauss(), builtin("power", [800.0]), Z, 1e-3)


# -- trajectories


def test_free_energy_non_increasing():
    mu = GridMeasure.mixture([(0.5, gauss(-2, 0.5)), (0.5, gauss(2.5, 0.7))])
    rec = pde_solve(mu, builtin("double_well", [0.2]), CUBIC, SolverConfig(dt=1e-3, t_end=1.0, record_every=10))
    assert np.all(np.diff(rec.free_energy) <= 1e-8)
    assert rec.max_free_energy_increase <= 1e-8
    assert len(rec.times) == len(rec.free_energy) == len(rec.mean) == len(rec.second_moment)
    assert np.all(np.diff(rec.times) > 0)


def test_center_of_mass_preserved_without_confinement():
    # even data about a grid point keep the discrete mean exactly
    mu = GridMeasure.mixture([(0.5, gauss(-1.5, 0.5)), (0.5, gauss(1.5, 0.5))])
    rec = pde_solve(mu, Z, CUBIC, SolverConfig(dt=1e-3, t_end=5.0, record_every=100))
    assert np.ptp(rec.mean) < 1e-8
    assert rec.max_mean_drift < 1e-7
    assert rec.max_mass_error < 1e-12
    assert rec.clamped_mass < 1e-9
    assert max(rec.second_moment) < np.inf


def test_stationary_reference_distance_stays_small():
    s = fixed_point_solve(Q, Z, (LO, HI, M), tol=1e-12)
    rec = pde_solve(s.mu, Q, Z, SolverConfig(dt=1e-3, t_end=0.5, record_every=50), ref=s.mu)
    assert max(rec.w2_to_ref) < 1e-5


def test_pde_solve_rejects_unnormalized():
    mu = gauss()
    with pytest.raises(ValueError):
        pde_solve(mu.with_density(2 * mu.density), Z, Z, SolverConfig(dt=1e-3, t_end=0.01))


def test_contraction_for_convex_confinement():
    a = 2.0
    V = builtin("quadratic", [a])
    cfg = SolverConfig(dt=1e-3, t_end=1.5, record_every=25)
    rec = coupled_dissipation_run(gauss(-1, 0.6), gauss(1.5, 1.3), V, Z, cfg)
    w = np.sqrt(rec.w2_pair_sq)
    bound = np.exp(-a * np.asarray(rec.times)) * w[0] * 1.02
    assert np.all(w <= bound)


# -- coupled runs


def test_coupled_identical_data_stay_together():
    mu = gauss(0.3, 0.9)
    rec = coupled_dissipation_run(mu, mu, Q, CUBIC, SolverConfig(dt=1e-3, t_end=0.3, record_every=30))
    assert max(rec.w2_pair_sq) < 1e-20
    assert max(np.abs(rec.j)) < 1e-12


def test_coupled_dissipation_inequality_ou():
    cfg = SolverConfig(dt=1e-3, t_end=2.0, record_every=20)
    rec = coupled_dissipation_run(gauss(0, 1), gauss(1, 2), Q, Z, cfg)
    t, w, j = np.asarray(rec.times), np.asarray(rec.w2_pair_sq), np.asarray(rec.j)
    slope = np.diff(w) / (2 * np.diff(t))
    jbar = 0.5 * (j[1:] + j[:-1])
    assert np.all(slope <= -jbar + 0.05 * np.abs(jbar))


def test_diffusion_contracts():
    cfg = SolverConfig(dt=1e-3, t_end=1.0, record_every=20)
    rec = coupled_dissipation_run(gauss(0, 0.5), gauss(0, 2), Z, Z, cfg)
    assert np.all(np.diff(rec.w2_pair_sq) <= 1e-12)


def test_coupled_rejects_mismatched_grids():
    with pytest.raises(ValueError):
        coupled_dissipation_run(gauss(), gauss(0, 1, -8, 8, 400), Z, Z, SolverConfig(dt=1e-3, t_end=0.1))


# -- particles


def test_particle_noise_variance():
    n, dt = 10**5, 1e-2
    p = ParticleEnsemble(np.zeros(n), seed=4)
    rng = np.random.default_rng(4)
    q = particle_step(p, Z, Z, dt, rng)
    var = q.positions.var()
    # the sample variance of n normals has standard deviation 2dt sqrt(2/n)
    assert abs(var - 2 * dt) < 3 * 2 * dt * np.sqrt(2 / n)
    assert q.time == pytest.approx(dt)


def test_particle_mean_is_martingale_under_pair_attraction():
    n, dt = 10**4, 1e-2
    rng = np.random.default_rng(0)
    x = rng.standard_normal(n)
    p = ParticleEnsemble(x, seed=0)
    q = particle_solve(p, Z, Q, dt, 1.0)
    # the pair forces cancel, so only noise moves the mean: sd sqrt(2t/n)
    assert abs(q.positions.mean() - x.mean()) < 4 * np.sqrt(2 * 1.0 / n)


def test_particle_ou_mean_rate():
    n, dt = 2 * 10**4, 1e-2
    p = ParticleEnsemble(np.full(n, 3.0), seed=1)
    rng = np.random.default_rng(1)
    ts, means = [0.0], [3.0]
    for k in range(200):
        p = particle_step(p, Q, Z, dt, rng)
        ts.append((k + 1) * dt)
        means.append(p.positions.mean())
    rate = -np.polyfit(ts, np.log(means), 1)[0]
    assert rate == pytest.approx(1.0, rel=0.05)


def test_particle_solve_deterministic():
    p = ParticleEnsemble(np.linspace(-1, 1, 50), seed=7)
    a = particle_solve(p, Q, CUBIC, 1e-2, 0.3)
    b = particle_solve(p, Q, CUBIC, 1e-2, 0.3)
    np.testing.assert_array_equal(a.positions, b.positions)
    with pytest.raises(ValueError):
        particle_step(p, Q, Z, 0.0, np.random.default_rng(0))


def test_particle_pde_consistency_improves_with_n():
    mu0 = gauss(0, 0.5)
    dt, t_end = 1e-2, 0.5
    ref = pde_solve(mu0, Q, CUBIC, SolverConfig(dt=1e-3, t_end=t_end, record_every=500)).final
    errs = []
    for n in (10**3, 10**4, 2 * 10**4):
        errs.append(np.mean([
            wasserstein2_empirical(particle_solve(sample_from_grid(mu0, n, s), Q, CUBIC, dt, t_end), ref)
            for s in range(3)
        ]))
    assert errs[0] > errs[1] > errs[2]


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=1, max_size=40), st.sampled_from(["quadratic", "cubic_abs"]))
def test_mean_field_force_matches_direct_sum(xs, name):
    W = builtin(name)
    x = np.asarray(xs)
    direct = W.grad(x[:, None] - x[None, :]).mean(axis=1)
    np.testing.assert_allclose(mean_field_force(W, x), direct, atol=1e-9 * (1 + np.abs(direct).max()))


@settings(max_examples=15, deadline=None)
@given(st.floats(-2, 2), st.floats(0.3, 1.5), st.floats(1e-4, 5e-2))
def test_pde_step_mass_and_positivity(m, s, dt):
    mu = gauss(m, s, -8, 8, 200)
    out = pde_step(mu, Q, CUBIC, dt)
    assert abs(out.mass - 1) < 1e-12
    assert np.all(out.density >= 0)
    assert wasserstein2(out, mu) < 1.0
