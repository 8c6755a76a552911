import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import norm

from granflow.measures import (
    GridMeasure,
    ParticleEnsemble,
    convolve_grad_w,
    entropy,
    free_energy,
    moments,
    particles_to_grid,
    quantile,
    sample_from_grid,
)
from granflow.potentials import builtin
from granflow.transport import wasserstein2

# cells are empty or carry a resolvable mass; a 1e-300 cell across a gap is below CDF resolution
cell = st.one_of(st.just(0.0), st.floats(1e-3, 10))
densities = st.lists(cell, min_size=4, max_size=60).filter(lambda d: sum(d) > 1e-3)


def test_invalid_densities_rejected():
    with pytest.raises(ValueError):
        GridMeasure(0, 1, 3, np.array([1.0, -1.0, 1.0]))
    with pytest.raises(ValueError):
        GridMeasure(0, 1, 3, np.array([1.0, np.nan, 1.0]))
    with pytest.raises(ValueError):
        GridMeasure(1, 0, 3, np.ones(3))
    with pytest.raises(ValueError):
        GridMeasure(0, 1, 3, np.ones(4))
    with pytest.raises(ValueError):
        GridMeasure(0, 1, 3, np.zeros(3)).normalize()


def test_moments_examples():
    mu = GridMeasure.gaussian(0, 1, -10, 10, 2000)
    mean, second = moments(mu)
    assert abs(mean) < 1e-12
    assert second == pytest.approx(1.0, abs=1e-4)
    u = GridMeasure.uniform(0, 1, 0, 1, 1000)
    mean, second = moments(u)
    assert mean == pytest.approx(0.5, abs=1e-6)
    assert second == pytest.approx(1 / 3, abs=1e-6)


def test_quantile_examples():
    u = GridMeasure.uniform(0, 1, 0, 1, 500)
    assert quantile(u, 0.25) == pytest.approx(0.25, abs=u.dx)
    g = GridMeasure.gaussian(0, 1, -10, 10, 2000)
    assert quantile(g, 0.5) == pytest.approx(0.0, abs=g.dx)
    assert quantile(g, 0.8413) == pytest.approx(1.0, abs=2 * g.dx)
    qs = quantile(g, np.array([0.1, 0.9]))
    np.testing.assert_allclose(qs, norm.ppf([0.1, 0.9]), atol=2 * g.dx)
    for bad in (0.0, 1.0, -0.1, 1.5):
        with pytest.raises(ValueError):
            quantile(g, bad)


def test_convolve_grad_w_examples():
    mu = GridMeasure.gaussian(0, 1, -10, 10, 1000)
    assert np.all(convolve_grad_w(mu, builtin("zero")) == 0)
    np.testing.assert_allclose(convolve_grad_w(mu, builtin("quadratic")), mu.centers, atol=1e-8)
    # single cell at the origin: grid with a center at 0 needs odd m
    m = 201
    rho = np.zeros(m)
    rho[m // 2] = 1.0
    delta = GridMeasure(-10, 10, m, rho).normalize()
    x = delta.centers
    np.testing.assert_allclose(convolve_grad_w(delta, builtin("cubic_abs")), 3 * x * np.abs(x), atol=1e-9)


def test_convolve_grad_w_odd_for_even_measure():
    mu = GridMeasure.mixture([(0.5, GridMeasure.gaussian(-2, 0.5)), (0.5, GridMeasure.gaussian(2, 0.5))])
    a = convolve_grad_w(mu, builtin("cubic_abs"))
    np.testing.assert_allclose(a, -a[::-1], atol=1e-10)


def test_free_energy_examples():
    u = GridMeasure.uniform(0, 1, 0, 1, 1000)
    z = builtin("zero")
    assert free_energy(u, z, z) == pytest.approx(0.0, abs=1e-12)
    g = GridMeasure.gaussian(0, 1, -10, 10, 2000)
    assert free_energy(g, z, z) == pytest.approx(-0.5 * np.log(2 * np.pi * np.e), abs=1e-3)
    assert free_energy(u, builtin("quadratic"), z) == pytest.approx(1 / 6, abs=1e-6)


def test_free_energy_interaction_term():
    # W = x^2/2: half the double integral is the variance for a centered measure
    g = GridMeasure.gaussian(0, 1.5, -12, 12, 1200)
    z = builtin("zero")
    f = free_energy(g, z, builtin("quadratic")) - free_energy(g, z, z)
    assert f == pytest.approx(1.5**2 / 2, rel=1e-4)


def test_free_energy_grid_refinement():
    q = builtin("quadratic")
    a = free_energy(GridMeasure.gaussian(0.3, 0.8, -8, 8, 400), q, q)
    b = free_energy(GridMeasure.gaussian(0.3, 0.8, -8, 8, 1600), q, q)
    assert abs(a - b) < 16 / 400
    assert entropy(GridMeasure.gaussian(0, 1, -8, 8, 400)) < 0


def test_particles_to_grid_examples():
    p = ParticleEnsemble(np.full(10, 0.3))
    g = particles_to_grid(p, -1, 1, 20)
    assert np.count_nonzero(g.density) == 1
    assert g.mass == pytest.approx(1.0)
    g = particles_to_grid(ParticleEnsemble([-1.0, 1.0]), -2, 2, 8)
    np.testing.assert_allclose(np.sort(g.masses[g.masses > 0]), [0.5, 0.5])
    with pytest.raises(ValueError):
        particles_to_grid(ParticleEnsemble([5.0, 6.0]), -1, 1, 10)
    with pytest.raises(ValueError):
        particles_to_grid(ParticleEnsemble([0.0]), -1, 1, 1)


def test_particles_to_grid_monte_carlo():
    rng = np.random.default_rng(1)
    g = particles_to_grid(ParticleEnsemble(rng.standard_normal(10**6)), -6, 6, 200)
    assert wasserstein2(g, GridMeasure.gaussian(0, 1, -6, 6, 200)) < 0.01


def test_sample_from_grid_examples():
    rho = np.zeros(100)
    rho[40] = 1
    pt = GridMeasure(0, 1, 100, rho).normalize()
    s = sample_from_grid(pt, 1000, 3)
    assert s.positions.min() >= 0.4 and s.positions.max() <= 0.41
    u = GridMeasure.uniform(0, 1, 0, 1, 100)
    s = sample_from_grid(u, 10**5, 7)
    assert abs(s.positions.mean() - 0.5) < 0.005
    a, b = sample_from_grid(u, 50, 11), sample_from_grid(u, 50, 11)
    np.testing.assert_array_equal(a.positions, b.positions)
    with pytest.raises(ValueError):
        sample_from_grid(u, 0, 1)


def test_particle_ensemble_validation():
    with pytest.raises(ValueError):
        ParticleEnsemble([])
    with pytest.raises(ValueError):
        ParticleEnsemble([0.0, np.inf])


@settings(max_examples=60, deadline=None)
@given(densities)
def test_normalize_idempotent(d):
    mu = GridMeasure(-1, 2, len(d), np.array(d)).normalize()
    assert mu.is_normalized(1e-12)
    np.testing.assert_allclose(mu.normalize().density, mu.density, rtol=1e-14)
    c = mu.cdf_edges()
    assert np.all(np.diff(c) >= 0) and c[-1] == pytest.approx(1.0, abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(densities, st.floats(0.01, 0.99))
def test_quantile_cdf_roundtrip(d, u):
    mu = GridMeasure(-1, 2, len(d), np.array(d)).normalize()
    x = quantile(mu, u)
    assert mu.cdf(x) == pytest.approx(u, abs=1e-9)


@settings(max_examples=60, deadline=None)
@given(densities, st.floats(0.001, 0.998), st.floats(0.0, 0.001))
def test_quantile_monotone(d, u, du):
    mu = GridMeasure(-1, 2, len(d), np.array(d)).normalize()
    assert quantile(mu, u) <= quantile(mu, u + du) + 1e-15


@settings(max_examples=40, deadline=None)
@given(densities)
def test_cdf_quantile_within_cell(d):
    mu = GridMeasure(-1, 2, len(d), np.array(d)).normalize()
    inside = mu.centers[mu.density > 0]
    for x in inside:
        u = float(mu.cdf(x))
        if 0 < u < 1:
            assert abs(quantile(mu, u) - x) <= mu.dx
