import math

import numpy as np
import pytest
import scipy.stats

from drtune.envsim import MdpParams
from drtune.errors import ProtocolError
from drtune.randdist import (
    Phi,
    init_phi,
    log_density,
    phi_from_vector,
    phi_to_vector,
    sample_mdp,
    sample_values,
)
from drtune.seeding import rng_from

LN_2PI = math.log(2.0 * math.pi)


def test_init_phi_mean_is_nominal_and_variance_one(cartpole_spec):
    phi = init_phi(cartpole_spec.nominal_params)
    assert np.array_equal(phi.mean, cartpole_spec.nominal_params.values)
    assert np.array_equal(phi.log_std, np.zeros(5))
    assert np.allclose(phi.sigma() ** 2, 1.0)
    assert phi.dim == 5


def test_init_phi_relative_scale(pointmass_spec):
    phi = init_phi(pointmass_spec.nominal_params, relative_scale=True)
    assert np.allclose(phi.sigma(), np.abs(pointmass_spec.nominal_params.values))


def test_degenerate_spread_returns_mean(pointmass_spec):
    phi = Phi(mean=pointmass_spec.nominal_params.values, log_std=np.full(3, -18.0))
    for seed in range(5):
        m = sample_mdp(phi, seed, pointmass_spec)
        assert np.all(np.abs(m.values - phi.mean) < 1e-6)


def test_sample_mean_matches_monte_carlo(rng):
    # Wide-open sampling (no validity box): empirical mean within 3 standard
    # errors of the distribution mean. sample_values is the exact path
    # sample_mdp uses; spot-check the delegation on top of the bulk draw.
    phi = Phi(mean=np.array([1.0, 0.5, 9.8]), log_std=np.array([0.0, -1.0, 0.5]))
    n = 100_000
    z = rng.standard_normal((n, 3))
    draws = sample_values(phi, z)
    err = np.abs(draws.mean(axis=0) - phi.mean)
    bound = 3.0 * phi.sigma() / math.sqrt(n)
    assert np.all(err < bound)
    for seed in range(5):
        direct = sample_mdp(phi, seed)
        expected = sample_values(phi, rng_from(seed).standard_normal(3))
        assert np.array_equal(direct.values, expected)


def test_sampling_clamps_to_validity_box(pointmass_spec):
    phi = Phi(mean=np.array([0.06, 0.5, 9.8]), log_std=np.zeros(3))
    draws = np.stack([sample_mdp(phi, seed, pointmass_spec).values for seed in range(200)])
    assert np.all(draws[:, 0] >= 0.05)
    assert np.any(draws[:, 0] == 0.05)  # a -2 sigma mass draw lands on the floor


def test_log_density_at_mode_1d():
    phi = Phi(mean=np.array([0.3]), log_std=np.array([0.0]))
    assert log_density(phi, MdpParams(np.array([0.3]))) == pytest.approx(-0.5 * LN_2PI, abs=1e-12)
    assert log_density(phi, MdpParams(np.array([0.3]))) == pytest.approx(-0.91894, abs=1e-5)


def test_log_density_at_mode_closed_form():
    log_std = np.array([0.1, -0.7, 0.4, 0.0])
    phi = Phi(mean=np.array([1.0, 2.0, -3.0, 0.0]), log_std=log_std)
    expected = -np.sum(log_std) - 0.5 * 4 * LN_2PI
    assert log_density(phi, MdpParams(phi.mean.copy())) == pytest.approx(expected, abs=1e-12)


def test_density_integrates_to_one_by_quadrature():
    # Trapezoid quadrature over a wide 1-D grid as the independent oracle.
    phi = Phi(mean=np.array([1.3]), log_std=np.array([0.4]))
    sigma = float(phi.sigma()[0])
    grid = np.linspace(phi.mean[0] - 10 * sigma, phi.mean[0] + 10 * sigma, 8001)
    dens = [math.exp(log_density(phi, MdpParams(np.array([x])))) for x in grid]
    integral = np.trapezoid(dens, grid)
    assert integral == pytest.approx(1.0, abs=1e-3)


def test_log_density_dimension_mismatch():
    phi = Phi(mean=np.zeros(3), log_std=np.zeros(3))
    with pytest.raises(ProtocolError):
        log_density(phi, MdpParams(np.zeros(4)))


def test_sampled_draw_always_has_finite_density(pointmass_spec, rng):
    phi = Phi(mean=np.array([0.06, 0.0, 9.8]), log_std=np.array([1.0, 1.0, 1.0]))
    for _ in range(200):
        m = sample_mdp(phi, rng, pointmass_spec)
        assert math.isfinite(log_density(phi, m))


def test_reparameterization_doubling_sigma_doubles_deviation():
    mean = np.array([1.0, 2.0])
    z = np.array([0.7, -1.2])
    one = sample_values(Phi(mean=mean, log_std=np.zeros(2)), z)
    two = sample_values(Phi(mean=mean, log_std=np.full(2, math.log(2.0))), z)
    assert np.allclose(two - mean, 2.0 * (one - mean), rtol=1e-12)


def test_samples_are_exact_gaussian_inside_box(rng):
    # Kolmogorov-Smirnov on 10^4 one-dimensional samples with the box inactive.
    phi = Phi(mean=np.array([5.0]), log_std=np.array([0.0]))
    draws = phi.mean + phi.sigma() * rng.standard_normal((10_000, 1))
    draws = np.clip(draws, np.array([0.05]), np.array([np.inf]))  # box far away: inactive
    result = scipy.stats.kstest(draws[:, 0], "norm", args=(5.0, 1.0))
    assert result.pvalue > 0.01


def test_phi_vector_roundtrip():
    phi = Phi(mean=np.array([1.0, -2.0]), log_std=np.array([0.3, -0.3]))
    back = phi_from_vector(phi_to_vector(phi))
    assert np.array_equal(back.mean, phi.mean)
    assert np.array_equal(back.log_std, phi.log_std)


def test_phi_from_vector_clamps_log_std_half():
    phi = phi_from_vector(np.array([0.0, 99.0]))
    assert phi.log_std[0] == 5.0


def test_phi_invariants():
    with pytest.raises(ProtocolError):
        Phi(mean=np.zeros(2), log_std=np.zeros(3))
    with pytest.raises(ProtocolError):
        Phi(mean=np.array([np.nan]), log_std=np.array([0.0]))
    with pytest.raises(ProtocolError):
        Phi(mean=np.array([0.0]), log_std=np.array([-30.0]))
