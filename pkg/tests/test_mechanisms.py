import math

import numpy as np
import pytest
from scipy import integrate
from scipy.stats import laplace as laplace_dist
from scipy.stats import norm

from dpa.divergences import epsilon_at_delta, hockey_stick
from dpa.exceptions import ValidationError
from dpa.mechanisms import (MechanismSpec, dominating_pair, expected_cost, gaussian, laplace,
                            mechanism_pld, mechanism_plds, noise_sample, randomized_response,
                            sample, staircase)
from dpa.pld import DiscretizationPolicy

from conftest import E

COARSE = DiscretizationPolicy(grid_spacing=1e-3)
COARSE_OPT = COARSE.replace(rounding="optimistic")


def stair_density(z, eps, eta, s=1.0):
    """Independent staircase density: c on |z| <= eta, c e^{-k eps} on the k-th band beyond."""
    c = 1 / (2 * eta + 2 * s * math.exp(-eps) / (1 - math.exp(-eps)))
    a = abs(z)
    if a <= eta:
        return c
    return c * math.exp(-math.ceil((a - eta) / s) * eps)


def stair_delta(eps_eval, eps, eta, s=1.0):
    f = lambda y: max(0.0, stair_density(y, eps, eta, s) - math.exp(eps_eval) * stair_density(y - s, eps, eta, s))
    cuts = sorted({x + k * s for k in range(-40, 41) for x in (eta, -eta, eta + s, -eta + s)})
    cuts = [c for c in cuts if -40 <= c <= 41]
    return math.fsum(integrate.quad(f, a, b, epsabs=1e-15)[0] for a, b in zip(cuts[:-1], cuts[1:]))


# --- specs ---------------------------------------------------------------

def test_spec_validation():
    with pytest.raises(ValidationError):
        gaussian(0.0)
    with pytest.raises(ValidationError):
        laplace(-1.0)
    with pytest.raises(ValidationError):
        staircase(1.0, 1.5, sensitivity=1.0)
    with pytest.raises(ValidationError):
        MechanismSpec("exponential", {"epsilon": 1.0})
    with pytest.raises(ValidationError):
        MechanismSpec("gaussian", {})
    with pytest.raises(ValidationError):
        MechanismSpec("gaussian", {"sigma": 1.0, "mu": 2.0})
    with pytest.raises(ValidationError):
        MechanismSpec.from_dict({"params": {}})


def test_spec_json_round_trip():
    for spec in [gaussian(1.5, 2.0), laplace(0.5), staircase(1.0, 0.25), randomized_response(2.0)]:
        back = MechanismSpec.from_json(spec.to_json())
        assert back == spec


# --- dominating pairs ----------------------------------------------------

def test_gaussian_pair_densities():
    pair = dominating_pair(gaussian(1.0))
    y = np.linspace(-4, 5, 19)
    assert pair.logpdf_p(y) == pytest.approx(norm.logpdf(y, 0, 1), abs=1e-13)
    assert pair.logpdf_q(y) == pytest.approx(norm.logpdf(y, 1, 1), abs=1e-13)


def test_laplace_pair_densities():
    pair = dominating_pair(laplace(1.0))
    y = np.linspace(-4, 5, 19)
    assert pair.logpdf_p(y) == pytest.approx(laplace_dist.logpdf(y, 0, 1), abs=1e-13)
    assert pair.logpdf_q(y) == pytest.approx(laplace_dist.logpdf(y, 1, 1), abs=1e-13)


def test_randomized_response_pair():
    pair = dominating_pair(randomized_response(1.0))
    assert pair.discrete
    assert np.exp(pair.logpdf_p(np.array([0, 1]))) == pytest.approx([E / (1 + E), 1 / (1 + E)])
    assert np.exp(pair.logpdf_q(np.array([0, 1]))) == pytest.approx([1 / (1 + E), E / (1 + E)])


def test_staircase_pair_matches_band_formula():
    pair = dominating_pair(staircase(1.0, 0.3))
    for y in [-3.7, -1.2, -0.3, 0.0, 0.29, 0.31, 1.0, 1.31, 2.5, 6.0]:
        assert math.exp(pair.logpdf_p(np.array(y))) == pytest.approx(stair_density(y, 1.0, 0.3), rel=1e-12)
        assert math.exp(pair.logpdf_q(np.array(y))) == pytest.approx(stair_density(y - 1, 1.0, 0.3), rel=1e-12)


# --- PLDs ----------------------------------------------------------------

def test_laplace_is_pure_dp():
    pld = mechanism_pld(laplace(2.0))
    assert hockey_stick(pld, 2.0) == 0.0
    assert hockey_stick(pld, 1.99) > 0.0


@pytest.mark.parametrize("lam", [0.5, 1.0, 2.0])
def test_laplace_epsilon_identity(lam):
    pld = mechanism_pld(laplace(lam))
    assert abs(epsilon_at_delta(pld, 1e-12) - lam) <= 2 * pld.grid_spacing


def test_staircase_max_loss_is_epsilon():
    pld = mechanism_pld(staircase(1.0, 0.5))
    nz = pld.masses > 0
    assert pld.losses[nz].max() == pytest.approx(1.0, abs=1e-12)
    assert pld.infinity_mass == 0.0
    assert hockey_stick(pld, 1.0) == 0.0


@pytest.mark.parametrize("eta", [0.0, 0.3, 0.5, 1.0])
def test_staircase_delta_bracket(eta):
    pess = mechanism_pld(staircase(1.0, eta), COARSE)
    opt = mechanism_pld(staircase(1.0, eta), COARSE_OPT)
    for e in [0.0, 0.3, 0.7]:
        truth = stair_delta(e, 1.0, eta)
        assert hockey_stick(opt, e) - 1e-10 <= truth <= hockey_stick(pess, e) + 1e-10


def test_gaussian_delta_positive_everywhere():
    pld = mechanism_pld(gaussian(1.0), COARSE)
    assert np.all(hockey_stick(pld, np.array([0.0, 1.0, 3.0, 6.0])) > 0)


def test_forward_equals_reverse():
    f, r = mechanism_plds(laplace(1.0), COARSE)
    assert f == r


def test_policy_direction_is_recorded():
    assert mechanism_pld(gaussian(1.0), COARSE).pessimistic
    assert not mechanism_pld(gaussian(1.0), COARSE_OPT).pessimistic


# --- sampling ------------------------------------------------------------

def test_laplace_sample_mean():
    z = sample(laplace(1.0), 0.0, rng_seed=7, size=1_000_000)
    assert abs(z.mean()) < 0.005


def test_sample_is_seeded_and_shifted():
    a = sample(gaussian(1.0), 3.0, rng_seed=11, size=1000)
    b = sample(gaussian(1.0), 3.0, rng_seed=11, size=1000)
    assert np.array_equal(a, b)
    assert abs(a.mean() - 3.0) < 0.2
    assert np.isscalar(sample(gaussian(1.0), 0.0, rng_seed=1)) or np.ndim(sample(gaussian(1.0), 0.0, rng_seed=1)) == 0


def test_staircase_central_band_fraction():
    eta, n = 0.5, 1_000_000
    z = noise_sample(staircase(1.0, eta), np.random.default_rng(3), n)
    p = 2 * eta / (2 * eta + 2 * math.exp(-1) / (1 - math.exp(-1)))
    frac = np.mean(np.abs(z) <= eta)
    assert abs(frac - p) < 4 * math.sqrt(p * (1 - p) / n)


def test_randomized_response_samples():
    y = sample(randomized_response(1.0), 1, rng_seed=5, size=200_000)
    assert set(np.unique(y)) <= {0, 1}
    assert abs(np.mean(y == 1) - E / (1 + E)) < 0.005


# --- costs ---------------------------------------------------------------

def test_expected_costs():
    assert expected_cost(gaussian(1.0), "quadratic") == pytest.approx(1.0, abs=1e-8)
    assert expected_cost(laplace(1.0), "quadratic") == pytest.approx(2.0, abs=1e-8)
    assert expected_cost(laplace(2.0), "quadratic") == pytest.approx(0.5, abs=1e-8)
    assert expected_cost(laplace(2.0), "absolute") == pytest.approx(0.5, abs=1e-8)


def test_staircase_cost_monte_carlo():
    spec = staircase(1.0, 0.4)
    z = noise_sample(spec, np.random.default_rng(21), 10_000_000)
    sq = z * z
    mc, se = sq.mean(), sq.std() / math.sqrt(sq.size)
    assert abs(expected_cost(spec, "quadratic") - mc) < 3 * se


def test_callable_cost():
    assert expected_cost(gaussian(2.0), lambda z: np.abs(z) ** 3) == pytest.approx(
        8 * 2 * math.sqrt(2 / math.pi), rel=1e-6)
