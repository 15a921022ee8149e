import numpy as np
import pytest

from core.entity.estimators import (
    estimate,
    eta_gmle,
    naive,
    naive_population_limit,
    population_eta,
    posterior_eta,
    posterior_identity_gap,
)
from core.entity.gmle_solver import (
    MixtureWeights,
    ObservationSet,
    SupportGrid,
    build_likelihood_matrix,
    em_fit,
)
from core.entity.mixture_models import ETA_THETA_SQUARED, NONRESPONSE, Outcome
from core.entity.simulation import TWO_TYPE, PopulationSpec, gen_population
from core.exceptions import UndefinedPosteriorError

G1 = MixtureWeights.point_mass(3, 1)
G2 = MixtureWeights(np.array([0.5, 0.0, 0.5]))


# Two maximisers of the same likelihood agree on E(theta) but not on E(theta^2).
def test_eta_gmle_example1(example1, model_factory):
    _, grid, _, _ = example1
    assert eta_gmle(model_factory("bernoulli"), grid, G1) == pytest.approx([0.5])
    assert eta_gmle(model_factory("bernoulli"), grid, G2) == pytest.approx([0.5])

    squared = model_factory("bernoulli", eta=ETA_THETA_SQUARED)
    assert eta_gmle(squared, grid, G1) == pytest.approx([0.25])
    assert eta_gmle(squared, grid, G2) == pytest.approx([0.3125])


def test_posterior_eta_example1(example1):
    model, grid, obs, L = example1
    d = obs.distinct.index(Outcome.response(1))
    assert posterior_eta(model, grid, G1, L, d) == pytest.approx([0.5])
    assert posterior_eta(model, grid, G2, L, d) == pytest.approx([0.625])


def test_posterior_undefined_for_zero_marginal(model_factory):
    bern = model_factory("bernoulli")
    grid = SupportGrid.from_points(bern, [[0.0], [0.5]])
    obs = ObservationSet.from_counts({Outcome.response(1): 1})
    L = build_likelihood_matrix(bern, grid, obs)
    with pytest.raises(UndefinedPosteriorError):
        posterior_eta(bern, grid, MixtureWeights.point_mass(2, 0), L, 0)
    with pytest.raises(UndefinedPosteriorError):
        posterior_identity_gap(bern, grid, MixtureWeights.point_mass(2, 0), L, obs.counts_array())


def test_eta_gmle_is_linear_in_weights(model_factory):
    model = model_factory("binom", kappa=3)
    grid = SupportGrid.from_points(model, [[0.2, 0.1], [0.5, 0.6], [0.9, 0.8]])
    w1 = MixtureWeights(np.array([0.6, 0.4, 0.0]))
    w2 = MixtureWeights(np.array([0.1, 0.2, 0.7]))
    mixed = MixtureWeights(0.3 * w1.w + 0.7 * w2.w)
    expected = 0.3 * eta_gmle(model, grid, w1) + 0.7 * eta_gmle(model, grid, w2)
    np.testing.assert_allclose(eta_gmle(model, grid, mixed), expected)


# Naive estimator: responders only.
def test_naive_averages_responders(model_factory, observations_factory):
    obs = observations_factory({Outcome.response(1, 1): 1, Outcome.response(0, 2): 1, NONRESPONSE: 3})
    assert naive(model_factory("binom"), obs) == pytest.approx([0.5])


def test_naive_without_responders_is_none(model_factory, observations_factory):
    assert naive(model_factory("binom"), observations_factory({NONRESPONSE: 4})) is None


def test_estimate_omits_naive_when_h_is_unavailable(example1, model_factory):
    _, grid, obs, _ = example1
    report = estimate(model_factory("bernoulli", eta=ETA_THETA_SQUARED), grid, G2, obs)
    assert report.naive is None
    assert report.eta_hat == pytest.approx((0.3125,))
    assert report.as_dict()["n_total"] == 10


# Posterior identity: zero at a GMLE, positive elsewhere.
def test_identity_gap_single_grid_point(model_factory):
    bern = model_factory("bernoulli")
    grid = SupportGrid.from_points(bern, [[0.4]])
    obs = ObservationSet.from_counts({Outcome.response(0): 3, Outcome.response(1): 2})
    L = build_likelihood_matrix(bern, grid, obs)
    assert posterior_identity_gap(bern, grid, MixtureWeights.uniform(1), L, obs.counts_array()) <= 1e-15


def test_identity_gap_vanishes_after_em(example1):
    model, grid, obs, L = example1
    sol = em_fit(L, obs.counts_array(), tol=1e-10)
    assert posterior_identity_gap(model, grid, sol.weights, L, obs.counts_array()) <= 1e-6


def test_identity_gap_positive_away_from_a_gmle(model_factory):
    bern = model_factory("bernoulli")
    grid = SupportGrid.from_points(bern, [[0.2], [0.8]])
    obs = ObservationSet.from_counts({Outcome.response(1): 3, Outcome.response(0): 1})
    L = build_likelihood_matrix(bern, grid, obs)
    gap = posterior_identity_gap(bern, grid, MixtureWeights.uniform(2), L, obs.counts_array())
    assert gap == pytest.approx(0.09)


# Large-sample limits for the two-type binomial population.
@pytest.mark.parametrize("delta, limit", [(0.3, 0.5770), (0.2, 0.5265), (0.1, 0.5056)])
def test_naive_population_limit_two_type(model_factory, rng, delta, limit):
    population = gen_population(PopulationSpec(kind=TWO_TYPE, n_strata=4, delta=delta), rng)
    model = model_factory("binom", kappa=4)
    assert naive_population_limit(model, population)[0] == pytest.approx(limit, abs=5e-4)
    assert population_eta(model, population)[0] == pytest.approx(0.5)
