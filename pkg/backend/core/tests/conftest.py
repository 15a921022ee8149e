import numpy as np
import pytest

from core.entity.gmle_solver import ObservationSet, SupportGrid, build_likelihood_matrix
from core.entity.mixture_models import (
    CENSORED,
    ETA_THETA,
    BernoulliModel,
    BinomialModel,
    GeometricModel,
    Outcome,
    PoissonModel,
)
from core.entity.simulation import TWO_TYPE, ExperimentConfig, PopulationSpec


@pytest.fixture
def model_factory():
    def _create(family="binom", **overrides):
        if family == "binom":
            return BinomialModel(kappa=overrides.pop("kappa", 4))
        if family == "geom":
            return GeometricModel(
                max_attempts=overrides.pop("max_attempts", 3),
                categories=overrides.pop("categories", 2),
            )
        if family == "poisson":
            return PoissonModel(lambda_max=overrides.pop("lambda_max", 5.0))
        return BernoulliModel(eta=overrides.pop("eta", ETA_THETA))

    return _create


@pytest.fixture
def observations_factory():
    def _create(counts=None, mode=CENSORED):
        counts = counts or {Outcome.response(1, 1): 1, Outcome.response(0, 2): 1}
        return ObservationSet.from_counts(counts, mode=mode)

    return _create


@pytest.fixture
def experiment_factory(model_factory):
    def _create(**overrides):
        population = overrides.pop(
            "population",
            PopulationSpec(
                kind=overrides.pop("kind", TWO_TYPE),
                n_strata=overrides.pop("n_strata", 200),
                delta=overrides.pop("delta", 0.2),
            ),
        )
        return ExperimentConfig(
            config_id=overrides.pop("config_id", "unit"),
            model=overrides.pop("model", model_factory("binom", kappa=overrides.pop("kappa", 4))),
            population=population,
            mode=overrides.pop("mode", CENSORED),
            grid_res=overrides.pop("grid_res", 8),
            tol=overrides.pop("tol", 1e-5),
            max_iter=overrides.pop("max_iter", 20000),
            replications=overrides.pop("replications", 3),
            seed=overrides.pop("seed", 7),
        )

    return _create


@pytest.fixture
def example1():
    """Half zeros, half ones (n=10) on the grid {0.25, 0.5, 0.75}."""
    model = BernoulliModel(eta=ETA_THETA)
    grid = SupportGrid.from_points(model, [[0.25], [0.5], [0.75]])
    obs = ObservationSet.from_counts({Outcome.response(0): 5, Outcome.response(1): 5})
    return model, grid, obs, build_likelihood_matrix(model, grid, obs)


@pytest.fixture
def strata_csv_factory(tmp_path):
    def _create(rows, header="stratum_id,kappa_attempted,kappa_responded,x", name="strata.csv"):
        path = tmp_path / name
        path.write_text("\n".join([header, *rows]) + "\n", encoding="utf-8")
        return path

    return _create


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
