import numpy as np
import pytest

from core.Control.simulation_controller import REPORTED, SimulationController
from core.entity import simulation
from core.entity.mixture_models import TRUNCATED, BinomialModel
from core.entity.simulation import (
    EXPLICIT,
    GMLE,
    NAIVE,
    TWO_TYPE,
    UNIFORM_MIX,
    PopulationSpec,
    ReplicationResult,
    draw_observations,
    estimator_names,
    gen_population,
    replication_data,
    run_replication,
    summarize,
)
from core.exceptions import ContractViolation, DomainError, ExperimentError, NumericalFailureError


# Population layouts.
def test_two_type_population_splits_in_half(rng):
    population = gen_population(PopulationSpec(kind=TWO_TYPE, n_strata=4, delta=0.3), rng)
    np.testing.assert_allclose(population, [[0.2, 0.2], [0.2, 0.2], [0.8, 0.8], [0.8, 0.8]])


def test_uniform_mix_halves_stay_in_their_ranges(rng):
    spec = PopulationSpec(kind=UNIFORM_MIX, n_strata=100, range_a=(0.1, 0.6), range_b=(0.4, 0.9))
    population = gen_population(spec, rng)
    assert population.shape == (100, 2)
    assert np.all((population[:50] >= 0.1) & (population[:50] <= 0.6))
    assert np.all((population[50:] >= 0.4) & (population[50:] <= 0.9))


def test_explicit_points_are_tiled(rng):
    spec = PopulationSpec(kind=EXPLICIT, n_strata=5, points=((0.1, 0.2), (0.3, 0.4)))
    population = gen_population(spec, rng)
    np.testing.assert_allclose(population[:, 0], [0.1, 0.3, 0.1, 0.3, 0.1])


def test_population_spec_validation():
    with pytest.raises(DomainError):
        PopulationSpec(kind=TWO_TYPE, n_strata=5, delta=0.2)
    with pytest.raises(DomainError):
        PopulationSpec(kind=TWO_TYPE, n_strata=4, delta=0.5)
    with pytest.raises(DomainError):
        PopulationSpec(kind=UNIFORM_MIX, n_strata=4, range_a=(0.6, 0.1), range_b=(0.4, 0.9))
    with pytest.raises(DomainError):
        PopulationSpec(kind=EXPLICIT, n_strata=4)
    with pytest.raises(DomainError):
        PopulationSpec(kind="bimodal", n_strata=4)


# Replications are reproducible from (seed, index) alone.
def test_replication_is_deterministic(experiment_factory):
    config = experiment_factory()
    assert run_replication(config, 1) == run_replication(config, 1)
    assert replication_data(config, 0)[1] != replication_data(config, 1)[1]


def test_seed_changes_the_data(experiment_factory):
    first = replication_data(experiment_factory(seed=1), 0)[1]
    second = replication_data(experiment_factory(seed=2), 0)[1]
    assert first != second


def test_parallel_run_matches_sequential(experiment_factory):
    config = experiment_factory(replications=4)
    sequential = SimulationController.run_experiment(config, jobs=1)
    parallel = SimulationController.run_experiment(config, jobs=2)
    assert parallel.as_dict() == sequential.as_dict()


def test_run_experiment_summaries(experiment_factory):
    report = SimulationController.run_experiment(experiment_factory(), jobs=1)
    assert [s.estimator for s in report.summaries] == [NAIVE, GMLE]
    gmle = report.summary(GMLE)
    assert gmle.n_reps == 3 and gmle.n_failed == 0
    assert gmle.mean == pytest.approx(np.mean([r.gmle[0] for r in report.results]))
    assert report.naive_limit[0] == pytest.approx(0.5265, abs=5e-4)
    assert report.as_dict()["n_failed"] == 0


def test_truncated_mode_runs(experiment_factory):
    report = SimulationController.run_experiment(experiment_factory(mode=TRUNCATED), jobs=1)
    assert all(r.gmle is not None for r in report.results)
    assert report.as_dict()["config"]["mode"] == TRUNCATED


def test_single_replication_has_undefined_sd(experiment_factory):
    report = SimulationController.run_experiment(experiment_factory(replications=1), jobs=1)
    assert np.isnan(report.summary(GMLE).sd)


def test_reported_reference_is_attached(experiment_factory):
    report = SimulationController.run_experiment(experiment_factory(config_id="table1_delta0.2"), jobs=1)
    assert report.reference["reported"]["gmle"] == list(REPORTED["table1_delta0.2"]["gmle"])


# Failure accounting.
def test_too_many_failed_replications_abort(experiment_factory, settings):
    # pi = 0 everywhere: nobody responds, so the truncated fit has no data
    silent = PopulationSpec(kind=EXPLICIT, n_strata=10, points=((0.0, 0.5),))
    config = experiment_factory(population=silent, mode=TRUNCATED)
    result = run_replication(config, 0)
    assert result.failed and result.gmle is None
    assert result.error.startswith("DegenerateDataError")

    settings.SIMULATION = {**settings.SIMULATION, "MAX_FAILED_FRACTION": 0.1}
    with pytest.raises(ExperimentError):
        SimulationController.run_experiment(config, jobs=1)


def test_failed_replications_are_tolerated_under_the_limit(experiment_factory, settings):
    silent = PopulationSpec(kind=EXPLICIT, n_strata=10, points=((0.0, 0.5),))
    settings.SIMULATION = {**settings.SIMULATION, "MAX_FAILED_FRACTION": 1.0}
    report = SimulationController.run_experiment(experiment_factory(population=silent, mode=TRUNCATED), jobs=1)
    assert report.n_failed == 3
    assert report.summary(GMLE).n_reps == 0
    assert report.naive_limit is None


def test_failed_fit_drops_the_naive_value_too(experiment_factory, settings, monkeypatch):
    fit = simulation.em_fit
    calls = []

    def fail_second_fit(*args, **kwargs):
        calls.append(1)
        if len(calls) == 2:
            raise NumericalFailureError("non-finite weights")
        return fit(*args, **kwargs)

    monkeypatch.setattr(simulation, "em_fit", fail_second_fit)
    settings.SIMULATION = {**settings.SIMULATION, "MAX_FAILED_FRACTION": 1.0}
    report = SimulationController.run_experiment(experiment_factory(), jobs=1)
    assert report.results[1].failed and report.results[1].naive is None
    for name in (NAIVE, GMLE):
        assert report.summary(name).n_reps == 2
        assert report.summary(name).n_failed == 1


def test_summarize_requires_ordered_indices(experiment_factory):
    config = experiment_factory()
    result = ReplicationResult(index=1, gmle=(0.5,), naive=(0.5,), truth=(0.5,), n_nonresponse=0)
    with pytest.raises(ContractViolation):
        summarize(config, [result])


def test_estimator_names_for_vector_eta():
    assert estimator_names(GMLE, 1) == ["gmle"]
    assert estimator_names(NAIVE, 3) == ["naive_s1", "naive_s2", "naive_s3"]


# Presets.
def test_table_presets():
    table1 = SimulationController.table_preset("table1", replications=5)
    assert [c.config_id for c in table1] == ["table1_delta0.3", "table1_delta0.2", "table1_delta0.1"]
    assert all(c.replications == 5 and c.population.n_strata == 1000 for c in table1)

    table2 = SimulationController.table_preset("table2")
    assert [c.model.kappa for c in table2] == [1, 2, 3, 4, 5]
    assert all(c.population.kind == UNIFORM_MIX for c in table2)

    consistency = SimulationController.table_preset("consistency")
    assert [c.population.n_strata for c in consistency] == [250, 1000, 4000]
    assert all(c.mode == TRUNCATED for c in consistency)

    with pytest.raises(ContractViolation):
        SimulationController.table_preset("table3")


# Full-size runs; deselected by default, run with `pytest -m slow`.
@pytest.fixture(scope="module")
def table1_reports():
    return SimulationController.run_all(SimulationController.table_preset("table1"), jobs=2)


@pytest.fixture(scope="module")
def table2_reports():
    return SimulationController.run_all(SimulationController.table_preset("table2"), jobs=2)


@pytest.mark.slow
def test_table1_naive_tracks_the_population_limit(table1_reports):
    naive = [r.summary(NAIVE).mean for r in table1_reports]
    for report, mean in zip(table1_reports, naive):
        assert mean > 0.5
        assert mean == pytest.approx(report.naive_limit[0], abs=0.01)
        assert mean >= report.summary(GMLE).mean - 0.005
    # presets run delta = 0.3, 0.2, 0.1
    assert naive[0] > naive[1] > naive[2]


@pytest.mark.slow
def test_table1_gmle_removes_the_bias(table1_reports):
    for report in table1_reports:
        assert report.summary(GMLE).mean == pytest.approx(0.5, abs=0.02)
    smallest = table1_reports[-1].summary(GMLE)
    assert smallest.mean == pytest.approx(0.501, abs=0.01)
    assert smallest.sd <= 0.03


@pytest.mark.slow
def test_table2_trend_in_kappa(table2_reports):
    naive = [r.summary(NAIVE).mean for r in table2_reports]
    gmle = [r.summary(GMLE).mean for r in table2_reports]
    assert 0.01 <= gmle[0] - 0.5 <= 0.05
    assert all(abs(g - 0.5) <= 0.02 for g in gmle[1:])
    assert all(later < earlier + 0.005 for earlier, later in zip(naive, naive[1:]))
    assert all(n >= g - 0.005 for n, g in zip(naive, gmle))
    assert naive[-1] == pytest.approx(0.512, abs=0.01)


@pytest.mark.slow
def test_two_type_nonresponse_fraction():
    population = gen_population(PopulationSpec(kind=TWO_TYPE, n_strata=10**6, delta=0.3), np.random.default_rng(3))
    obs = draw_observations(BinomialModel(kappa=4), population, np.random.default_rng(4))
    assert obs.n_nonresponse / obs.n_total == pytest.approx((0.4096 + 0.0016) / 2, abs=0.001)


def test_uniform_mix_mean_of_p():
    spec = PopulationSpec(kind=UNIFORM_MIX, n_strata=10**6, range_a=(0.1, 0.6), range_b=(0.4, 0.9))
    population = gen_population(spec, np.random.default_rng(5))
    assert population[:, 1].mean() == pytest.approx(0.5, abs=0.001)


@pytest.mark.slow
def test_truncated_bias_shrinks_with_sample_size():
    configs = SimulationController.table_preset("consistency", grid_res=15, replications=10)
    biases = [abs(r.summary(GMLE).mean - 0.5) for r in SimulationController.run_all(configs, jobs=2)]
    assert biases[-1] <= biases[0] + 0.01
