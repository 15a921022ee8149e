import json
from io import StringIO

import pytest
from django.core.management import call_command
from django.core.management.base import CommandError

from core.boundary.cli import EXIT_RUNTIME, EXIT_USAGE
from core.Control.verify_controller import VerifyController
from core.models import ExperimentRun

TINY_CONFIG = """\
# two-type binomial, small enough for a unit test
config_id=tiny
family=binom
kappa=2
population=two_type
delta=0.2
n_strata=40
grid_res=5
tol=1e-4
reps=2
seed=11
"""


def run(*args):
    out = StringIO()
    call_command(*args, stdout=out)
    return out.getvalue()


def run_failing(*args):
    with pytest.raises(CommandError) as excinfo:
        run(*args)
    return excinfo.value


@pytest.fixture
def tiny_config(tmp_path):
    path = tmp_path / "tiny.env"
    path.write_text(TINY_CONFIG, encoding="utf-8")
    return path


# simulate
def test_simulate_missing_output_directory(tmp_path):
    err = run_failing("simulate", "--preset", "table1", "--out", str(tmp_path / "missing"))
    assert err.returncode == EXIT_USAGE


def test_simulate_invalid_config_names_the_field(tmp_path, tiny_config):
    bad = tmp_path / "bad.env"
    bad.write_text(TINY_CONFIG.replace("delta=0.2", "delta=0.7"), encoding="utf-8")
    err = run_failing("simulate", "--config", str(bad), "--out", str(tmp_path))
    assert err.returncode == EXIT_USAGE
    assert "delta" in str(err)


def test_simulate_writes_summary_and_report(tmp_path, tiny_config):
    output = run("simulate", "--config", str(tiny_config), "--out", str(tmp_path))
    assert "config" in output and "tiny" in output
    lines = (tmp_path / "tiny.csv").read_text().splitlines()
    assert lines[0].startswith("# manifest: ")
    assert [line.split(",")[1] for line in lines[2:]] == ["naive", "gmle"]
    report = json.loads((tmp_path / "tiny.json").read_text())
    assert report["manifest"]["subcommand"] == "simulate"
    assert len(report["reports"][0]["replications"]) == 2


def test_simulate_flags_override_the_file(tmp_path, tiny_config):
    run("simulate", "--config", str(tiny_config), "--out", str(tmp_path), "--reps", "3", "--mode", "truncated")
    config = json.loads((tmp_path / "tiny.json").read_text())["reports"][0]["config"]
    assert config["replications"] == 3
    assert config["mode"] == "truncated"


def test_manifest_replay_is_byte_identical(tmp_path, tiny_config):
    first, second = tmp_path / "first", tmp_path / "second"
    first.mkdir()
    second.mkdir()
    run("simulate", "--config", str(tiny_config), "--out", str(first))
    run("simulate", "--manifest", str(first / "tiny.json"), "--out", str(second))
    assert (second / "tiny.csv").read_bytes() == (first / "tiny.csv").read_bytes()
    assert (second / "tiny.json").read_bytes() == (first / "tiny.json").read_bytes()

    err = run_failing("simulate", "--manifest", str(first / "tiny.json"), "--out", str(second), "--seed", "3")
    assert err.returncode == EXIT_USAGE


def test_emitted_data_fits_back_to_the_truth(tmp_path):
    config = tmp_path / "emit.env"
    config.write_text(
        "config_id=emit\nfamily=binom\nkappa=4\npopulation=two_type\ndelta=0.2\n"
        "n_strata=1000\ngrid_res=10\ntol=1e-4\nreps=1\nseed=5\n",
        encoding="utf-8",
    )
    data_dir = tmp_path / "data"
    data_dir.mkdir()
    run("simulate", "--config", str(config), "--out", str(tmp_path), "--emit-data", str(data_dir))
    data = data_dir / "emit_rep0.csv"
    assert data.read_text().startswith("# manifest: ")

    out = tmp_path / "fit.json"
    run("fit", str(data), "--grid-res", "25", "--out", str(out))
    fit = json.loads(out.read_text())["fit"]
    assert fit["estimate"]["n_total"] == 1000
    assert fit["estimate"]["eta_hat"][0] == pytest.approx(0.5, abs=0.03)


# fit
def test_fit_constant_data(tmp_path, strata_csv_factory):
    data = strata_csv_factory([f"s{i},5,5,2" for i in range(20)])
    out = tmp_path / "constant.json"
    run("fit", str(data), "--grid-res", "11", "--out", str(out))
    fit = json.loads(out.read_text())["fit"]
    assert fit["estimate"]["naive"] == pytest.approx([0.4])
    # grid spacing is 0.098 at this resolution
    assert fit["estimate"]["eta_hat"][0] == pytest.approx(0.4, abs=0.1)
    assert fit["support"] and all(atom["weight"] > 1e-6 for atom in fit["support"])


def test_fit_bernoulli_example1(tmp_path, strata_csv_factory):
    rows = [f"z{i},,1,0" for i in range(5)] + [f"o{i},,1,1" for i in range(5)]
    out = tmp_path / "bern.json"
    output = run("fit", str(strata_csv_factory(rows)), "--family", "bernoulli", "--grid-res", "11", "--out", str(out))
    assert "GMLE eta_hat: 0.5000" in output
    fit = json.loads(out.read_text())
    assert fit["fit"]["estimate"]["eta_hat"][0] == pytest.approx(0.5, abs=1e-3)
    assert fit["manifest"]["config"]["model"] == {"family": "bernoulli", "eta": "theta"}


def test_fit_truncated_without_responders_is_a_runtime_failure(strata_csv_factory):
    data = strata_csv_factory([f"s{i},4,0," for i in range(6)])
    err = run_failing("fit", str(data), "--mode", "truncated", "--grid-res", "5")
    assert err.returncode == EXIT_RUNTIME


def test_fit_malformed_row_reports_line(strata_csv_factory):
    data = strata_csv_factory(["s1,4,2,1", "s2,4,2,5"])
    err = run_failing("fit", str(data))
    assert err.returncode == EXIT_USAGE
    assert "line 3" in str(err)


def test_fit_kappa_flag_must_match_file(strata_csv_factory):
    err = run_failing("fit", str(strata_csv_factory(["s1,4,2,1"])), "--kappa", "3")
    assert err.returncode == EXIT_USAGE


# verify
def test_verify_example1_passes():
    output = run("verify", "example1")
    assert "PASS eta_theta_agrees" in output
    assert "all 4 properties passed" in output


def test_verify_oracle_small_run():
    output = run("verify", "oracle", "--instances", "3", "--seed", "2")
    assert "PASS em_matches_brute_force" in output


def test_verify_rejects_bad_counts():
    err = run_failing("verify", "lemma1", "--starts", "0")
    assert err.returncode == EXIT_USAGE


# run registry
@pytest.mark.django_db
def test_recorded_runs_are_listed(tmp_path, tiny_config, strata_csv_factory):
    assert "No recorded runs." in run("runs")
    run("simulate", "--config", str(tiny_config), "--out", str(tmp_path), "--record")
    run("fit", str(strata_csv_factory(["s1,4,2,1", "s2,4,0,"])), "--grid-res", "5", "--record")

    assert ExperimentRun.objects.count() == 2
    sim = ExperimentRun.objects.get(subcommand="simulate")
    assert sim.label == "tiny"
    assert [row["estimator"] for row in sim.summary] == ["naive", "gmle"]
    assert sim.run_id.startswith("RUN")

    listing = run("runs", "--subcommand", "fit")
    assert "fit" in listing and "simulate" not in listing


def test_simulate_out_of_domain_points_is_a_usage_error(tmp_path):
    for points in ("1.5,0.5", "0.5,0.5,0.5"):
        config = tmp_path / "points.env"
        config.write_text(
            f"config_id=pts\nfamily=binom\nkappa=2\npopulation=explicit\npoints={points}\nn_strata=10\nreps=1\n",
            encoding="utf-8",
        )
        err = run_failing("simulate", "--config", str(config), "--out", str(tmp_path))
        assert err.returncode == EXIT_USAGE
        assert "points" in str(err)


def test_stratum_file_manifest_replays_byte_identical(tmp_path, tiny_config):
    first, data, second = tmp_path / "first", tmp_path / "data", tmp_path / "second"
    for path in (first, data, second):
        path.mkdir()
    run("simulate", "--config", str(tiny_config), "--out", str(first), "--emit-data", str(data))
    run("simulate", "--manifest", str(data / "tiny_rep1.csv"), "--out", str(second))
    assert (second / "tiny_rep1.csv").read_bytes() == (data / "tiny_rep1.csv").read_bytes()
    assert (second / "tiny.csv").read_bytes() == (first / "tiny.csv").read_bytes()


def test_manifest_with_non_mapping_config_is_a_usage_error(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"manifest": {"subcommand": "simulate", "config": ["not-a-document"],
                                            "outputs": {"csv": "a.csv", "json": "a.json"}}}), encoding="utf-8")
    err = run_failing("simulate", "--manifest", str(bad), "--out", str(tmp_path))
    assert err.returncode == EXIT_USAGE


# verify suites at reduced size
def test_lemma1_marginals_and_truncated_eta_agree():
    checks = {c.name: c for c in VerifyController.lemma1(n_strata=300, grid_res=6, seed=4)}
    assert checks["marginals_agree_across_starts"].passed
    assert checks["truncated_eta_agrees_across_starts"].passed
    assert "censored_max_gap_per_dataset" in checks["truncated_eta_agrees_across_starts"].observed


def test_verify_identity_small_run():
    output = run("verify", "identity", "--n-strata", "300", "--grid-res", "6", "--seed", "4")
    assert "PASS posterior_identity_gap" in output


def test_consistency_suite_reports_each_size():
    (check,) = VerifyController.consistency(reps=2, grid_res=5, tol=1e-4, seed=1, jobs=1)
    assert check.observed["n_strata"] == [250, 1000, 4000]


@pytest.mark.slow
def test_verify_lemma1_passes_at_defaults():
    output = run("verify", "lemma1")
    assert "all 3 properties passed" in output


@pytest.mark.slow
@pytest.mark.parametrize("suite", ["lemma1", "identity"])
def test_multistart_suites_on_twenty_datasets(suite):
    checks = VerifyController.run(suite, datasets=20)
    assert all(c.passed for c in checks), [(c.name, c.observed) for c in checks if not c.passed]


@pytest.mark.slow
def test_verify_consistency_full_run():
    output = run("verify", "consistency", "--reps", "50", "--jobs", "2")
    assert "PASS gmle_bias_nonincreasing_in_n" in output
