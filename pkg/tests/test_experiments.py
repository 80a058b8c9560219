import json
import math
import os

import pytest

import cli
from app.services.ensemble import EnsembleService, band_params
from app.services.stats import StatsService
from core.errors import ParameterError
from experiments.extract import SampleExtractor
from experiments.pipeline import ExperimentPipeline
from experiments.transform import SampleTransformer
from models.experiment import ExperimentConfig, RunManifest, config_violations
from utils.seeding import derive_seed


def run(tmp_path, persist=False, name="run", **values):
    config = ExperimentConfig(**values)
    return ExperimentPipeline(config, output_dir=str(tmp_path / name), persist=persist).run()


def read(path):
    with open(path) as fh:
        return fh.read()


# --- Configuration ---

def test_minimal_config_is_valid():
    assert config_violations({"experiment": "covariance-check"}) == []
    config = ExperimentConfig(experiment="kacrice-1d", T=20)
    assert config.geometry == "circle"
    assert config.spectral_T == 20


@pytest.mark.parametrize("values, fragment", [
    ({"experiment": "measure-omega-2d"}, "T (or ell on the sphere) is required"),
    ({"experiment": "kacrice-1d", "T": 20, "geometry": "sphere"}, "not supported"),
    ({"experiment": "measure-omega-2d", "ell": 10, "resolution": 5}, "below 10 samples"),
    ({"experiment": "measure-omega-2d", "ell": 10, "T": 3}, "either T or ell"),
    ({"experiment": "measure-omega-2d", "geometry": "torus", "ell": 10}, "sphere geometry"),
    ({"experiment": "ns-constant", "T": 10, "eta": 12}, "eta"),
    ({"experiment": "covariance-check", "lags": "0 -1"}, "non-negative"),
])
def test_config_violations(values, fragment):
    violations = config_violations(values)
    assert violations
    assert any(fragment in v for v in violations)


def test_field_errors_name_the_field():
    violations = config_violations({"experiment": "covariance-check", "alpha": 2.0, "J": 8})
    assert {v.split(":")[0] for v in violations} == {"alpha", "J"}


def test_under_resolution_can_be_allowed():
    config = ExperimentConfig(experiment="measure-omega-2d", ell=10, resolution=6, allow_under_resolved=True)
    assert config.resolution == 6


def test_sample_seeds_do_not_depend_on_worker_count():
    a = SampleExtractor(ExperimentConfig(experiment="kacrice-1d", T=20, seed=4))
    b = SampleExtractor(ExperimentConfig(experiment="kacrice-1d", T=20, seed=4, workers=3))
    assert [a.seed_for(i) for i in range(5)] == [b.seed_for(i) for i in range(5)]
    assert len({a.seed_for(i) for i in range(5)}) == 5


def test_zero_count_on_a_loop():
    assert SampleTransformer.zero_count([1.0, -1.0, 1.0, -1.0]) == 4
    assert SampleTransformer.zero_count([1.0, 0.0, 2.0]) == 0


# --- Runs ---

def test_kacrice_monochromatic_circle(tmp_path):
    manifest = run(tmp_path, experiment="kacrice-1d", alpha=1.0, T=20, samples=3)
    assert manifest.status == "succeeded"
    assert manifest.summary["estimate"]["beta_hat"] == pytest.approx(1.0)
    assert manifest.summary["expected"] == 1.0
    names = sorted(os.path.basename(p) for p in manifest.outputs)
    assert names == ["counts.csv", "estimate.csv", "manifest.json"]


def test_kacrice_full_band_approaches_the_kac_rice_constant(tmp_path):
    manifest = run(tmp_path, experiment="kacrice-1d", alpha=0.0, T=100, samples=60)
    assert manifest.summary["relative_error"] < 0.05


def test_worker_count_does_not_change_the_measure(tmp_path):
    values = dict(experiment="measure-omega-2d", geometry="torus", T=2 * math.pi * 3, alpha=0.0, samples=4, seed=11)
    serial = run(tmp_path, name="serial", workers=1, **values)
    parallel = run(tmp_path, name="parallel", workers=2, **values)
    assert read(tmp_path / "serial" / "measure.csv") == read(tmp_path / "parallel" / "measure.csv")
    assert serial.summary == parallel.summary


def test_measure_csv_layout(tmp_path):
    run(tmp_path, experiment="measure-omega-2d", ell=12, samples=3)
    lines = read(tmp_path / "run" / "measure.csv").splitlines()
    assert lines[0] == "atom,mass,stderr"
    assert lines[1].startswith("1,")
    assert lines[-1].startswith("unresolved,")


def test_spool_writes_one_line_per_sample(tmp_path):
    run(tmp_path, experiment="measure-omega-2d", ell=8, samples=5, spool=True)
    lines = read(tmp_path / "run" / "samples.jsonl").splitlines()
    assert [json.loads(line)["index"] for line in lines] == list(range(5))


def test_sphere_ends_are_trees(tmp_path):
    manifest = run(tmp_path, experiment="measure-ends-2d", ell=10, samples=3)
    assert manifest.summary["kind"] == "tree"
    assert manifest.summary["tree_fraction"] == 1.0
    assert manifest.summary["degree_identity_failures"] == 0
    assert "()" in manifest.summary["atoms"]


def test_genus_run(tmp_path):
    manifest = run(tmp_path, experiment="genus-3d", T=2 * math.pi * 2, alpha=0.0, samples=2)
    assert manifest.summary["kind"] == "genus"
    assert "euler_per_volume" in manifest.summary


def test_covariance_check(tmp_path):
    manifest = run(tmp_path, experiment="covariance-check", alpha=1.0, J=64, samples=20, lags=[0, 1, 2])
    rows = read(tmp_path / "run" / "covariance.csv").splitlines()
    assert rows[0] == "lag,estimate,stderr,exact"
    assert len(rows) == 4
    assert manifest.summary["num_fields"] == 20
    assert manifest.summary["warnings"]


def test_barrier_demo(tmp_path):
    manifest = run(tmp_path, experiment="barrier-demo", tree="()")
    assert manifest.summary["canonical_code"] == "()"
    names = {os.path.basename(p) for p in manifest.outputs}
    assert {"field.pgm", "labels.pgm", "curves.json", "tree.txt", "perturbation.json"} <= names
    assert read(tmp_path / "run" / "tree.txt") == "()\n"


def test_failed_run_leaves_a_manifest(tmp_path):
    with pytest.raises(ParameterError):
        run(tmp_path, experiment="barrier-demo", tree="()()")
    manifest = RunManifest.model_validate_json(read(tmp_path / "run" / "manifest.json"))
    assert manifest.status == "failed"
    assert manifest.summary["error"].startswith("ParameterError")


def test_run_is_recorded_in_the_database(tmp_path, db):
    manifest = run(tmp_path, persist=True, experiment="measure-omega-2d", ell=8, samples=2)
    stored = db.get_run(manifest.run_id)
    assert stored.status == "succeeded"
    assert json.loads(stored.summary)["num_samples"] == 2
    atoms = db.get_atoms_for_run(manifest.run_id)
    assert sum(a.mass for a in atoms) == pytest.approx(1.0)
    assert sum(a.is_unresolved for a in atoms) == 1


def test_replay_is_identical(tmp_path):
    first = run(tmp_path, name="first", experiment="measure-omega-2d", geometry="torus", T=2 * math.pi * 3, samples=3)
    manifest_path = os.path.join(str(tmp_path / "first"), "manifest.json")
    second, identical = ExperimentPipeline.replay(manifest_path, output_dir=str(tmp_path / "second"), persist=False)
    assert identical
    assert second.run_id != first.run_id
    assert second.sample_seeds == first.sample_seeds


# --- Command line ---

def test_cli_validate(capsys):
    assert cli.main(["validate", "measure-omega-2d", "--resolution", "5"]) == 2
    assert "below 10 samples" in capsys.readouterr().out
    assert cli.main(["validate", "kacrice-1d", "--T", "20"]) == 0
    assert "config OK" in capsys.readouterr().out


def test_cli_run_without_database(tmp_path, capsys):
    out = str(tmp_path / "cli")
    assert cli.main(["kacrice-1d", "--T", "20", "--alpha", "1", "--samples", "2", "--out", out, "--no-db"]) == 0
    assert "succeeded" in capsys.readouterr().out
    assert os.path.exists(os.path.join(out, "estimate.csv"))


def test_cli_bad_config_exits_2(tmp_path):
    assert cli.main(["measure-omega-2d", "--out", str(tmp_path), "--no-db"]) == 2


def test_cli_config_file_and_flag_override(tmp_path):
    path = tmp_path / "run.env"
    path.write_text("T=20\nalpha=1\nsamples=5\n")
    args = cli.build_parser().parse_args(["kacrice-1d", "--config", str(path), "--samples", "2"])
    config = cli.load_config("kacrice-1d", args)
    assert config.T == 20.0
    assert config.samples == 2


def test_cli_replay(tmp_path):
    out = str(tmp_path / "orig")
    assert cli.main(["kacrice-1d", "--T", "20", "--samples", "2", "--out", out, "--no-db"]) == 0
    manifest = os.path.join(out, "manifest.json")
    assert cli.main(["replay", "--manifest", manifest, "--out", str(tmp_path / "again"), "--no-db"]) == 0


def test_cli_covariance_table(capsys):
    assert cli.main(["covariance-table", "--n", "2", "--alpha", "1", "--r-max", "1", "--step", "0.5"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "r,B"
    assert lines[1] == "0,1"
    assert len(lines) == 4


# --- Monte-Carlo checks at scale ---

@pytest.mark.slow
@pytest.mark.parametrize("alpha, m1", [(1.0, 0.91171), (0.0, 0.94473)])
def test_sphere_connectivity_table_at_ell_80(tmp_path, alpha, m1):
    manifest = run(tmp_path, experiment="measure-omega-2d", ell=80, alpha=alpha, samples=300, workers=4)
    atoms = manifest.summary["atoms"]
    assert atoms["1"] == pytest.approx(m1, abs=0.015)
    if alpha == 1.0:
        assert atoms["2"] == pytest.approx(0.05143, abs=0.01)
        assert 1.8 <= manifest.summary["tail_fit"]["exponent"] <= 2.5


@pytest.mark.slow
@pytest.mark.parametrize("alpha", [0.0, 0.5, 1.0])
def test_kacrice_at_T_200(tmp_path, alpha):
    manifest = run(tmp_path, experiment="kacrice-1d", alpha=alpha, T=200, samples=500)
    assert manifest.summary["relative_error"] < 0.02


@pytest.mark.slow
def test_discrepancy_shrinks_with_four_times_the_samples():
    params = band_params(1.0, math.sqrt(40 * 41))

    def atoms(seed):
        grid = EnsembleService.evaluate_grid(EnsembleService.sample_sphere(params, seed=seed), "sphere-lonlat")
        return SampleTransformer.connectivity_atoms(grid)[0]

    small, large = [], []
    for repeat in range(10):
        first = [atoms(derive_seed(2 * repeat, i)) for i in range(400)]
        second = [atoms(derive_seed(2 * repeat + 1, i)) for i in range(400)]
        small.append(StatsService.discrepancy(StatsService.accumulate(first[:100]),
                                              StatsService.accumulate(second[:100])))
        large.append(StatsService.discrepancy(StatsService.accumulate(first), StatsService.accumulate(second)))
    assert sum(large) / sum(small) < 0.75
