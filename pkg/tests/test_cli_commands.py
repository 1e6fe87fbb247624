"""End-to-end tests of the porovox command line."""

import json

import numpy as np
import pandas as pd
import pytest
from click.testing import CliRunner

from porovox.calculators.postproc import surface_field
from porovox.calculators.scorer import PcaSpec
from porovox.data.loaders import load_mask, load_volume, save_mask, save_volume
from porovox.data.models import PhantomSpec, Volume
from porovox.data.phantom import scatter_pores
from porovox.main import cli


def _invoke(*args: str):
    result = CliRunner().invoke(cli, ["--log-level", "WARNING", *args])
    assert result.exit_code == 0, result.output
    return result


@pytest.fixture(scope="module")
def phantom_files(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    _invoke(
        "phantom", "--out", str(root / "ph"), "--dims", "32", "--pores", "3",
        "--radius-min", "2", "--radius-max", "3", "--seed", "1",
    )
    return root


def _experiment(root, stages_extra=None) -> str:
    volumes = []
    for i in range(3):
        base = PhantomSpec(grid_dims=(32, 32, 32), blur_sigma=0.8, noise_sigma=0.02, seed=i)
        spec = scatter_pores(base, 3, radius_range=(2.0, 3.0), seed=20 + i)
        volumes.append({"name": f"ph{i}", "phantom": spec.model_dump(mode="json")})
    test = scatter_pores(PhantomSpec(grid_dims=(32, 32, 32), blur_sigma=0.8, noise_sigma=0.02, seed=9), 3, (2.0, 3.0), 29)
    volumes.append({"name": "held_out", "phantom": test.model_dump(mode="json"), "role": "test"})
    stages = {
        "label": {"surface_margin": 2},
        "scorer": {"pca": PcaSpec(n_components=8, n_samples=500).model_dump()},
        "score": {"patch_size": 32, "stride": 16},
        "postproc": {"sigma_grid": [1.0, 2.0]},
        "degrade": {"base_angles": 60},
    }
    stages.update(stages_extra or {})
    config = {"volumes": volumes, "folds": 3, "seed": 11, "stages": stages, "output_dir": "results"}
    path = root / "exp.json"
    path.write_text(json.dumps(config))
    return str(path)


@pytest.mark.e2e
class TestVolumeCommands:
    """phantom, histogram, label and degrade."""

    def test_phantom_writes_volume_labels_and_spec(self, phantom_files):
        volume = load_volume(phantom_files / "ph.json")
        labels = load_mask(phantom_files / "ph_labels.json")
        spec = json.loads((phantom_files / "ph_spec.json").read_text())

        assert volume.dims == (32, 32, 32)
        assert labels.shape == (32, 32, 32) and labels.any()
        assert len(spec["pores"]) == 3

    def test_phantom_from_spec_is_reproducible(self, phantom_files, tmp_path):
        _invoke("phantom", "--out", str(tmp_path / "again"), "--spec", str(phantom_files / "ph_spec.json"))

        assert (tmp_path / "again.raw").read_bytes() == (phantom_files / "ph.raw").read_bytes()

    def test_histogram_reports_two_peaks(self, phantom_files):
        result = _invoke("histogram", str(phantom_files / "ph.json"), "--bins", "64")

        assert "bimodal" in result.output
        assert "material" in result.output

    def test_label_writes_mask_and_pore_table(self, phantom_files, tmp_path):
        _invoke(
            "label", str(phantom_files / "ph.json"), "--out", str(tmp_path / "labels"),
            "--report", str(tmp_path / "pores.csv"),
        )

        mask = load_mask(tmp_path / "labels.json")
        table = pd.read_csv(tmp_path / "pores.csv")
        assert mask.sum() == table["voxels"].sum()
        assert table["id"].tolist() == list(range(1, len(table) + 1))
        assert len(table) >= 2

    def test_degrade_keeps_dims(self, phantom_files, tmp_path):
        _invoke(
            "degrade", str(phantom_files / "ph.json"), "--exposure", "0.5", "--projections", "0.5",
            "--angles", "60", "--seed", "3", "--out", str(tmp_path / "deg"),
        )

        assert load_volume(tmp_path / "deg.json").dims == (32, 32, 32)

    def test_missing_volume_fails_with_hint(self, tmp_path):
        result = CliRunner().invoke(cli, ["histogram", str(tmp_path / "nothing.json")])

        assert result.exit_code == 1
        assert "failed" in result.output

    def test_invalid_degradation_fraction_fails(self, phantom_files, tmp_path):
        result = CliRunner().invoke(
            cli, ["degrade", str(phantom_files / "ph.json"), "--exposure", "1.5", "--out", str(tmp_path / "d")]
        )

        assert result.exit_code == 1


@pytest.mark.e2e
class TestScoreCommands:
    """score, import-scores, postproc, score-labels and eval."""

    def test_score_writes_scores_and_reconstruction(self, phantom_files, tmp_path):
        _invoke(
            "score", str(phantom_files / "ph.json"), "--scorer", "pca",
            "--out-score", str(tmp_path / "A"), "--out-recon", str(tmp_path / "V"),
            "--patch", "32", "--stride", "16", "--seed", "2",
        )

        scores = load_volume(tmp_path / "A.json")
        recon = load_volume(tmp_path / "V.json")
        assert scores.dims == recon.dims == (32, 32, 32)
        assert np.all(scores.data >= 0)

    def test_import_scores_clamps_negatives(self, tmp_path):
        data = np.zeros((6, 6, 6), dtype=np.float32)
        data[0, 0, :3] = -1.0
        save_volume(Volume.from_array(data), tmp_path / "neg")

        result = _invoke("import-scores", "--score", str(tmp_path / "neg.json"), "--out-score", str(tmp_path / "ok"))

        assert "3 negative score(s) clamped" in result.output
        assert load_volume(tmp_path / "ok.json").data.min() == 0.0

    def test_postproc_recovers_suppression_parameters(self, phantom_files, tmp_path):
        recon = load_volume(phantom_files / "ph.json")
        save_volume(recon.with_data(0.3 * surface_field(recon, 1.0)), tmp_path / "A")

        _invoke(
            "postproc", "--score", str(tmp_path / "A.json"), "--recon", str(phantom_files / "ph.json"),
            "--sigma-grid", "0.5,1,2", "--out", str(tmp_path / "Apores"),
            "--params-out", str(tmp_path / "params.json"),
        )

        params = json.loads((tmp_path / "params.json").read_text())
        assert params["sigma"] == 1.0
        assert params["lambda"] == pytest.approx(0.3, rel=1e-3)
        assert load_volume(tmp_path / "Apores.json").data.max() < 1e-4

    def test_postproc_requires_reconstruction(self, tmp_path):
        save_volume(Volume.from_array(np.ones((4, 4, 4))), tmp_path / "A")

        result = CliRunner().invoke(
            cli, ["postproc", "--score", str(tmp_path / "A.json"), "--recon", str(tmp_path / "none.json"), "--out", str(tmp_path / "o")]
        )

        assert result.exit_code == 1

    def test_score_labels_thresholds_and_filters(self, tmp_path):
        data = np.zeros((16, 16, 16), dtype=np.float32)
        data[4:8, 4:8, 4:8] = 0.9
        data[12, 12, 12] = 0.9
        save_volume(Volume.from_array(data), tmp_path / "A")

        _invoke(
            "score-labels", "--score", str(tmp_path / "A.json"), "--threshold", "0.5",
            "--out", str(tmp_path / "lab"), "--report", str(tmp_path / "pores.csv"),
        )

        table = pd.read_csv(tmp_path / "pores.csv")
        assert table["voxels"].tolist() == [64]
        assert load_mask(tmp_path / "lab.json").sum() == 64

    def test_eval_of_perfect_scores(self, phantom_files, tmp_path):
        labels = load_mask(phantom_files / "ph_labels.json")
        save_volume(Volume.from_array(labels.astype(np.float32)), tmp_path / "A")

        _invoke(
            "eval", "--score", str(tmp_path / "A.json"), "--labels", str(phantom_files / "ph_labels.json"),
            "--object-only", "--volume", str(phantom_files / "ph.json"),
            "--out", str(tmp_path / "curves.csv"), "--summary", str(tmp_path / "summary.json"),
        )

        summary = json.loads((tmp_path / "summary.json").read_text())
        assert summary["auc"] == 1.0
        assert summary["ap"] == 1.0
        assert summary["n_positive"] == int(labels.sum())
        curves = pd.read_csv(tmp_path / "curves.csv")
        assert set(curves["kind"]) == {"roc", "pr"}

    def test_eval_dims_mismatch_fails(self, tmp_path):
        save_volume(Volume.from_array(np.zeros((4, 4, 4))), tmp_path / "A")
        save_mask(np.zeros((4, 4, 5), dtype=bool), tmp_path / "L")

        result = CliRunner().invoke(
            cli, ["eval", "--score", str(tmp_path / "A.json"), "--labels", str(tmp_path / "L.json"), "--out", str(tmp_path / "c.csv")]
        )

        assert result.exit_code == 1


@pytest.mark.e2e
@pytest.mark.slow
class TestExperimentCommands:
    """xval, grid and sweep driven by an experiment file."""

    def test_grid_two_phase(self, tmp_path):
        config = _experiment(tmp_path)
        grid = tmp_path / "grid.json"
        grid.write_text(json.dumps({"alphas": [0.37, 0.63], "betas": [0.1, 0.37], "gammas": [0.5, 1.0]}))

        result = _invoke("grid", "--config", config, "--grid", str(grid))

        out = tmp_path / "results" / "grid"
        table = pd.read_csv(out / "table.csv")
        assert len(table) == 4 + 2
        assert set(table["phase"]) == {"alpha_beta", "gamma"}
        summary = json.loads((out / "summary.json").read_text())
        assert summary["kind"] == "two_phase"
        assert "Best cell" in result.output

    def test_xval(self, tmp_path):
        config = _experiment(tmp_path)

        _invoke("xval", "--config", config, "--output-dir", str(tmp_path / "xv"))

        summary = json.loads((tmp_path / "xv" / "summary.json").read_text())
        assert set(summary["metrics"]) == {"auc", "ap", "auc_post", "ap_post"}
        assert len(pd.read_csv(tmp_path / "xv" / "table.csv")) == 3

    def test_sweep(self, tmp_path):
        config = _experiment(tmp_path)

        _invoke("sweep", "--config", config, "--exposures", "1,0.5", "--projections", "1,0.5")

        table = pd.read_csv(tmp_path / "results" / "sweep" / "table.csv")
        assert len(table) == 4
        assert table["n_angles"].tolist() == [60, 30, 60, 30]
        assert table["valid"].all()

    def test_invalid_config_fails(self, tmp_path):
        path = tmp_path / "exp.json"
        path.write_text(json.dumps({"volumes": [], "folds": 5}))

        result = CliRunner().invoke(cli, ["xval", "--config", str(path)])

        assert result.exit_code == 1
