"""Tests for anomaly scorers, score volumes and score thresholding."""

import io

import numpy as np
import pytest
from rich.console import Console
from rich.progress import Progress
from scipy import ndimage

from porovox.calculators.labeler import object_mask
from porovox.calculators.patchflow import plan_patches
from porovox.calculators.pipeline_service import PipelineService, ScorerStage, ScoreStage, StageParams
from porovox.calculators.scorer import (
    AnomalyScorer,
    IdentityScorer,
    PcaScorer,
    PcaSpec,
    ScorerError,
    ScoreVolume,
    binarize_scores,
    export_scores,
    fit_pca_scorer,
    import_scores,
    score_volume,
    scorer_from_name,
    scores_to_labels,
)
from porovox.data.loaders import save_volume
from porovox.data.models import Volume


@pytest.fixture
def ramp_volume() -> Volume:
    x = np.arange(16, dtype=np.float64)[:, None, None]
    return Volume.from_array(np.broadcast_to(x, (16, 16, 16)))


@pytest.fixture
def all_true() -> np.ndarray:
    return np.ones((16, 16, 16), dtype=bool)


@pytest.mark.unit
class TestPcaScorer:
    """Fitting and applying the PCA scorer."""

    def test_constant_training_data(self, all_true):
        volume = Volume.from_array(np.full((16, 16, 16), 0.7))
        scorer = fit_pca_scorer([volume], PcaSpec(n_components=4), masks=[all_true])
        assert scorer.n_components == 0
        assert np.allclose(scorer.mean, 0.7)
        score, recon = scorer.score(np.full((16, 16, 16), 0.7))
        assert np.allclose(score, 0.0, atol=1e-6)
        assert np.allclose(recon, 0.7)

    def test_rank_one_training_data(self, ramp_volume, all_true):
        scorer = fit_pca_scorer([ramp_volume], PcaSpec(n_components=1), masks=[all_true])
        assert scorer.n_components == 1
        score, _ = scorer.score(ramp_volume.data)
        assert np.max(score) < 1e-6

    def test_rank_deficient_data_reduces_components(self, ramp_volume, all_true):
        scorer = fit_pca_scorer([ramp_volume], PcaSpec(n_components=4), masks=[all_true])
        assert scorer.n_components == 1

    def test_basis_is_orthonormal(self, rng, all_true):
        volume = Volume.from_array(rng.random((16, 16, 16)))
        spec = PcaSpec(patch_edge=4, stride=2, n_components=8, n_samples=500)
        scorer = fit_pca_scorer([volume], spec, seed=3, masks=[all_true])
        gram = scorer.basis @ scorer.basis.T
        assert np.max(np.abs(gram - np.eye(8))) < 1e-6

    def test_residual_ignores_subspace_directions(self, rng, all_true):
        volume = Volume.from_array(rng.random((16, 16, 16)))
        spec = PcaSpec(patch_edge=4, stride=2, n_components=8, n_samples=500)
        scorer = fit_pca_scorer([volume], spec, seed=3, masks=[all_true])
        x = rng.random((5, 64))
        shifted = x + rng.normal(size=(5, 8)) @ scorer.basis
        residual = x - scorer.reconstruct(x)
        assert np.allclose(shifted - scorer.reconstruct(shifted), residual, atol=1e-5)

    def test_fitting_is_deterministic(self, porous_phantom):
        volume, _ = porous_phantom
        spec = PcaSpec(n_components=8, n_samples=500)
        first = fit_pca_scorer([volume], spec, seed=7)
        second = fit_pca_scorer([volume], spec, seed=7)
        assert np.array_equal(first.basis, second.basis)
        assert np.array_equal(first.mean, second.mean)

    def test_insufficient_samples(self):
        volume = Volume.from_array(np.ones((10, 10, 10)))
        with pytest.raises(ScorerError):
            fit_pca_scorer([volume], PcaSpec(), masks=[np.ones((10, 10, 10), dtype=bool)])

    def test_spec_limits(self):
        with pytest.raises(ValueError):
            PcaSpec(patch_edge=2, n_components=8)
        with pytest.raises(ValueError):
            PcaSpec(patch_edge=4, stride=5)

    def test_unfitted_scorer(self):
        scorer = PcaScorer(
            patch_edge=2, stride=1, mean=np.zeros(8), basis=np.zeros((0, 8)), fitted=False
        )
        with pytest.raises(ScorerError):
            scorer.score(np.zeros((4, 4, 4)))

    def test_scorers_satisfy_protocol(self, ramp_volume, all_true):
        assert isinstance(IdentityScorer(), AnomalyScorer)
        assert isinstance(fit_pca_scorer([ramp_volume], PcaSpec(n_components=1), masks=[all_true]), AnomalyScorer)

    def test_scorer_from_name(self):
        assert isinstance(scorer_from_name("identity"), IdentityScorer)
        with pytest.raises(ScorerError):
            scorer_from_name("pca")
        with pytest.raises(ScorerError):
            scorer_from_name("vae")


@pytest.mark.unit
class TestScoreVolume:
    """Patch-wise scoring of whole volumes."""

    def test_identity_scorer_gives_zero_scores(self, random_volume):
        grid = plan_patches(random_volume.dims, 8, 4)
        sv = score_volume(IdentityScorer(), random_volume, grid)
        assert np.all(sv.score.data == 0.0)
        assert np.allclose(sv.recon.data, random_volume.data, atol=1e-6)
        assert sv.clamped_voxels == 0

    def test_scoring_is_deterministic(self, porous_phantom):
        volume, _ = porous_phantom
        scorer = fit_pca_scorer([volume], PcaSpec(n_components=8, n_samples=500), seed=1)
        grid = plan_patches(volume.dims, 32, 16)
        first = score_volume(scorer, volume, grid)
        second = score_volume(scorer, volume, grid, workers=3)
        assert np.array_equal(first.score.data, second.score.data)
        assert np.array_equal(first.recon.data, second.recon.data)

    @pytest.mark.parametrize("workers", [1, 3])
    def test_every_patch_is_reported_once_in_order(self, random_volume, workers):
        grid = plan_patches(random_volume.dims, 8, 4)
        seen = []
        score_volume(IdentityScorer(), random_volume, grid, workers=workers, on_patch=seen.append)
        assert seen == list(range(grid.n_patches))

    def test_progress_bar_advances_per_patch(self, random_volume, monkeypatch):
        advances = []
        monkeypatch.setattr(Progress, "advance", lambda self, task, advance=1: advances.append(advance))
        service = PipelineService(
            StageParams(scorer=ScorerStage(name="identity"), score=ScoreStage(patch_size=8, stride=4)),
            show_progress=True,
        )
        service.console = Console(file=io.StringIO())

        service.score(IdentityScorer(), random_volume)

        assert len(advances) == plan_patches(random_volume.dims, 8, 4).n_patches

    def test_dims_mismatch(self, random_volume):
        grid = plan_patches((8, 8, 8), 8, 4)
        with pytest.raises(ScorerError):
            score_volume(IdentityScorer(), random_volume, grid)

    def test_score_volume_invariants(self):
        score = Volume.from_array(np.zeros((4, 4, 4)))
        with pytest.raises(ValueError):
            ScoreVolume(score=score, recon=Volume.from_array(np.zeros((4, 4, 5))))
        with pytest.raises(ValueError):
            ScoreVolume(score=Volume.from_array(-np.ones((4, 4, 4))))
        with pytest.raises(ScorerError):
            ScoreVolume(score=score).require_recon()

    @pytest.mark.slow
    def test_pores_score_higher_than_poreless_material(self, porous_phantom, poreless_phantom):
        clean, _ = poreless_phantom
        porous, truth = porous_phantom
        spec = PcaSpec(n_components=16, n_samples=2000)
        scorer = fit_pca_scorer([clean], spec, seed=0)

        def interior_scores(volume):
            interior = ndimage.binary_erosion(object_mask(volume), iterations=3)
            sv = score_volume(scorer, volume, plan_patches(volume.dims, 32, 16))
            return sv.score.data[interior]

        assert truth.n_voxels > 0
        baseline = np.percentile(interior_scores(clean), 99)
        porous_tail = np.percentile(interior_scores(porous), 99.9)
        assert baseline < porous_tail


@pytest.mark.unit
class TestImportScores:
    """Score import/export boundary."""

    def test_round_trip(self, tmp_path, rng):
        sv = ScoreVolume(
            score=Volume.from_array(rng.random((6, 7, 8))),
            recon=Volume.from_array(rng.random((6, 7, 8))),
        )
        export_scores(sv, tmp_path / "A.json", tmp_path / "V.json")
        loaded = import_scores(tmp_path / "A.json", tmp_path / "V.json")
        assert np.array_equal(loaded.score.data, sv.score.data)
        assert np.array_equal(loaded.recon.data, sv.recon.data)

    def test_mismatched_dims(self, tmp_path):
        save_volume(Volume.from_array(np.zeros((4, 4, 4))), tmp_path / "A")
        save_volume(Volume.from_array(np.zeros((4, 4, 5))), tmp_path / "V")
        with pytest.raises(ScorerError):
            import_scores(tmp_path / "A.json", tmp_path / "V.json")

    def test_negative_scores_are_clamped(self, tmp_path):
        data = np.zeros((4, 4, 4))
        data[0, 0, :3] = -1.0
        data[1, 1, 1] = 2.0
        save_volume(Volume.from_array(data), tmp_path / "A")
        sv = import_scores(tmp_path / "A.json")
        assert sv.clamped_voxels == 3
        assert sv.score.data.min() == 0.0
        assert sv.score.data[1, 1, 1] == 2.0

    def test_missing_reconstruction(self, tmp_path):
        save_volume(Volume.from_array(np.zeros((4, 4, 4))), tmp_path / "A")
        with pytest.raises(ScorerError):
            import_scores(tmp_path / "A.json", require_recon=True)


@pytest.mark.unit
class TestScoresToLabels:
    """Thresholding scores into pore labels."""

    @staticmethod
    def _blobs() -> ScoreVolume:
        data = np.zeros((12, 12, 12))
        data[2:5, 2:5, 2:5] = 1.0
        data[9, 9, 9] = 1.0
        return ScoreVolume(score=Volume.from_array(data))

    def test_threshold_above_max(self):
        assert scores_to_labels(self._blobs(), 1.5).n_voxels == 0

    def test_zero_threshold_selects_everything(self):
        sv = ScoreVolume(score=Volume.from_array(np.full((5, 5, 5), 0.2)))
        assert binarize_scores(sv, 0.0).all()

    def test_small_blob_is_suppressed(self):
        labels = scores_to_labels(self._blobs(), 0.5)
        assert labels.n_components == 1
        assert labels.n_voxels == 27
        assert labels.components[0].bbox_min == (2, 2, 2)

    def test_binarization_is_monotone(self, rng):
        sv = ScoreVolume(score=Volume.from_array(rng.random((8, 8, 8))))
        low, high = binarize_scores(sv, 0.3), binarize_scores(sv, 0.6)
        assert not np.any(high & ~low)

    def test_threshold_must_be_finite(self):
        with pytest.raises(ScorerError):
            binarize_scores(np.zeros((2, 2, 2)), float("nan"))
