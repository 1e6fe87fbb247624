"""Pipeline Service - stage wiring shared by the CLI and the experiment harness."""

from typing import List, Literal, Optional, Sequence, Tuple

import numpy as np
from loguru import logger
from pydantic import BaseModel, ConfigDict, Field, field_validator
from rich.console import Console
from rich.progress import Progress

from ..config.settings import Settings
from ..data.models import PoreMask, Volume
from ..evaluation.metrics import EvalCurves, evaluate_volume
from .degrade import DegradeSpec, degrade_volume
from .labeler import DEFAULT_SURFACE_MARGIN, extract_pore_labels, object_mask
from .patchflow import AugmentSpec, plan_patches
from .postproc import DEFAULT_SIGMA_GRID, PostprocParams, optimize_params, suppress_surface
from .scorer import AnomalyScorer, IdentityScorer, PcaSpec, ScoreVolume, fit_pca_scorer, score_volume


class LabelStage(BaseModel):
    min_dims: int = Field(default=2, ge=1)
    n_bins: int = Field(default=256, ge=2)
    surface_margin: int = Field(default=DEFAULT_SURFACE_MARGIN, ge=0)
    unimodal_separation: float = Field(default=3.0, ge=0.0)


class ScorerStage(BaseModel):
    name: Literal["pca", "identity"] = "pca"
    pca: PcaSpec = Field(default_factory=PcaSpec)
    augment: Optional[AugmentSpec] = None


class ScoreStage(BaseModel):
    patch_size: int = Field(default=64, ge=1)
    stride: int = Field(default=32, ge=1)
    workers: int = Field(default=1, ge=1)


class PostprocStage(BaseModel):
    enabled: bool = True
    sigma_grid: List[float] = Field(default_factory=lambda: list(DEFAULT_SIGMA_GRID))
    use_mask: bool = False  # restrict the L1 objective to the object mask

    @field_validator("sigma_grid", mode="after")
    @classmethod
    def validate_grid(cls, v):
        if not v:
            raise ValueError("Sigma grid cannot be empty")
        return v


class EvalStage(BaseModel):
    restrict_to_object: bool = True
    max_voxels: Optional[int] = Field(default=100_000_000, ge=1)


class DegradeStage(BaseModel):
    base_angles: int = Field(default=720, ge=2)
    i0: float = Field(default=1e5, gt=0.0)
    mu_scale: float = Field(default=0.01, gt=0.0)


class StageParams(BaseModel):
    """Per-stage parameters of the label → score → postproc → eval chain."""

    label: LabelStage = Field(default_factory=LabelStage)
    scorer: ScorerStage = Field(default_factory=ScorerStage)
    score: ScoreStage = Field(default_factory=ScoreStage)
    postproc: PostprocStage = Field(default_factory=PostprocStage)
    eval: EvalStage = Field(default_factory=EvalStage)
    degrade: DegradeStage = Field(default_factory=DegradeStage)

    @classmethod
    def from_settings(cls, settings: Settings) -> "StageParams":
        """Stage defaults taken from application settings."""
        return cls(
            label=LabelStage(
                min_dims=settings.min_dims,
                n_bins=settings.otsu_bins,
                surface_margin=settings.surface_margin,
                unimodal_separation=settings.unimodal_separation,
            ),
            scorer=ScorerStage(
                pca=PcaSpec(
                    patch_edge=settings.pca_patch_edge,
                    stride=settings.pca_stride,
                    n_components=settings.pca_components,
                    n_samples=settings.pca_samples,
                )
            ),
            score=ScoreStage(
                patch_size=settings.patch_size,
                stride=settings.patch_stride,
                workers=settings.workers,
            ),
            postproc=PostprocStage(sigma_grid=[float(s) for s in settings.default_sigma_grid()]),
            eval=EvalStage(max_voxels=settings.eval_max_voxels),
            degrade=DegradeStage(
                base_angles=settings.degrade_angles,
                i0=settings.degrade_i0,
                mu_scale=settings.degrade_mu_scale,
            ),
        )


class VolumeEvaluation(BaseModel):
    """Raw and surface-suppressed evaluation of one scored volume."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    name: str
    raw: EvalCurves
    post: Optional[EvalCurves] = None
    params: Optional[PostprocParams] = None

    @property
    def best(self) -> EvalCurves:
        return self.post if self.post is not None else self.raw


class PipelineService:
    """Runs pipeline stages with one set of stage parameters."""

    def __init__(self, stages: StageParams, show_progress: bool = False):
        """Initialize the service.

        Args:
            stages: Parameters of every stage.
            show_progress: Render a rich progress bar for long loops.
        """
        self.stages = stages
        self.show_progress = show_progress
        self.console = Console(stderr=True)

    @classmethod
    def from_settings(cls, settings: Settings, show_progress: bool = False) -> "PipelineService":
        return cls(StageParams.from_settings(settings), show_progress=show_progress)

    def label(self, volume: Volume) -> PoreMask:
        stage = self.stages.label
        return extract_pore_labels(
            volume,
            min_dims=stage.min_dims,
            n_bins=stage.n_bins,
            surface_margin=stage.surface_margin,
            unimodal_separation=stage.unimodal_separation,
        )

    def object_mask(self, volume: Volume) -> np.ndarray:
        return object_mask(volume, self.stages.label.n_bins)

    def fit_scorer(
        self,
        train: Sequence[Volume],
        seed: int,
        masks: Optional[Sequence[np.ndarray]] = None,
    ) -> AnomalyScorer:
        stage = self.stages.scorer
        if stage.name == "identity":
            return IdentityScorer()
        if masks is None:
            masks = [self.object_mask(v) for v in train]
        return fit_pca_scorer(list(train), stage.pca, seed, masks=masks, augment_spec=stage.augment)

    def score(self, scorer: AnomalyScorer, volume: Volume) -> ScoreVolume:
        stage = self.stages.score
        grid = plan_patches(volume.dims, stage.patch_size, stage.stride)
        if not self.show_progress:
            return score_volume(scorer, volume, grid, workers=stage.workers)
        with Progress(console=self.console, transient=True) as progress:
            task = progress.add_task(f"Scoring {grid.n_patches} patches...", total=grid.n_patches)
            return score_volume(
                scorer,
                volume,
                grid,
                workers=stage.workers,
                on_patch=lambda _: progress.advance(task),
            )

    def postprocess(
        self, sv: ScoreVolume, mask: Optional[np.ndarray] = None
    ) -> Tuple[Volume, PostprocParams]:
        stage = self.stages.postproc
        params = optimize_params(
            sv,
            stage.sigma_grid,
            mask=mask if stage.use_mask else None,
            workers=self.stages.score.workers,
        )
        return suppress_surface(sv, params), params

    def evaluate(
        self, score: Volume, labels: np.ndarray, obj: Optional[np.ndarray] = None, seed: int = 0
    ) -> EvalCurves:
        stage = self.stages.eval
        region = obj if stage.restrict_to_object else None
        return evaluate_volume(score, labels, mask=region, max_voxels=stage.max_voxels, seed=seed)

    def evaluate_scored(
        self,
        name: str,
        sv: ScoreVolume,
        labels: np.ndarray,
        obj: Optional[np.ndarray] = None,
        seed: int = 0,
    ) -> VolumeEvaluation:
        """Evaluate raw scores and, when enabled, the surface-suppressed scores."""
        raw = self.evaluate(sv.score, labels, obj, seed)
        if not self.stages.postproc.enabled or sv.recon is None:
            return VolumeEvaluation(name=name, raw=raw)
        suppressed, params = self.postprocess(sv, obj)
        post = self.evaluate(suppressed, labels, obj, seed)
        logger.info(
            f"{name}: AUC {raw.auc:.4f} → {post.auc:.4f}, AP {raw.ap:.4f} → {post.ap:.4f}"
        )
        return VolumeEvaluation(name=name, raw=raw, post=post, params=params)

    def degrade(
        self, volume: Volume, exposure: float, projections: float, seed: int, add_noise: bool = True
    ) -> Volume:
        stage = self.stages.degrade
        spec = DegradeSpec(
            exposure_fraction=exposure,
            projection_fraction=projections,
            base_angles=stage.base_angles,
            i0=stage.i0,
            mu_scale=stage.mu_scale,
            add_noise=add_noise,
            seed=seed,
        )
        return degrade_volume(volume, spec, workers=self.stages.score.workers)
