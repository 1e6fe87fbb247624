"""
Cross-validation and grid-search harness.

Experiments run over a roster of volumes. ``xval`` volumes are split into k
folds (each volume validates exactly once); ``test`` volumes are only ever
scored by fitted models.

Experiments:
1. **Grid search** over Focal Tversky (α, β, γ) cells. Every (cell, fold)
   pair is evaluated with a fold metric, cells are summarised as mean ±
   standard error and the best cell is the highest mean, ties resolved to
   the lexicographically smallest (α, β, γ).
2. **Two-phase search**: α/β at a fixed γ, then a γ sweep at the best α/β.
3. **Degradation sweep**: a scorer fitted on the clean ``xval`` volumes
   scores degraded copies of the target volumes for every (exposure,
   projection) pair.
4. **K-fold scorer evaluation**: per fold the scorer is fitted on the
   training volumes and AUC/AP are computed on the validation volumes
   before and after surface suppression.

A failing grid cell is recorded and the search continues. Reports carry no
timestamps, so the same config and seed produce identical reports.

Usage:
    config = load_config("exp.json")
    validator = CrossValidator(config)
    report = validator.run_two_phase_search(GridSpec())
    print(report.best)
"""

import itertools
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Dict, List, Literal, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from loguru import logger
from pydantic import BaseModel, Field, ValidationError, field_validator, model_validator
from sklearn.model_selection import KFold

from .. import __version__
from ..calculators.degrade import select_angles
from ..calculators.pipeline_service import PipelineService, StageParams, VolumeEvaluation
from ..calculators.scorer import AnomalyScorer, ScoreVolume
from ..data.loaders import load_mask, load_volume
from ..data.models import PhantomSpec, Volume
from ..data.phantom import generate_phantom
from ..evaluation.losses import FTLParams, dice_score
from ..evaluation.metrics import EvalCurves, MetricError, median_curve, summarize_folds, welch_ttest
from ..utils.provenance import config_hash, fold_seed

ALPHA_BETA_GRID: Tuple[float, ...] = (0.1, 0.37, 0.63, 0.9)
GAMMA_GRID: Tuple[float, ...] = (1 / 3, 0.5, 2 / 3, 1.0, 4 / 3, 1.5, 5 / 3, 2.0)
DEFAULT_EXPOSURES: Tuple[float, ...] = (1.0, 0.75, 0.5, 0.25)
DEFAULT_PROJECTIONS: Tuple[float, ...] = (1.0, 0.5, 0.333)


class ExperimentError(ValueError):
    """Raised for invalid rosters, grids and experiments that cannot run."""


# =======================================================================================
# ISSUES
# =======================================================================================


class HarnessIssue(BaseModel):
    """A recorded experiment failure or anomaly."""

    severity: Literal["ERROR", "WARNING"]
    category: str  # e.g. "Grid cell", "Degradation", "Statistics"
    description: str
    context: Dict[str, Any] = Field(default_factory=dict)

    def __str__(self) -> str:
        return f"[{self.severity}] {self.category}: {self.description}"


class IssueLog(BaseModel):
    issues: List[HarnessIssue] = Field(default_factory=list)

    def add_error(self, category: str, description: str, **context) -> None:
        self.issues.append(HarnessIssue(severity="ERROR", category=category, description=description, context=context))
        logger.warning(f"{category}: {description}")

    def add_warning(self, category: str, description: str, **context) -> None:
        self.issues.append(HarnessIssue(severity="WARNING", category=category, description=description, context=context))
        logger.warning(f"{category}: {description}")

    @property
    def is_valid(self) -> bool:
        return not any(i.severity == "ERROR" for i in self.issues)


# =======================================================================================
# CONFIGURATION
# =======================================================================================


class VolumeEntry(BaseModel):
    """One roster volume: a stored volume or a phantom generated on demand.

    ``labels`` points to a stored mask. Without it, phantoms use their
    ground truth and stored volumes are labeled with the pore labeler.
    """

    name: str = Field(min_length=1)
    path: Optional[Path] = None
    phantom: Optional[PhantomSpec] = None
    labels: Optional[Path] = None
    role: Literal["xval", "test"] = "xval"

    @model_validator(mode="after")
    def validate_source(self):
        if (self.path is None) == (self.phantom is None):
            raise ValueError(f"Volume '{self.name}' needs exactly one of 'path' or 'phantom'")
        return self


class ExperimentConfig(BaseModel):
    """Roster, fold count, stage parameters, seed and output directory."""

    volumes: List[VolumeEntry]
    folds: int = Field(default=5, ge=2)
    stages: StageParams = Field(default_factory=StageParams)
    seed: int = Field(default=0, ge=0)
    output_dir: Path = Path("output")

    @model_validator(mode="after")
    def validate_roster(self):
        names = [v.name for v in self.volumes]
        duplicates = sorted({n for n in names if names.count(n) > 1})
        if duplicates:
            raise ValueError(f"Duplicate volume names: {duplicates}")
        n_xval = len(self.xval_names)
        if n_xval < self.folds:
            raise ValueError(f"{n_xval} cross-validation volume(s) cannot fill {self.folds} folds")
        return self

    @property
    def xval_names(self) -> List[str]:
        return [v.name for v in self.volumes if v.role == "xval"]

    @property
    def test_names(self) -> List[str]:
        return [v.name for v in self.volumes if v.role == "test"]

    def entry(self, name: str) -> VolumeEntry:
        for v in self.volumes:
            if v.name == name:
                return v
        raise ExperimentError(f"Unknown volume '{name}'")

    def config_hash(self) -> str:
        """Hash of everything that affects results (the output directory does not)."""
        return config_hash(self.model_dump(mode="json", exclude={"output_dir"}))


def _resolve(path: Optional[Path], base: Path) -> Optional[Path]:
    if path is None or path.is_absolute():
        return path
    return base / path


def load_config(path: Union[str, Path]) -> ExperimentConfig:
    """Load an experiment JSON file; relative paths resolve against its directory."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
        config = ExperimentConfig.model_validate(raw)
    except FileNotFoundError as e:
        raise ExperimentError(f"Experiment config not found: {path}") from e
    except (json.JSONDecodeError, ValidationError) as e:
        raise ExperimentError(f"Invalid experiment config {path}: {e}") from e

    base = path.parent
    volumes = [
        v.model_copy(update={"path": _resolve(v.path, base), "labels": _resolve(v.labels, base)})
        for v in config.volumes
    ]
    update: Dict[str, Any] = {"volumes": volumes}
    if "output_dir" in raw:
        update["output_dir"] = _resolve(config.output_dir, base)
    logger.info(f"Loaded experiment config {path}: {len(volumes)} volume(s), {config.folds} folds")
    return config.model_copy(update=update)


class GridSpec(BaseModel):
    """FTL parameter axes, fixed parameters and the fold metric name.

    ``gammas`` is the full γ axis of a plain grid search and the sweep axis
    of the second phase of the two-phase search; the first phase uses
    ``phase_gamma``.
    """

    alphas: List[float] = Field(default_factory=lambda: list(ALPHA_BETA_GRID))
    betas: List[float] = Field(default_factory=lambda: list(ALPHA_BETA_GRID))
    gammas: List[float] = Field(default_factory=lambda: list(GAMMA_GRID))
    fixed: Dict[str, float] = Field(default_factory=dict)
    metric: str = "ftl_calibrated_dice"
    phase_gamma: float = Field(default=0.5, gt=0.0)

    @field_validator("alphas", "betas", mode="after")
    @classmethod
    def validate_weights(cls, v):
        if not v:
            raise ValueError("Grid axes cannot be empty")
        if any(not 0 < x <= 1 for x in v):
            raise ValueError(f"FN/FP weights must lie in (0, 1], got {v}")
        return sorted(set(v))

    @field_validator("gammas", mode="after")
    @classmethod
    def validate_gammas(cls, v):
        if not v:
            raise ValueError("Grid axes cannot be empty")
        if any(not (x > 0 and np.isfinite(x)) for x in v):
            raise ValueError(f"γ values must be positive, got {v}")
        return sorted(set(v))

    @field_validator("fixed", mode="after")
    @classmethod
    def validate_fixed(cls, v):
        unknown = sorted(set(v) - {"smooth"})
        if unknown:
            raise ValueError(f"Only 'smooth' can be fixed, got {unknown}")
        return v

    def cells(self) -> List[Tuple[float, float, float]]:
        """Cells in lexicographic (α, β, γ) order."""
        return list(itertools.product(self.alphas, self.betas, self.gammas))

    def params(self, alpha: float, beta: float, gamma: float) -> FTLParams:
        return FTLParams(alpha=alpha, beta=beta, gamma=gamma, **self.fixed)


def load_grid(path: Union[str, Path]) -> GridSpec:
    path = Path(path)
    try:
        return GridSpec.model_validate_json(path.read_text(encoding="utf-8"))
    except FileNotFoundError as e:
        raise ExperimentError(f"Grid file not found: {path}") from e
    except ValidationError as e:
        raise ExperimentError(f"Invalid grid file {path}: {e}") from e


# =======================================================================================
# REPORTS
# =======================================================================================


class FoldAssignment(BaseModel):
    fold: int
    train: List[str]
    validation: List[str]

    @model_validator(mode="after")
    def validate_disjoint(self):
        shared = sorted(set(self.train) & set(self.validation))
        if shared:
            raise ValueError(f"Fold {self.fold} trains and validates on {shared}")
        return self


class Provenance(BaseModel):
    config_hash: str
    seed: int
    fold_seeds: List[int]
    version: str = __version__
    grid_hash: Optional[str] = None


class CurvePoints(BaseModel):
    """One curve as rows of ``(x, y, threshold)``; thresholds may be absent."""

    kind: str
    x: List[float]
    y: List[float]
    threshold: Optional[List[float]] = None

    def frame(self) -> pd.DataFrame:
        threshold = self.threshold if self.threshold is not None else [np.nan] * len(self.x)
        return pd.DataFrame({"kind": self.kind, "x": self.x, "y": self.y, "threshold": threshold})


def _median_curves(evaluations: Sequence[EvalCurves], suffix: str) -> List[CurvePoints]:
    curves = []
    for kind in ("roc", "pr"):
        x, y = median_curve(evaluations, kind)
        curves.append(CurvePoints(kind=f"{kind}_{suffix}", x=x.tolist(), y=y.tolist()))
    return curves


def _curve_frame(curves: Sequence[CurvePoints]) -> pd.DataFrame:
    if not curves:
        return pd.DataFrame(columns=["kind", "x", "y", "threshold"])
    return pd.concat([c.frame() for c in curves], ignore_index=True)


class GridCell(BaseModel):
    alpha: float
    beta: float
    gamma: float
    fold_values: List[float] = Field(default_factory=list)
    mean: Optional[float] = None
    stderr: Optional[float] = None
    valid: bool = True
    error: Optional[str] = None

    @property
    def key(self) -> Tuple[float, float, float]:
        return (self.alpha, self.beta, self.gamma)

    @property
    def label(self) -> str:
        return f"a{self.alpha:g}_b{self.beta:g}_g{self.gamma:.4g}"


def select_best(cells: Sequence[GridCell]) -> Optional[GridCell]:
    """Highest mean among valid cells; ties go to the smallest (α, β, γ)."""
    best: Optional[GridCell] = None
    for cell in sorted((c for c in cells if c.valid), key=lambda c: c.key):
        if best is None or cell.mean > best.mean:
            best = cell
    return best


class CrossValReport(BaseModel):
    """Per-fold metric table of a grid search with the selected cell."""

    kind: Literal["grid"] = "grid"
    metric: str
    folds: List[FoldAssignment]
    cells: List[GridCell]
    best: Optional[GridCell] = None
    provenance: Provenance
    issues: List[HarnessIssue] = Field(default_factory=list)

    @property
    def n_evaluations(self) -> int:
        return sum(len(c.fold_values) for c in self.cells)

    def table(self) -> pd.DataFrame:
        n_folds = len(self.folds)
        rows = []
        for c in self.cells:
            row: Dict[str, Any] = {"alpha": c.alpha, "beta": c.beta, "gamma": c.gamma}
            for i in range(n_folds):
                row[f"fold_{i}"] = c.fold_values[i] if i < len(c.fold_values) else np.nan
            row.update(mean=c.mean, stderr=c.stderr, valid=c.valid, error=c.error or "")
            rows.append(row)
        return pd.DataFrame(rows)

    def curve_tables(self) -> Dict[str, pd.DataFrame]:
        """Fold metric series per cell."""
        return {
            c.label: CurvePoints(
                kind=self.metric, x=[float(i) for i in range(len(c.fold_values))], y=c.fold_values
            ).frame()
            for c in self.cells
        }

    def summary(self) -> Dict[str, Any]:
        return {
            "kind": self.kind,
            "metric": self.metric,
            "cells": len(self.cells),
            "evaluations": self.n_evaluations,
            "invalid_cells": sum(not c.valid for c in self.cells),
            "best": None if self.best is None else self.best.model_dump(),
        }


class TwoPhaseReport(BaseModel):
    """α/β search at a fixed γ followed by a γ sweep at the best α/β."""

    kind: Literal["two_phase"] = "two_phase"
    alpha_beta: CrossValReport
    gamma: CrossValReport

    @property
    def best(self) -> Optional[GridCell]:
        return self.gamma.best

    @property
    def provenance(self) -> Provenance:
        return self.gamma.provenance

    @property
    def issues(self) -> List[HarnessIssue]:
        return self.alpha_beta.issues + self.gamma.issues

    def table(self) -> pd.DataFrame:
        first = self.alpha_beta.table().assign(phase="alpha_beta")
        second = self.gamma.table().assign(phase="gamma")
        return pd.concat([first, second], ignore_index=True)

    def curve_tables(self) -> Dict[str, pd.DataFrame]:
        tables = {f"alpha_beta_{k}": v for k, v in self.alpha_beta.curve_tables().items()}
        tables.update({f"gamma_{k}": v for k, v in self.gamma.curve_tables().items()})
        return tables

    def summary(self) -> Dict[str, Any]:
        return {
            "kind": self.kind,
            "alpha_beta": self.alpha_beta.summary(),
            "gamma": self.gamma.summary(),
            "best": None if self.best is None else self.best.model_dump(),
        }


class VolumeResult(BaseModel):
    """AUC/AP of one scored volume before and after surface suppression."""

    name: str
    role: Literal["xval", "test"] = "xval"
    fold: Optional[int] = None
    auc: float
    ap: float
    auc_post: Optional[float] = None
    ap_post: Optional[float] = None
    lambda_: Optional[float] = None
    sigma: Optional[float] = None

    @classmethod
    def from_evaluation(cls, ev: VolumeEvaluation, role: str = "xval", fold: Optional[int] = None) -> "VolumeResult":
        return cls(
            name=ev.name,
            role=role,
            fold=fold,
            auc=ev.raw.auc,
            ap=ev.raw.ap,
            auc_post=None if ev.post is None else ev.post.auc,
            ap_post=None if ev.post is None else ev.post.ap,
            lambda_=None if ev.params is None else ev.params.lambda_,
            sigma=None if ev.params is None else ev.params.sigma,
        )


def _mean(values: Sequence[Optional[float]]) -> Optional[float]:
    present = [v for v in values if v is not None]
    if not present or len(present) != len(values):
        return None
    return float(np.mean(present))


class SweepCell(BaseModel):
    exposure: float
    projections: float
    n_angles: int
    volumes: List[VolumeResult] = Field(default_factory=list)
    curves: List[CurvePoints] = Field(default_factory=list)
    valid: bool = True
    error: Optional[str] = None

    @property
    def label(self) -> str:
        return f"e{self.exposure:g}_p{self.projections:g}"

    def means(self) -> Dict[str, Optional[float]]:
        return {
            key: _mean([getattr(v, key) for v in self.volumes]) if self.volumes else None
            for key in ("auc", "ap", "auc_post", "ap_post")
        }


class SweepReport(BaseModel):
    """AUC/AP over the (exposure, projection) degradation matrix."""

    kind: Literal["sweep"] = "sweep"
    targets: List[str]
    cells: List[SweepCell]
    provenance: Provenance
    issues: List[HarnessIssue] = Field(default_factory=list)

    def table(self) -> pd.DataFrame:
        rows = []
        for c in self.cells:
            row: Dict[str, Any] = {"exposure": c.exposure, "projections": c.projections, "n_angles": c.n_angles}
            row.update(c.means())
            row.update(valid=c.valid, error=c.error or "")
            rows.append(row)
        return pd.DataFrame(rows)

    def matrix(self, metric: str = "ap_post") -> pd.DataFrame:
        """Exposures as rows, projection fractions as columns."""
        return self.table().pivot(index="exposure", columns="projections", values=metric)

    def curve_tables(self) -> Dict[str, pd.DataFrame]:
        return {c.label: _curve_frame(c.curves) for c in self.cells}

    def summary(self) -> Dict[str, Any]:
        table = self.table()
        return {
            "kind": self.kind,
            "targets": self.targets,
            "cells": len(self.cells),
            "invalid_cells": sum(not c.valid for c in self.cells),
            "rows": table.replace({np.nan: None}).to_dict(orient="records"),
        }


class MetricSummary(BaseModel):
    mean: float
    stderr: float


class XvalFold(BaseModel):
    fold: int
    volumes: List[VolumeResult]
    curves: List[CurvePoints] = Field(default_factory=list)

    def means(self) -> Dict[str, Optional[float]]:
        return {key: _mean([getattr(v, key) for v in self.volumes]) for key in ("auc", "ap", "auc_post", "ap_post")}


class XvalReport(BaseModel):
    """K-fold scorer evaluation with fold summaries and a raw/post AP comparison."""

    kind: Literal["xval"] = "xval"
    folds: List[FoldAssignment]
    fold_results: List[XvalFold]
    test_results: List[VolumeResult] = Field(default_factory=list)
    metrics: Dict[str, MetricSummary] = Field(default_factory=dict)
    welch_t: Optional[float] = None
    welch_p: Optional[float] = None
    provenance: Provenance
    issues: List[HarnessIssue] = Field(default_factory=list)

    def table(self) -> pd.DataFrame:
        rows = []
        for f in self.fold_results:
            row: Dict[str, Any] = {"fold": f.fold, "validation": ";".join(v.name for v in f.volumes)}
            row.update(f.means())
            rows.append(row)
        return pd.DataFrame(rows)

    def curve_tables(self) -> Dict[str, pd.DataFrame]:
        return {f"fold_{f.fold}": _curve_frame(f.curves) for f in self.fold_results}

    def summary(self) -> Dict[str, Any]:
        return {
            "kind": self.kind,
            "metrics": {k: v.model_dump() for k, v in self.metrics.items()},
            "welch_t": self.welch_t,
            "welch_p": self.welch_p,
            "test_volumes": len(self.test_results),
        }


Report = Union[CrossValReport, TwoPhaseReport, SweepReport, XvalReport]


# =======================================================================================
# FOLDS AND METRICS
# =======================================================================================


def make_folds(roster: Sequence[Union[str, VolumeEntry]], k: int, seed: int = 0) -> List[FoldAssignment]:
    """Seeded k-fold split; every volume validates in exactly one fold.

    The roster order is shuffled once with ``seed`` and then cut into ``k``
    consecutive folds, the first ``len(roster) % k`` one volume larger.
    Fold ``i`` validates on slice ``i`` and trains on the rest, so the
    assignment is a seeded shuffle followed by a fixed rotation.

    Raises:
        ExperimentError: If the roster has fewer than ``k`` volumes.
    """
    names = [r.name if isinstance(r, VolumeEntry) else str(r) for r in roster]
    if k < 2:
        raise ExperimentError(f"At least 2 folds are required, got {k}")
    if len(names) < k:
        raise ExperimentError(f"Roster of {len(names)} volume(s) cannot fill {k} folds")

    splitter = KFold(n_splits=k, shuffle=True, random_state=seed % 2**32)
    folds = []
    for i, (train_idx, val_idx) in enumerate(splitter.split(np.arange(len(names)))):
        folds.append(
            FoldAssignment(
                fold=i,
                train=[names[j] for j in train_idx],
                validation=[names[j] for j in val_idx],
            )
        )
    return folds


FoldMetric = Callable[[FTLParams, FoldAssignment], float]


def _split_sorted(scores: np.ndarray, labels: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels, dtype=bool).ravel()
    return np.sort(scores[labels]), np.sort(scores[~labels])


def _threshold_candidates(positive: np.ndarray, negative: np.ndarray, n_candidates: int) -> np.ndarray:
    pooled = np.concatenate([positive, negative])
    return np.unique(np.quantile(pooled, np.linspace(0.0, 1.0, n_candidates)))


def _best_threshold(
    positive: np.ndarray, negative: np.ndarray, candidates: np.ndarray, params: FTLParams
) -> float:
    # predictions are ``score >= t``
    tp = positive.size - np.searchsorted(positive, candidates, side="left")
    fp = negative.size - np.searchsorted(negative, candidates, side="left")
    fn = positive.size - tp
    s = params.smooth
    index = (tp + s) / (tp + params.alpha * fn + params.beta * fp + s)
    loss = np.maximum(0.0, 1.0 - index) ** params.gamma
    return float(candidates[int(np.argmin(loss))])


def ftl_threshold(scores, labels, params: FTLParams, n_candidates: int = 256) -> float:
    """Score threshold minimising the Focal Tversky loss of ``scores ≥ t``.

    Candidates are ``n_candidates`` quantiles of the scores; ties go to the
    lowest threshold.
    """
    positive, negative = _split_sorted(scores, labels)
    if positive.size == 0:
        raise ExperimentError("Threshold calibration needs at least one positive voxel")
    candidates = _threshold_candidates(positive, negative, n_candidates)
    return _best_threshold(positive, negative, candidates, params)


@dataclass
class _FoldData:
    positive: np.ndarray
    negative: np.ndarray
    candidates: np.ndarray
    validation: List[Tuple[np.ndarray, np.ndarray]]


class FtlCalibratedDice:
    """Validation Dice at the FTL-optimal threshold of the training scores.

    Per fold the training score volumes are binarised at the threshold
    minimising FTL(α, β, γ) against the training labels; that threshold is
    applied to every validation volume and the per-volume Dice is averaged.
    """

    name = "ftl_calibrated_dice"

    def __init__(self, validator: "CrossValidator", n_candidates: int = 256):
        self.validator = validator
        self.n_candidates = n_candidates
        self._cache: Dict[int, _FoldData] = {}

    def _prepare(self, fold: FoldAssignment) -> _FoldData:
        if fold.fold in self._cache:
            return self._cache[fold.fold]
        v = self.validator
        train_scores, train_labels = [], []
        for name in fold.train:
            scores, labels = v.region_scores(fold, name)
            train_scores.append(scores)
            train_labels.append(labels)
        positive, negative = _split_sorted(np.concatenate(train_scores), np.concatenate(train_labels))
        if positive.size == 0:
            raise ExperimentError(f"Training volumes of fold {fold.fold} contain no pore voxels")
        data = _FoldData(
            positive=positive,
            negative=negative,
            candidates=_threshold_candidates(positive, negative, self.n_candidates),
            validation=[v.region_scores(fold, name) for name in fold.validation],
        )
        self._cache[fold.fold] = data
        return data

    def __call__(self, params: FTLParams, fold: FoldAssignment) -> float:
        data = self._prepare(fold)
        threshold = _best_threshold(data.positive, data.negative, data.candidates, params)
        scores = [dice_score(s >= threshold, labels) for s, labels in data.validation]
        return float(np.mean(scores))


METRICS: Dict[str, Callable[["CrossValidator"], FoldMetric]] = {
    FtlCalibratedDice.name: FtlCalibratedDice,
}


# =======================================================================================
# VALIDATOR
# =======================================================================================


class CrossValidator:
    """Runs experiments over one roster, caching volumes, labels and fold scores."""

    def __init__(self, config: ExperimentConfig, show_progress: bool = False):
        """Initialize the validator.

        Args:
            config: Validated experiment configuration.
            show_progress: Show rich progress while scoring volumes.
        """
        self.config = config
        self.service = PipelineService(config.stages, show_progress=show_progress)
        self.folds = make_folds(config.xval_names, config.folds, config.seed)
        self._volumes: Dict[str, Volume] = {}
        self._labels: Dict[str, np.ndarray] = {}
        self._objects: Dict[str, np.ndarray] = {}
        self._scorers: Dict[int, AnomalyScorer] = {}
        self._scored: Dict[Tuple[int, str], ScoreVolume] = {}
        self._evaluations: Dict[Tuple[int, str], VolumeEvaluation] = {}

    # ----------------------------------------------------------------- data access

    def volume(self, name: str) -> Volume:
        if name not in self._volumes:
            entry = self.config.entry(name)
            if entry.phantom is not None:
                volume, truth = generate_phantom(entry.phantom)
                if entry.labels is None:
                    self._labels[name] = truth.mask
            else:
                volume = load_volume(entry.path)
            self._volumes[name] = volume
        return self._volumes[name]

    def labels(self, name: str) -> np.ndarray:
        volume = self.volume(name)  # phantoms cache their ground truth here
        if name not in self._labels:
            entry = self.config.entry(name)
            if entry.labels is not None:
                mask = load_mask(entry.labels)
                if mask.shape != volume.dims:
                    raise ExperimentError(
                        f"Labels of '{name}' have dims {list(mask.shape)}, volume has {list(volume.dims)}"
                    )
            else:
                mask = self.service.label(volume).mask
            self._labels[name] = np.asarray(mask, dtype=bool)
        return self._labels[name]

    def object_mask(self, name: str) -> np.ndarray:
        if name not in self._objects:
            self._objects[name] = self.service.object_mask(self.volume(name))
        return self._objects[name]

    def provenance(self, grid: Optional[GridSpec] = None) -> Provenance:
        return Provenance(
            config_hash=self.config.config_hash(),
            seed=self.config.seed,
            fold_seeds=[fold_seed(self.config.seed, f.fold) for f in self.folds],
            grid_hash=None if grid is None else config_hash(grid),
        )

    # ----------------------------------------------------------------- fold scoring

    def fold_scorer(self, fold: FoldAssignment) -> AnomalyScorer:
        if fold.fold not in self._scorers:
            train = [self.volume(n) for n in fold.train]
            masks = [self.object_mask(n) for n in fold.train]
            logger.info(f"Fold {fold.fold}: fitting scorer on {', '.join(fold.train)}")
            self._scorers[fold.fold] = self.service.fit_scorer(
                train, seed=fold_seed(self.config.seed, fold.fold), masks=masks
            )
        return self._scorers[fold.fold]

    def scored(self, fold: FoldAssignment, name: str) -> ScoreVolume:
        key = (fold.fold, name)
        if key not in self._scored:
            self._scored[key] = self.service.score(self.fold_scorer(fold), self.volume(name))
        return self._scored[key]

    def evaluation(self, fold: FoldAssignment, name: str) -> VolumeEvaluation:
        key = (fold.fold, name)
        if key not in self._evaluations:
            self._evaluations[key] = self.service.evaluate_scored(
                name,
                self.scored(fold, name),
                self.labels(name),
                self.object_mask(name),
                seed=fold_seed(self.config.seed, fold.fold),
            )
        return self._evaluations[key]

    def region_scores(self, fold: FoldAssignment, name: str) -> Tuple[np.ndarray, np.ndarray]:
        """Final scores and labels of ``name`` under the fold's scorer.

        Scores are surface-suppressed when post-processing is enabled and are
        restricted to the object when evaluation is.
        """
        sv = self.scored(fold, name)
        scores = sv.score.data
        if self.config.stages.postproc.enabled and sv.recon is not None:
            scores, _ = self.service.postprocess(sv, self.object_mask(name))
            scores = scores.data
        labels = self.labels(name)
        if self.config.stages.eval.restrict_to_object:
            region = self.object_mask(name)
            return np.asarray(scores[region], dtype=np.float64), labels[region]
        return np.asarray(scores, dtype=np.float64).ravel(), labels.ravel()

    # ----------------------------------------------------------------- experiments

    def run_grid_search(self, grid: GridSpec, metric_fn: Optional[FoldMetric] = None) -> CrossValReport:
        """Evaluate ``metric_fn`` for every (cell, fold) pair and select the best cell."""
        if metric_fn is None:
            if grid.metric not in METRICS:
                raise ExperimentError(f"Unknown metric '{grid.metric}'; available: {sorted(METRICS)}")
            metric_fn = METRICS[grid.metric](self)

        log = IssueLog()
        cells = []
        for alpha, beta, gamma in grid.cells():
            params = grid.params(alpha, beta, gamma)
            cell = GridCell(alpha=alpha, beta=beta, gamma=gamma)
            for fold in self.folds:
                try:
                    value = float(metric_fn(params, fold))
                    if not np.isfinite(value):
                        raise ExperimentError(f"metric returned {value}")
                except Exception as e:
                    cell.valid = False
                    cell.error = f"fold {fold.fold}: {type(e).__name__}: {e}"
                    log.add_error("Grid cell", f"{cell.label} failed in {cell.error}", alpha=alpha, beta=beta, gamma=gamma)
                    break
                cell.fold_values.append(value)
            if cell.valid:
                cell.mean, cell.stderr = summarize_folds(cell.fold_values)
                logger.debug(f"{cell.label}: {cell.mean:.6f} ± {cell.stderr:.6f}")
            cells.append(cell)

        best = select_best(cells)
        if best is None:
            log.add_error("Grid search", "No grid cell produced a valid result")
        else:
            logger.info(
                f"Selected α={best.alpha:g}, β={best.beta:g}, γ={best.gamma:.4g} "
                f"({grid.metric} {best.mean:.4f} ± {best.stderr:.4f})"
            )
        return CrossValReport(
            metric=grid.metric,
            folds=self.folds,
            cells=cells,
            best=best,
            provenance=self.provenance(grid),
            issues=log.issues,
        )

    def run_two_phase_search(
        self, grid: Optional[GridSpec] = None, metric_fn: Optional[FoldMetric] = None
    ) -> TwoPhaseReport:
        """α/β search at ``phase_gamma``, then the γ axis at the best α/β."""
        grid = grid or GridSpec()
        if metric_fn is None:
            if grid.metric not in METRICS:
                raise ExperimentError(f"Unknown metric '{grid.metric}'; available: {sorted(METRICS)}")
            metric_fn = METRICS[grid.metric](self)

        first = grid.model_copy(update={"gammas": [grid.phase_gamma]})
        logger.info(f"Phase 1: {len(first.cells())} α/β cell(s) at γ={grid.phase_gamma:g}")
        alpha_beta = self.run_grid_search(first, metric_fn)
        if alpha_beta.best is None:
            raise ExperimentError("The α/β phase produced no valid cell")

        second = grid.model_copy(update={"alphas": [alpha_beta.best.alpha], "betas": [alpha_beta.best.beta]})
        logger.info(f"Phase 2: {len(second.gammas)} γ value(s) at α={alpha_beta.best.alpha:g}, β={alpha_beta.best.beta:g}")
        gamma = self.run_grid_search(second, metric_fn)
        return TwoPhaseReport(alpha_beta=alpha_beta, gamma=gamma)

    def run_degradation_sweep(
        self,
        exposures: Sequence[float] = DEFAULT_EXPOSURES,
        projections: Sequence[float] = DEFAULT_PROJECTIONS,
    ) -> SweepReport:
        """Score degraded copies of the target volumes for every (exposure, projection) pair.

        The scorer is fitted once on the clean ``xval`` volumes. Targets are the
        ``test`` volumes, or every volume when the roster has none.
        """
        if not exposures or not projections:
            raise ExperimentError("Exposure and projection lists cannot be empty")
        for value in list(exposures) + list(projections):
            if not 0 < value <= 1:
                raise ExperimentError(f"Degradation fractions must lie in (0, 1], got {value}")

        log = IssueLog()
        targets = self.config.test_names
        if not targets:
            targets = [v.name for v in self.config.volumes]
            log.add_warning("Degradation", "Roster has no test volumes; sweeping every volume")

        train = self.config.xval_names
        scorer = self.service.fit_scorer(
            [self.volume(n) for n in train],
            seed=self.config.seed,
            masks=[self.object_mask(n) for n in train],
        )
        base = self.config.stages.degrade.base_angles

        cells = []
        for exposure, fraction in itertools.product(exposures, projections):
            cell = SweepCell(exposure=exposure, projections=fraction, n_angles=0)
            try:
                cell.n_angles = int(select_angles(base, fraction).size)
                evaluations = []
                for i, name in enumerate(targets):
                    degraded = self.service.degrade(
                        self.volume(name), exposure, fraction, seed=fold_seed(self.config.seed, i)
                    )
                    sv = self.service.score(scorer, degraded)
                    ev = self.service.evaluate_scored(
                        name, sv, self.labels(name), self.object_mask(name), seed=self.config.seed
                    )
                    evaluations.append(ev)
                    cell.volumes.append(VolumeResult.from_evaluation(ev, self.config.entry(name).role))
                cell.curves = _median_curves([e.raw for e in evaluations], "raw")
                if all(e.post is not None for e in evaluations):
                    cell.curves += _median_curves([e.post for e in evaluations], "post")
            except Exception as e:
                cell.valid = False
                cell.error = f"{type(e).__name__}: {e}"
                log.add_error("Degradation", f"{cell.label} failed: {cell.error}", exposure=exposure, projections=fraction)
            else:
                means = cell.means()
                logger.info(f"{cell.label}: AUC {means['auc']:.4f}, AP {means['ap']:.4f}")
            cells.append(cell)

        return SweepReport(targets=targets, cells=cells, provenance=self.provenance(), issues=log.issues)

    def run_xval(self) -> XvalReport:
        """Fit the scorer per fold and evaluate validation and test volumes."""
        log = IssueLog()
        fold_results = []
        test_results = []
        for fold in self.folds:
            evaluations = [self.evaluation(fold, name) for name in fold.validation]
            result = XvalFold(
                fold=fold.fold,
                volumes=[VolumeResult.from_evaluation(ev, "xval", fold.fold) for ev in evaluations],
                curves=_median_curves([ev.raw for ev in evaluations], "raw"),
            )
            if all(ev.post is not None for ev in evaluations):
                result.curves += _median_curves([ev.post for ev in evaluations], "post")
            fold_results.append(result)
            for name in self.config.test_names:
                test_results.append(VolumeResult.from_evaluation(self.evaluation(fold, name), "test", fold.fold))

        metrics: Dict[str, MetricSummary] = {}
        per_fold = [f.means() for f in fold_results]
        for key in ("auc", "ap", "auc_post", "ap_post"):
            values = [m[key] for m in per_fold]
            if any(v is None for v in values):
                continue
            mean, stderr = summarize_folds(values)
            metrics[key] = MetricSummary(mean=mean, stderr=stderr)

        welch_t = welch_p = None
        if "ap_post" in metrics:
            try:
                welch_t, welch_p = welch_ttest([m["ap"] for m in per_fold], [m["ap_post"] for m in per_fold])
            except MetricError as e:
                log.add_warning("Statistics", f"Raw vs post-processed AP not compared: {e}")

        if "ap" in metrics:
            logger.info(f"Cross-validated AP {metrics['ap'].mean:.4f} ± {metrics['ap'].stderr:.4f}")
        return XvalReport(
            folds=self.folds,
            fold_results=fold_results,
            test_results=test_results,
            metrics=metrics,
            welch_t=welch_t,
            welch_p=welch_p,
            provenance=self.provenance(),
            issues=log.issues,
        )


def run_grid_search(config: ExperimentConfig, grid: GridSpec, metric_fn: Optional[FoldMetric] = None) -> CrossValReport:
    return CrossValidator(config).run_grid_search(grid, metric_fn)


def run_two_phase_search(
    config: ExperimentConfig, grid: Optional[GridSpec] = None, metric_fn: Optional[FoldMetric] = None
) -> TwoPhaseReport:
    return CrossValidator(config).run_two_phase_search(grid, metric_fn)


def run_degradation_sweep(
    config: ExperimentConfig,
    exposures: Sequence[float] = DEFAULT_EXPOSURES,
    projections: Sequence[float] = DEFAULT_PROJECTIONS,
) -> SweepReport:
    return CrossValidator(config).run_degradation_sweep(exposures, projections)


def run_xval(config: ExperimentConfig) -> XvalReport:
    return CrossValidator(config).run_xval()
