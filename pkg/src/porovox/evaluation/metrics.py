"""
Voxel-wise classifier evaluation.

ROC and PR curves sweep every distinct score as a threshold, with equal
scores grouped into one step. AUC is the trapezoidal area under the ROC
curve; AP is the rank-sum average precision
``Σ_n (R_n − R_{n−1})·P_n``, not an interpolated PR area.

Fold results are summarised as mean ± standard error (sample standard
deviation over √n) and compared with Welch's unequal-variance t-test.

Example Usage:
    curves = evaluate_volume(score.data, labels.mask, mask=obj)
    mean, stderr = summarize_folds([0.81, 0.78, 0.84])
    t, p = welch_ttest(raw_ap, suppressed_ap)
"""

from typing import Literal, Optional, Sequence, Tuple

import numpy as np
from loguru import logger
from pydantic import BaseModel, ConfigDict
from scipy import stats
from sklearn.metrics import auc as trapezoid_area
from sklearn.metrics import average_precision_score, precision_recall_curve, roc_curve

from ..data.models import PoreMask, Volume


class MetricError(ValueError):
    """Raised for inputs on which a metric or loss is undefined."""


class RocCurve(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray


class PrCurve(BaseModel):
    """PR points with recall non-decreasing and thresholds descending."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    recall: np.ndarray
    precision: np.ndarray
    thresholds: np.ndarray


class EvalCurves(BaseModel):
    """ROC and PR curves of one volume with their scalar summaries."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    roc: RocCurve
    pr: PrCurve
    auc: float
    ap: float
    n_voxels: int
    n_positive: int


def _flatten(scores, labels) -> Tuple[np.ndarray, np.ndarray]:
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels).ravel().astype(bool)
    if scores.shape != labels.shape:
        raise MetricError(f"Got {scores.size} score(s) for {labels.size} label(s)")
    if not np.isfinite(scores).all():
        raise MetricError("Scores must be finite")
    return scores, labels


def roc_auc(scores, labels) -> Tuple[RocCurve, float]:
    """ROC curve from (0, 0) to (1, 1) and its trapezoidal area.

    Raises:
        MetricError: If only one class is present.
    """
    scores, labels = _flatten(scores, labels)
    n_pos = int(labels.sum())
    if n_pos == 0 or n_pos == labels.size:
        raise MetricError("ROC needs both positive and negative labels")
    fpr, tpr, thresholds = roc_curve(labels, scores, drop_intermediate=False)
    return RocCurve(fpr=fpr, tpr=tpr, thresholds=thresholds), float(trapezoid_area(fpr, tpr))


def pr_ap(scores, labels) -> Tuple[PrCurve, float]:
    """PR curve and rank-sum average precision.

    Raises:
        MetricError: If there is no positive label.
    """
    scores, labels = _flatten(scores, labels)
    if not labels.any():
        raise MetricError("Average precision needs at least one positive label")
    precision, recall, thresholds = precision_recall_curve(labels, scores)
    # drop the (recall 0, precision 1) end point, then sweep by descending threshold
    curve = PrCurve(
        recall=recall[:-1][::-1],
        precision=precision[:-1][::-1],
        thresholds=thresholds[::-1],
    )
    return curve, float(average_precision_score(labels, scores))


def welch_ttest(a: Sequence[float], b: Sequence[float]) -> Tuple[float, float]:
    """Two-sided Welch t statistic and p-value with Satterthwaite degrees of freedom."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.size < 2 or b.size < 2:
        raise MetricError(f"Welch's t-test needs two samples of size ≥ 2, got {a.size} and {b.size}")
    if np.var(a) == 0 and np.var(b) == 0:
        raise MetricError("Welch's t-test is undefined when both samples have zero variance")
    result = stats.ttest_ind(a, b, equal_var=False)
    return float(result.statistic), float(result.pvalue)


def summarize_folds(values: Sequence[float]) -> Tuple[float, float]:
    """Mean and standard error of per-fold values."""
    values = np.asarray(values, dtype=np.float64)
    if values.size < 2:
        raise MetricError(f"Fold summary needs at least 2 values, got {values.size}")
    return float(values.mean()), float(stats.sem(values, ddof=1))


def stratified_sample(
    labels: np.ndarray, max_voxels: int, seed: int = 0
) -> np.ndarray:
    """Sorted voxel indices keeping the positive/negative proportion."""
    rng = np.random.default_rng(seed)
    fraction = max_voxels / labels.size
    picks = []
    for cls in (True, False):
        members = np.flatnonzero(labels == cls)
        take = min(members.size, max(1, int(round(members.size * fraction)))) if members.size else 0
        picks.append(rng.choice(members, size=take, replace=False))
    return np.sort(np.concatenate(picks))


def evaluate_volume(
    score,
    labels,
    mask: Optional[np.ndarray] = None,
    max_voxels: Optional[int] = 100_000_000,
    seed: int = 0,
) -> EvalCurves:
    """ROC/PR evaluation of a score volume against binary labels.

    ``mask`` restricts evaluation to a region (e.g. the object). Above
    ``max_voxels`` a seeded stratified sample is evaluated; ``None`` forces
    the exact evaluation.
    """
    scores = np.asarray(score.data if isinstance(score, Volume) else score)
    truth = np.asarray(labels.mask if isinstance(labels, PoreMask) else labels)
    if scores.shape != truth.shape:
        raise MetricError(f"Score dims {list(scores.shape)} differ from label dims {list(truth.shape)}")
    if mask is not None:
        region = np.asarray(mask, dtype=bool)
        scores, truth = scores[region], truth[region]
    scores, truth = _flatten(scores, truth)

    if max_voxels is not None and scores.size > max_voxels:
        keep = stratified_sample(truth, max_voxels, seed)
        logger.info(f"Evaluating a stratified sample of {keep.size} out of {scores.size} voxels")
        scores, truth = scores[keep], truth[keep]

    roc, area = roc_auc(scores, truth)
    pr, ap = pr_ap(scores, truth)
    logger.debug(f"AUC {area:.6f}, AP {ap:.6f} over {scores.size} voxels")
    return EvalCurves(
        roc=roc, pr=pr, auc=area, ap=ap, n_voxels=int(scores.size), n_positive=int(truth.sum())
    )


def median_curve(
    curves: Sequence[EvalCurves], kind: Literal["roc", "pr"] = "roc", n_points: int = 101
) -> Tuple[np.ndarray, np.ndarray]:
    """Point-wise median of fold curves on a common abscissa grid.

    ROC curves are resampled as TPR over FPR, PR curves as precision over
    recall.
    """
    if not curves:
        raise MetricError("Median curve needs at least one curve")
    grid = np.linspace(0.0, 1.0, n_points)
    rows = []
    for c in curves:
        if kind == "roc":
            rows.append(np.interp(grid, c.roc.fpr, c.roc.tpr))
        elif kind == "pr":
            rows.append(np.interp(grid, c.pr.recall, c.pr.precision))
        else:
            raise MetricError(f"Unknown curve kind '{kind}'")
    return grid, np.median(np.vstack(rows), axis=0)
