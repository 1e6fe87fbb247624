"""Overlap losses on soft predictions.

Counts are soft: ``TP = Σ p·t``, ``FN = Σ (1−p)·t``, ``FP = Σ p·(1−t)``.
The Focal Tversky loss is ``(1 − (TP + s)/(TP + α·FN + β·FP + s))^γ`` with
additive smoothing ``s`` so that an empty prediction of an empty target
scores 0. With α = β = 0.5 and γ = 1 it equals ``1 − soft_dice``.
"""

from typing import Sequence, Tuple

import numpy as np
from pydantic import BaseModel, Field

from ..data.models import PoreMask, Volume
from .metrics import MetricError


class FTLParams(BaseModel):
    """FN weight α, FP weight β, focusing exponent γ and smoothing."""

    alpha: float = Field(default=0.7, gt=0.0, le=1.0)
    beta: float = Field(default=0.3, gt=0.0, le=1.0)
    gamma: float = Field(default=0.75, gt=0.0, allow_inf_nan=False)
    smooth: float = Field(default=1e-6, gt=0.0, allow_inf_nan=False)


def _as_array(x) -> np.ndarray:
    if isinstance(x, PoreMask):
        return x.mask.astype(np.float64)
    if isinstance(x, Volume):
        return x.data.astype(np.float64)
    return np.asarray(x, dtype=np.float64)


def _pair(pred, target) -> Tuple[np.ndarray, np.ndarray]:
    pred, target = _as_array(pred), _as_array(target)
    if pred.shape != target.shape:
        raise MetricError(f"Prediction shape {list(pred.shape)} differs from target {list(target.shape)}")
    return pred, target


def soft_counts(pred, target) -> Tuple[float, float, float]:
    """Soft ``(TP, FN, FP)`` of a prediction in [0, 1] against a binary target."""
    pred, target = _pair(pred, target)
    if pred.size and (pred.min() < 0 or pred.max() > 1):
        raise MetricError("Soft predictions must lie in [0, 1]")
    tp = float(np.sum(pred * target))
    fn = float(np.sum((1.0 - pred) * target))
    fp = float(np.sum(pred * (1.0 - target)))
    return tp, fn, fp


def tversky_index(tp: float, fn: float, fp: float, alpha: float, beta: float, smooth: float = 1e-6) -> float:
    return (tp + smooth) / (tp + alpha * fn + beta * fp + smooth)


def focal_tversky_from_counts(tp: float, fn: float, fp: float, p: FTLParams) -> float:
    index = tversky_index(tp, fn, fp, p.alpha, p.beta, p.smooth)
    return max(0.0, 1.0 - index) ** p.gamma


def focal_tversky_loss(pred, target, p: FTLParams) -> float:
    return focal_tversky_from_counts(*soft_counts(pred, target), p)


def soft_dice(pred, target, smooth: float = 1e-6) -> float:
    """``(2TP + 2s)/(2TP + FN + FP + 2s)`` on soft counts."""
    tp, fn, fp = soft_counts(pred, target)
    return (2 * tp + 2 * smooth) / (2 * tp + fn + fp + 2 * smooth)


def dice_score(pred_mask, target_mask) -> float:
    """Hard Dice-Sørensen score; two empty masks score 1."""
    pred, target = _pair(pred_mask, target_mask)
    pred, target = pred.astype(bool), target.astype(bool)
    tp = int(np.count_nonzero(pred & target))
    fn = int(np.count_nonzero(~pred & target))
    fp = int(np.count_nonzero(pred & ~target))
    denominator = 2 * tp + fn + fp
    return 1.0 if denominator == 0 else 2 * tp / denominator


def deep_supervision_combine(stage_losses: Sequence[float]) -> float:
    """Weighted mean of per-stage losses with weights 1, 1/2, 1/4, ..."""
    losses = np.asarray(list(stage_losses), dtype=np.float64)
    if losses.size == 0:
        raise MetricError("Deep supervision needs at least one stage loss")
    weights = 0.5 ** np.arange(losses.size)
    return float(np.dot(weights, losses) / weights.sum())
