"""Tests for soft counts, Focal Tversky loss, Dice and deep supervision."""

import numpy as np
import pytest

from porovox.evaluation.losses import (
    FTLParams,
    deep_supervision_combine,
    dice_score,
    focal_tversky_from_counts,
    focal_tversky_loss,
    soft_counts,
    soft_dice,
    tversky_index,
)
from porovox.evaluation.metrics import MetricError


@pytest.mark.unit
class TestSoftCounts:
    """Soft TP/FN/FP."""

    def test_perfect_prediction(self, rng):
        target = (rng.random((4, 4, 4)) > 0.5).astype(float)
        tp, fn, fp = soft_counts(target, target)
        assert fn == 0 and fp == 0
        assert tp == target.sum()

    def test_empty_prediction(self):
        target = np.zeros((3, 3, 3))
        target[0, :, 0] = 1
        assert soft_counts(np.zeros_like(target), target) == (0.0, 3.0, 0.0)

    def test_matches_voxel_loop(self, rng):
        pred = rng.random((3, 3, 3))
        target = (rng.random((3, 3, 3)) > 0.4).astype(float)
        tp = fn = fp = 0.0
        for idx in np.ndindex(pred.shape):
            p, t = pred[idx], target[idx]
            tp += p * t
            fn += (1 - p) * t
            fp += p * (1 - t)
        assert soft_counts(pred, target) == pytest.approx((tp, fn, fp), abs=1e-12)

    def test_prediction_out_of_range(self):
        with pytest.raises(MetricError):
            soft_counts(np.full((2, 2, 2), 1.5), np.ones((2, 2, 2)))
        with pytest.raises(MetricError):
            soft_counts(np.zeros((2, 2, 2)), np.ones((2, 2, 3)))


@pytest.mark.unit
class TestFocalTversky:
    """Focal Tversky loss."""

    def test_perfect_prediction_has_zero_loss(self, rng):
        target = (rng.random((5, 5, 5)) > 0.5).astype(float)
        assert focal_tversky_loss(target, target, FTLParams()) == pytest.approx(0.0, abs=1e-12)

    def test_empty_prediction_of_empty_target(self):
        empty = np.zeros((3, 3, 3))
        assert focal_tversky_loss(empty, empty, FTLParams()) == 0.0

    def test_hand_computed_value(self):
        p = FTLParams(alpha=0.7, beta=0.3, gamma=2.0, smooth=1e-12)
        assert tversky_index(2, 1, 1, 0.7, 0.3, 1e-12) == pytest.approx(2 / 3)
        assert focal_tversky_from_counts(2, 1, 1, p) == pytest.approx(1 / 9)

    def test_dice_special_case(self, rng):
        p = FTLParams(alpha=0.5, beta=0.5, gamma=1.0, smooth=1e-12)
        for _ in range(20):
            tp, fn, fp = rng.random(3) * 10
            dice_loss = 1 - 2 * tp / (2 * tp + fn + fp)
            assert focal_tversky_from_counts(tp, fn, fp, p) == pytest.approx(dice_loss, abs=1e-9)

    def test_ftl_plus_soft_dice_is_one(self, rng):
        p = FTLParams(alpha=0.5, beta=0.5, gamma=1.0)
        for _ in range(500):
            pred = rng.random((4, 4, 4))
            target = (rng.random((4, 4, 4)) > 0.5).astype(float)
            total = focal_tversky_loss(pred, target, p) + soft_dice(pred, target, p.smooth)
            assert abs(total - 1.0) < 1e-9

    def test_loss_stays_in_unit_interval(self, rng):
        for _ in range(50):
            a, b = rng.uniform(0.05, 1.0, 2)
            p = FTLParams(alpha=a, beta=b, gamma=rng.uniform(0.3, 3.0))
            loss = focal_tversky_loss(rng.random((3, 3, 3)), rng.random((3, 3, 3)) > 0.5, p)
            assert 0.0 <= loss <= 1.0

    def test_decreasing_in_gamma_for_fixed_index(self):
        losses = [
            focal_tversky_from_counts(3, 2, 1, FTLParams(alpha=0.5, beta=0.5, gamma=g))
            for g in (1 / 3, 0.5, 1.0, 2.0)
        ]
        assert all(x > y for x, y in zip(losses, losses[1:]))

    def test_decreasing_in_true_positives(self):
        p = FTLParams()
        losses = [focal_tversky_from_counts(tp, 4, 3, p) for tp in (0, 1, 2, 5, 10)]
        assert all(x > y for x, y in zip(losses, losses[1:]))

    def test_params_validation(self):
        with pytest.raises(ValueError):
            FTLParams(alpha=0.0)
        with pytest.raises(ValueError):
            FTLParams(beta=1.5)
        with pytest.raises(ValueError):
            FTLParams(gamma=float("inf"))


@pytest.mark.unit
class TestDiceScore:
    """Hard Dice-Sørensen score."""

    def test_identical_masks(self):
        mask = np.zeros((4, 4, 4), dtype=bool)
        mask[1:3, 1:3, 1:3] = True
        assert dice_score(mask, mask) == 1.0

    def test_disjoint_masks(self):
        a = np.zeros((4, 4, 4), dtype=bool)
        b = np.zeros((4, 4, 4), dtype=bool)
        a[0], b[3] = True, True
        assert dice_score(a, b) == 0.0

    def test_half_overlap(self):
        a = np.zeros((4, 4, 4), dtype=bool)
        b = np.zeros((4, 4, 4), dtype=bool)
        a[0:2], b[1:3] = True, True
        assert dice_score(a, b) == 0.5

    def test_two_empty_masks(self):
        empty = np.zeros((2, 2, 2), dtype=bool)
        assert dice_score(empty, empty) == 1.0


@pytest.mark.unit
class TestDeepSupervision:
    """Geometric stage weighting."""

    def test_equal_stages(self):
        assert deep_supervision_combine([0.4, 0.4, 0.4, 0.4]) == pytest.approx(0.4)

    def test_two_stages(self):
        assert deep_supervision_combine([0.9, 0.0]) == pytest.approx(0.6)

    def test_three_stages(self):
        assert deep_supervision_combine([3.0, 2.0, 1.0]) == pytest.approx(17 / 7)

    def test_empty_sequence(self):
        with pytest.raises(MetricError):
            deep_supervision_combine([])
