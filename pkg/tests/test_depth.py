import numpy as np
import pytest

from robobench.core import make_rng
from robobench.depth import (DepthConfig, evaluate_depth, evaluate_depth_set,
                             median_scale)
from robobench.errors import MetricUndefinedError, ValidationError


def test_config_validation():
    with pytest.raises(ValidationError):
        DepthConfig(min_depth=0.0)
    with pytest.raises(ValidationError):
        DepthConfig(min_depth=10.0, max_depth=5.0)


def test_identical_maps_perfect_scores():
    gt = np.full((8, 10), 12.5)
    m = evaluate_depth(gt.copy(), gt)
    assert m.abs_rel == 0.0 and m.rmse == 0.0
    assert m.delta1 == m.delta2 == m.delta3 == 100.0


def test_ten_percent_underestimate():
    gt = np.full((8, 10), 10.0)
    m = evaluate_depth(np.full((8, 10), 9.0), gt)
    assert m.abs_rel == pytest.approx(0.1, abs=1e-12)
    assert m.rmse == pytest.approx(1.0, abs=1e-12)
    assert m.delta1 == 100.0  # 10/9 < 1.25


def test_ratio_thresholds():
    gt = np.full((6, 6), 10.0)
    m = evaluate_depth(gt * 1.3, gt)
    assert m.delta1 == 0.0
    assert m.delta2 == 100.0  # 1.3 < 1.25^2 = 1.5625
    assert m.delta3 == 100.0


def test_invalid_gt_pixels_excluded():
    gt = np.full((4, 4), 10.0)
    gt[0, :] = 0.0          # invalid: no reading
    gt[1, :] = 500.0        # beyond max depth
    pred = np.full((4, 4), 10.0)
    pred[0, :] = 999.0      # would be disastrous if counted
    m = evaluate_depth(pred, gt)
    assert m.abs_rel == 0.0
    assert m.valid_pixels == 8


def test_prediction_clamped_to_depth_range():
    gt = np.full((4, 4), 10.0)
    pred = np.full((4, 4), 500.0)
    m = evaluate_depth(pred, gt, DepthConfig(max_depth=80.0))
    assert m.abs_rel == pytest.approx(7.0, abs=1e-12)  # clamp to 80 -> |10-80|/10


def test_nonfinite_predictions_counted_and_clamped():
    gt = np.full((4, 4), 10.0)
    pred = np.full((4, 4), 10.0)
    pred[0, 0] = np.nan
    m = evaluate_depth(pred, gt)
    assert m.nonfinite_pred_pixels == 1
    assert m.abs_rel > 0.0


def test_shape_mismatch():
    with pytest.raises(ValidationError):
        evaluate_depth(np.ones((2, 2)), np.ones((3, 3)))


def test_all_invalid_raises_but_partial_skips():
    good = np.full((4, 4), 10.0)
    empty = np.zeros((4, 4))
    with pytest.raises(MetricUndefinedError):
        evaluate_depth(good, empty)
    m = evaluate_depth_set([good, good], [good, empty])
    assert m.skipped_images == 1
    assert m.abs_rel == 0.0


def test_macro_vs_micro_average():
    gt_a = np.full((2, 2), 10.0)
    gt_b = np.full((4, 4), 10.0)
    pred_a = gt_a * 1.1   # abs_rel 0.1, 4 px
    pred_b = gt_b * 1.2   # abs_rel 0.2, 16 px
    macro = evaluate_depth_set([pred_a, pred_b], [gt_a, gt_b])
    micro = evaluate_depth_set([pred_a, pred_b], [gt_a, gt_b],
                               DepthConfig(micro_average=True))
    assert macro.abs_rel == pytest.approx(0.15, abs=1e-12)
    assert micro.abs_rel == pytest.approx((0.1 * 4 + 0.2 * 16) / 20, abs=1e-12)


def test_median_scale_exact_double():
    rng = make_rng(41)
    gt = rng.uniform(1.0, 50.0, (10, 10))
    np.testing.assert_allclose(median_scale(gt * 2.0, gt), gt, rtol=1e-12)


def test_median_scale_identity_factor():
    gt = np.full((4, 4), 7.0)
    np.testing.assert_allclose(median_scale(gt.copy(), gt), gt)


def test_median_scale_equalizes_medians():
    rng = make_rng(42)
    for _ in range(20):
        gt = rng.uniform(0.5, 60.0, (9, 9))
        pred = rng.uniform(0.5, 60.0, (9, 9))
        scaled = median_scale(pred, gt)
        assert np.median(scaled) == pytest.approx(np.median(gt), abs=1e-9)


def test_median_scale_rejects_nonpositive():
    gt = np.full((3, 3), 5.0)
    with pytest.raises(ValidationError):
        median_scale(np.zeros((3, 3)), gt)


def test_median_scaling_makes_metrics_scale_invariant():
    rng = make_rng(43)
    gt = rng.uniform(2.0, 40.0, (12, 12))
    pred = gt * rng.uniform(0.9, 1.1, (12, 12))
    cfg = DepthConfig(median_scaling=True)
    a = evaluate_depth(pred, gt, cfg)
    b = evaluate_depth(pred * 3.7, gt, cfg)
    assert a.abs_rel == pytest.approx(b.abs_rel, abs=1e-12)
    assert a.delta1 == pytest.approx(b.delta1, abs=1e-12)


def test_joint_rescaling_invariance():
    rng = make_rng(44)
    gt = rng.uniform(2.0, 40.0, (12, 12))
    pred = gt + rng.normal(0, 2.0, (12, 12))
    a = evaluate_depth(pred, gt, DepthConfig(min_depth=1e-3, max_depth=1e6))
    s = 2.5
    b = evaluate_depth(pred * s, gt * s, DepthConfig(min_depth=1e-3 * s, max_depth=1e6))
    assert a.abs_rel == pytest.approx(b.abs_rel, rel=1e-9)
    assert a.delta1 == pytest.approx(b.delta1, abs=1e-12)
    assert b.rmse == pytest.approx(a.rmse * s, rel=1e-9)


def test_delta_ordering_random_maps():
    rng = make_rng(45)
    for _ in range(1000):
        gt = rng.uniform(0.5, 90.0, (12, 16))
        pred = rng.uniform(0.5, 90.0, (12, 16))
        m = evaluate_depth(pred, gt)
        assert m.delta1 <= m.delta2 <= m.delta3
