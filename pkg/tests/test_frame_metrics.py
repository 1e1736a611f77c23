import numpy as np
import pytest
from skimage.metrics import structural_similarity

from world4d.errors import InvalidInputError
from world4d.frame_metrics import (
    DepthEvalConfig,
    MotionMaskConfig,
    depth_metrics,
    flow_metrics,
    motion_masks,
    physicsiq_scores,
    pixel_metrics,
    ssim,
)
from world4d.geometry import DepthMap, FlowField, RgbFrame


def test_depth_identity():
    d = DepthMap(np.linspace(1, 5, 20).reshape(4, 5))
    m = depth_metrics(d, d)
    assert m == {"absrel": 0.0, "rmse": 0.0, "delta1": 100.0, "delta2": 100.0, "delta3": 100.0}


def test_depth_hand_values():
    gt = DepthMap(np.array([[1.0, 2.0]]))
    pred = DepthMap(np.array([[1.5, 2.0]]))
    m = depth_metrics(pred, gt)
    assert m["absrel"] == pytest.approx(0.25)
    assert m["rmse"] == pytest.approx(np.sqrt(0.125))
    assert m["delta1"] == 50.0 and m["delta2"] == 100.0


def test_median_scaling_removes_global_scale():
    gt = DepthMap(np.linspace(1, 4, 16).reshape(4, 4))
    pred = DepthMap(gt.values * 3.0)
    assert depth_metrics(pred, gt)["absrel"] == pytest.approx(2.0)
    m = depth_metrics(pred, gt, DepthEvalConfig("median_scaled"))
    assert m["absrel"] == pytest.approx(0.0, abs=1e-15)


def test_depth_config_validation():
    with pytest.raises(InvalidInputError):
        DepthEvalConfig("scale")
    with pytest.raises(InvalidInputError):
        DepthEvalConfig(delta_base=1.0)


def test_flow_hand_values():
    gt = FlowField(np.array([[0.0, 10.0, 100.0]]), np.zeros((1, 3)))
    pred = FlowField(np.array([[0.5, 14.0, 104.0]]), np.zeros((1, 3)))
    m = flow_metrics(pred, gt)
    assert m["epe"] == pytest.approx((0.5 + 4 + 4) / 3)
    # pixel 1: 4 > 3 and 4 > 0.5 -> outlier; pixel 2: 4 < 5 -> inlier
    assert m["fl_all_pct"] == pytest.approx(100 / 3)
    assert m["out_1px_pct"] == pytest.approx(200 / 3)
    assert m["out_3px_pct"] == pytest.approx(200 / 3)


@pytest.mark.parametrize("noise", [0.0, 0.05, 0.2])
def test_ssim_matches_skimage(rng, noise):
    a = rng.random((40, 50))
    b = np.clip(a + noise * rng.normal(size=a.shape), 0, 1)
    ref_map = structural_similarity(a, b, data_range=1.0, gaussian_weights=True, sigma=1.5,
                                    use_sample_covariance=False, full=True)[1]
    pad = 5
    expected = ref_map[pad:-pad, pad:-pad].mean()
    assert ssim(a, b) == pytest.approx(expected, abs=1e-12)


def test_pixel_metrics_identity_and_psnr():
    f = RgbFrame(np.full((16, 16, 3), 0.5))
    m = pixel_metrics([f], [f])
    assert m["mse"] == 0.0 and m["psnr"] == float("inf") and m["ssim"] == pytest.approx(1.0)
    g = RgbFrame(np.full((16, 16, 3), 0.6))
    assert pixel_metrics([f], [g])["psnr"] == pytest.approx(20.0)


def test_motion_masks_and_iou():
    frames = []
    for t in range(4):
        px = np.zeros((20, 20, 3))
        px[5:10, 2 + 3 * t:7 + 3 * t] = 1.0
        frames.append(RgbFrame(px))
    masks = motion_masks(frames, MotionMaskConfig(smoothing_radius=0.0))
    assert not masks[0].any() and masks[1:].any(axis=(1, 2)).all()
    s = physicsiq_scores(frames, frames)
    assert s["spatial_iou"] == 1.0 and s["spatiotemporal_iou"] == 1.0 and s["weighted_spatial_iou"] == 1.0
    still = [frames[0]] * 4
    s = physicsiq_scores(still, still)
    assert s["spatial_iou"] is None and s["spatiotemporal_iou"] is None and s["weighted_spatial_iou"] is None


def test_iou_hand_value():
    base = np.zeros((10, 10, 3))
    moved_a = base.copy()
    moved_a[0:2, 0:4] = 1.0
    moved_b = base.copy()
    moved_b[0:2, 2:6] = 1.0
    cfg = MotionMaskConfig(smoothing_radius=0.0)
    s = physicsiq_scores([RgbFrame(base), RgbFrame(moved_a)], [RgbFrame(base), RgbFrame(moved_b)], cfg)
    # masks overlap on 2x2 of a 2x6 union
    assert s["spatial_iou"] == pytest.approx(4 / 12)
    assert s["spatiotemporal_iou"] == pytest.approx(4 / 12)
    # frequencies are 0.5 on each mask: sum(min) = 0.5*4, sum(max) = 0.5*12
    assert s["weighted_spatial_iou"] == pytest.approx(4 / 12)


def test_sequence_length_mismatch():
    f = RgbFrame(np.zeros((16, 16, 3)))
    with pytest.raises(InvalidInputError):
        pixel_metrics([f], [f, f])
