import numpy as np
import pytest

from world4d.errors import InvalidInputError
from world4d.geometry import DepthMap, FlowField, RgbFrame
from world4d.warp import (
    OcclusionMask,
    backward_warp,
    bilinear_sample,
    charbonnier,
    depth_warp_error,
    mean_over_pairs,
    occlusion_from_fb,
    rgb_warp_error,
)


def test_zero_flow_is_bit_exact_identity(rng):
    vals = rng.uniform(0.5, 5.0, size=(12, 9))
    vals[3, 4] = np.nan
    d = DepthMap(vals)
    w = backward_warp(d, FlowField.zeros(12, 9))
    np.testing.assert_array_equal(w.coverage, d.valid)
    np.testing.assert_array_equal(w.warped[d.valid], d.values[d.valid])


def test_ramp_shift():
    ramp = np.tile(np.arange(10.0), (4, 1))
    w = backward_warp(ramp, FlowField.constant(4, 10, 1.0, 0.0))
    np.testing.assert_array_equal(w.warped[:, :9], ramp[:, 1:])
    assert not w.coverage[:, 9].any()


def test_fractional_ramp():
    ramp = np.tile(np.arange(10.0), (3, 1))
    w = backward_warp(ramp, FlowField.constant(3, 10, 0.25, 0.0))
    np.testing.assert_allclose(w.warped[:, :9], ramp[:, :9] + 0.25)


def test_out_of_bounds_and_invalid_flow():
    src = np.ones((4, 4))
    du = np.zeros((4, 4))
    du[0, 0] = -0.5
    dv = np.zeros((4, 4))
    dv[1, 1] = np.nan
    w = backward_warp(src, FlowField(du, dv))
    assert not w.coverage[0, 0] and not w.coverage[1, 1]
    assert w.coverage.sum() == 14


def test_invalid_tap_blocks_coverage():
    vals = np.ones((3, 3))
    vals[1, 2] = np.nan
    w = backward_warp(DepthMap(vals), FlowField.constant(3, 3, 0.5, 0.0))
    assert not w.coverage[1, 1]
    assert w.coverage[0, 1]


def test_renormalized_sampling():
    vals = np.array([[1.0, 3.0]])
    valid = np.array([[True, False]])
    s, ok = bilinear_sample(vals, valid, np.array([0.5]), np.array([0.0]), renormalize=True)
    assert ok[0] and s[0] == 1.0
    s, ok = bilinear_sample(vals, valid, np.array([0.5]), np.array([0.0]))
    assert not ok[0]


def test_shape_mismatch():
    with pytest.raises(InvalidInputError):
        backward_warp(np.ones((3, 3)), FlowField.zeros(3, 4))


def test_charbonnier_bounds(rng):
    x = rng.normal(size=100)
    c = charbonnier(x, 1e-3)
    assert np.all(c >= 1e-3) and np.all(c >= np.abs(x))
    assert charbonnier(0.0, 1e-3) == pytest.approx(1e-3)


def test_depth_warp_error_static_plane_is_zero():
    d = DepthMap(np.full((5, 5), 2.0))
    e = depth_warp_error(d, d, FlowField.zeros(5, 5))
    assert e["l1"]["all"] == 0.0 and e["l1"]["non_occluded"] == 0.0
    assert e["l1"]["occluded"] is None
    assert e["charbonnier"]["all"] == pytest.approx(1e-3)


def test_depth_warp_error_regions():
    d0 = DepthMap(np.full((2, 2), 2.0))
    d1 = DepthMap(np.array([[2.0, 3.0], [2.0, 2.0]]))
    occ = OcclusionMask(np.array([[False, True], [False, False]]))
    e = depth_warp_error(d0, d1, FlowField.zeros(2, 2), occ)
    assert e["l1"]["occluded"] == 1.0
    assert e["l1"]["non_occluded"] == 0.0
    assert e["l1"]["all"] == 0.25


def test_depth_warp_error_follows_correspondence():
    # a bump moves one pixel right; the forward flow on the first frame says so
    d0 = np.full((3, 6), 5.0)
    d0[:, 2] = 1.0
    d1 = np.full((3, 6), 5.0)
    d1[:, 3] = 1.0
    du = np.zeros((3, 6))
    du[:, 2] = 1.0
    # column 3 of the first frame is covered by the bump in the second
    occ = np.zeros((3, 6), bool)
    occ[:, 3] = True
    e = depth_warp_error(DepthMap(d0), DepthMap(d1), FlowField(du, np.zeros((3, 6))), OcclusionMask(occ))
    assert e["l1"]["non_occluded"] == 0.0
    assert e["l1"]["occluded"] == 4.0
    # the same pair with zero flow disagrees exactly on the two changed columns
    e = depth_warp_error(DepthMap(d0), DepthMap(d1), FlowField.zeros(3, 6))
    assert e["l1"]["all"] == pytest.approx(2 * 4.0 / 6)


def test_rgb_warp_error_identity_and_all_occluded():
    f = RgbFrame(np.full((4, 4, 3), 0.3))
    e = rgb_warp_error(f, f, FlowField.zeros(4, 4), OcclusionMask(np.ones((4, 4), bool)))
    assert e["l1"]["non_occluded"] is None
    assert e["l1"]["all"] == 0.0


def test_rgb_warp_error_channel_mean():
    a = RgbFrame(np.zeros((2, 2, 3)))
    b = RgbFrame(np.dstack([np.full((2, 2), 0.3), np.zeros((2, 2)), np.zeros((2, 2))]))
    e = rgb_warp_error(a, b, FlowField.zeros(2, 2))
    assert e["l1"]["all"] == pytest.approx(0.1)


def test_fb_exact_inverse_and_out_of_bounds():
    fwd = FlowField.constant(5, 5, 1.0, 0.0)
    bwd = FlowField.constant(5, 5, -1.0, 0.0)
    occ = occlusion_from_fb(fwd, bwd)
    assert not occ.occluded[:, :4].any()
    assert occ.occluded[:, 4].all()
    with pytest.raises(InvalidInputError):
        occlusion_from_fb(fwd, bwd, tol_px=0.0)


def test_mean_over_pairs_skips_none():
    rows = [{"l1": {"a": 1.0, "b": None}}, {"l1": {"a": 3.0, "b": None}}]
    assert mean_over_pairs(rows) == {"l1": {"a": 2.0, "b": None}}


def test_region_subset_keeps_per_pixel_errors(rng):
    d0 = DepthMap(rng.uniform(1, 2, size=(6, 6)))
    d1 = DepthMap(rng.uniform(1, 2, size=(6, 6)))
    occ = OcclusionMask(rng.random((6, 6)) < 0.3)
    e = depth_warp_error(d0, d1, FlowField.zeros(6, 6), occ)
    diff = np.abs(d0.values - d1.values)
    assert e["l1"]["occluded"] == pytest.approx(diff[occ.occluded].mean())
    assert e["l1"]["non_occluded"] == pytest.approx(diff[~occ.occluded].mean())
