"""Backward warping and warp-based temporal consistency errors."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError
from .geometry import DepthMap, FlowField, RgbFrame, pixel_grid

DEFAULT_CHARBONNIER_EPS = 1e-3
DEFAULT_FB_TOL_PX = 1.0
REGIONS = ("occluded", "non_occluded", "all")


def _bilinear_taps(x, y, height, width):
    """Integer tap coordinates and weights for bilinear sampling at (x, y).

    A tap whose weight is exactly zero is collapsed onto its neighbour so a
    sample that lands on a pixel center touches only that pixel.
    """
    finite = np.isfinite(x) & np.isfinite(y)
    x = np.where(finite, x, 0.0)
    y = np.where(finite, y, 0.0)
    x0f = np.floor(x)
    y0f = np.floor(y)
    ax = x - x0f
    ay = y - y0f
    x0 = x0f.astype(np.int64)
    y0 = y0f.astype(np.int64)
    x1 = np.where(ax > 0, x0 + 1, x0)
    y1 = np.where(ay > 0, y0 + 1, y0)
    inside = finite & (x0 >= 0) & (y0 >= 0) & (x1 <= width - 1) & (y1 <= height - 1)
    xs = [np.clip(x0, 0, width - 1), np.clip(x1, 0, width - 1)]
    ys = [np.clip(y0, 0, height - 1), np.clip(y1, 0, height - 1)]
    taps = [
        (ys[0], xs[0], (1.0 - ax) * (1.0 - ay)),
        (ys[0], xs[1], ax * (1.0 - ay)),
        (ys[1], xs[0], (1.0 - ax) * ay),
        (ys[1], xs[1], ax * ay),
    ]
    return taps, inside


def bilinear_sample(values, valid, x, y, *, renormalize=False):
    """Sample ``values`` (H, W) or (H, W, C) at sub-pixel positions.

    With ``renormalize=False`` a sample is valid only when every tap carrying
    weight is in bounds and valid. With ``renormalize=True`` invalid taps are
    dropped and the remaining weights rescaled; the sample is valid when the
    position is in bounds and at least one weighted tap is valid.

    Returns ``(samples, ok)``; samples are 0 where not ok.
    """
    values = np.asarray(values, dtype=np.float64)
    valid = np.asarray(valid, dtype=bool)
    height, width = valid.shape
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    taps, inside = _bilinear_taps(x, y, height, width)
    clean = np.where(valid[..., None] if values.ndim == 3 else valid, values, 0.0)
    extra = (Ellipsis,) + ((None,) if values.ndim == 3 else ())

    acc = 0.0
    if renormalize:
        wsum = 0.0
        for ty, tx, w in taps:
            w_eff = w * valid[ty, tx]
            acc = acc + w_eff[extra] * clean[ty, tx]
            wsum = wsum + w_eff
        ok = inside & (wsum > 0)
        with np.errstate(invalid="ignore", divide="ignore"):
            out = np.where(ok[extra], acc / np.where(wsum > 0, wsum, 1.0)[extra], 0.0)
        return out, ok

    ok = inside.copy()
    for ty, tx, w in taps:
        ok &= valid[ty, tx] | (w == 0)
        acc = acc + w[extra] * clean[ty, tx]
    return np.where(ok[extra], acc, 0.0), ok


@dataclass(frozen=True, eq=False)
class WarpResult:
    warped: np.ndarray
    coverage: np.ndarray


@dataclass(frozen=True, eq=False)
class OcclusionMask:
    occluded: np.ndarray
    source: str = "unspecified"

    def __post_init__(self):
        occ = np.array(self.occluded, dtype=bool)
        occ.flags.writeable = False
        object.__setattr__(self, "occluded", occ)

    @classmethod
    def none(cls, height: int, width: int) -> "OcclusionMask":
        return cls(np.zeros((height, width), dtype=bool), "none")


def backward_warp(source, flow: FlowField, source_valid=None) -> WarpResult:
    """``warped(p) = source(p + flow(p))`` with bilinear sampling.

    ``source`` may be a :class:`DepthMap`, an :class:`RgbFrame` or a raw
    (H, W[, C]) array (with optional validity mask). Coverage is false where a
    weighted tap falls outside the raster or on invalid source data, or where
    the flow itself is invalid.
    """
    if isinstance(source, DepthMap):
        values, valid = source.values, source.valid
    elif isinstance(source, RgbFrame):
        values, valid = source.pixels, np.ones(source.shape, dtype=bool)
    else:
        values = np.asarray(source, dtype=np.float64)
        valid = np.ones(values.shape[:2], dtype=bool) if source_valid is None else np.asarray(source_valid, bool)
    if values.shape[:2] != flow.shape or valid.shape != flow.shape:
        raise InvalidInputError(f"source shape {values.shape[:2]} does not match flow shape {flow.shape}")
    u, v = pixel_grid(*flow.shape)
    warped, ok = bilinear_sample(values, valid, u + flow.du, v + flow.dv)
    return WarpResult(warped, ok & flow.valid)


def charbonnier(x, eps: float = DEFAULT_CHARBONNIER_EPS):
    x = np.asarray(x, dtype=np.float64)
    return np.sqrt(x * x + eps * eps)


def _region_means(per_pixel, region, occ):
    out = {}
    for name, mask in (
        ("occluded", region & occ),
        ("non_occluded", region & ~occ),
        ("all", region),
    ):
        out[name] = float(np.mean(per_pixel[mask])) if mask.any() else None
    return out


def _check_occ(occ, shape):
    if occ is None:
        return np.zeros(shape, dtype=bool)
    mask = occ.occluded if isinstance(occ, OcclusionMask) else np.asarray(occ, dtype=bool)
    if mask.shape != shape:
        raise InvalidInputError(f"occlusion mask shape {mask.shape} != raster shape {shape}")
    return mask


def depth_warp_error(D_t: DepthMap, D_next: DepthMap, flow: FlowField, occ=None,
                     eps: float = DEFAULT_CHARBONNIER_EPS) -> dict:
    """L1 and Charbonnier warp consistency of ``D_t`` and ``D_next`` under ``flow``.

    ``flow`` maps frame t to t+1 on t's grid. Backward warping pulls ``D_next``
    onto t's grid, so the per-pixel residual is ``D_next(p + F(p)) - D_t(p)``:
    every pixel is compared with its own correspondence, and the occlusion
    mask (on t's grid) splits the same pixels.

    Returns ``{"l1": {region: mean}, "charbonnier": {region: mean}}`` for the
    regions occluded / non_occluded / all; an empty region maps to ``None``.
    """
    if D_t.shape != D_next.shape:
        raise InvalidInputError(f"depth shapes differ: {D_t.shape} vs {D_next.shape}")
    occ_mask = _check_occ(occ, D_t.shape)
    w = backward_warp(D_next, flow)
    region = w.coverage & D_t.valid
    diff = np.where(region, w.warped - np.where(D_t.valid, D_t.values, 0.0), 0.0)
    return {
        "l1": _region_means(np.abs(diff), region, occ_mask),
        "charbonnier": _region_means(charbonnier(diff, eps), region, occ_mask),
    }


def rgb_warp_error(I_t: RgbFrame, I_next: RgbFrame, flow_pred: FlowField, occ=None,
                   eps: float = DEFAULT_CHARBONNIER_EPS) -> dict:
    """As :func:`depth_warp_error` for RGB frames; per-pixel error averaged over channels."""
    if I_t.shape != I_next.shape:
        raise InvalidInputError(f"frame shapes differ: {I_t.shape} vs {I_next.shape}")
    occ_mask = _check_occ(occ, I_t.shape)
    w = backward_warp(I_next, flow_pred)
    region = w.coverage
    diff = np.where(region[..., None], w.warped - I_t.pixels, 0.0)
    return {
        "l1": _region_means(np.abs(diff).mean(axis=-1), region, occ_mask),
        "charbonnier": _region_means(charbonnier(diff, eps).mean(axis=-1), region, occ_mask),
    }


def occlusion_from_fb(flow_fwd: FlowField, flow_bwd: FlowField, tol_px: float = DEFAULT_FB_TOL_PX) -> OcclusionMask:
    """Forward-backward consistency check on frame t's grid.

    A pixel is occluded when ``|F_fwd(p) + F_bwd(p + F_fwd(p))| > tol_px`` or
    the backward flow cannot be sampled there.
    """
    if not tol_px > 0:
        raise InvalidInputError(f"tol_px must be positive, got {tol_px}")
    if flow_fwd.shape != flow_bwd.shape:
        raise InvalidInputError(f"flow shapes differ: {flow_fwd.shape} vs {flow_bwd.shape}")
    u, v = pixel_grid(*flow_fwd.shape)
    bwd, ok = bilinear_sample(flow_bwd.vectors, flow_bwd.valid, u + flow_fwd.du, v + flow_fwd.dv)
    ok &= flow_fwd.valid
    resid = np.hypot(flow_fwd.du + bwd[..., 0], flow_fwd.dv + bwd[..., 1])
    return OcclusionMask(~ok | (resid > tol_px), "forward_backward")


def mean_over_pairs(results: list[dict]) -> dict:
    """Unweighted mean over frame pairs of nested ``{metric: {region: value}}`` dicts, skipping ``None``."""
    if not results:
        return {}
    out = {}
    for metric in results[0]:
        out[metric] = {}
        for region in results[0][metric]:
            vals = [r[metric][region] for r in results if r[metric][region] is not None]
            out[metric][region] = float(np.mean(vals)) if vals else None
    return out


__all__ = [
    "WarpResult",
    "OcclusionMask",
    "backward_warp",
    "bilinear_sample",
    "charbonnier",
    "depth_warp_error",
    "rgb_warp_error",
    "occlusion_from_fb",
    "mean_over_pairs",
    "DEFAULT_CHARBONNIER_EPS",
]
