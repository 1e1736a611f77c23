"""Per-frame depth, optical flow, pixel fidelity and motion-mask (Physics-IQ style) metrics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import gaussian_filter

from .errors import InvalidInputError
from .geometry import DepthMap, FlowField, RgbFrame

FL_ALL_ABS_PX = 3.0
FL_ALL_REL = 0.05
SSIM_SIGMA = 1.5
SSIM_TRUNCATE = 3.5  # radius int(3.5 * 1.5 + 0.5) = 5 -> 11x11 window
SSIM_K1 = 0.01
SSIM_K2 = 0.03


@dataclass(frozen=True)
class DepthEvalConfig:
    alignment: str = "metric"
    delta_base: float = 1.25

    def __post_init__(self):
        if self.alignment not in ("metric", "median_scaled"):
            raise InvalidInputError(f"alignment must be 'metric' or 'median_scaled', got {self.alignment!r}")
        if not self.delta_base > 1:
            raise InvalidInputError(f"delta_base must exceed 1, got {self.delta_base}")


@dataclass(frozen=True)
class MotionMaskConfig:
    diff_threshold: float = 0.05
    smoothing_radius: float = 1.5

    def __post_init__(self):
        if not 0 < self.diff_threshold < 1:
            raise InvalidInputError(f"diff_threshold must be in (0, 1), got {self.diff_threshold}")
        if self.smoothing_radius < 0:
            raise InvalidInputError(f"smoothing_radius must be >= 0, got {self.smoothing_radius}")


def depth_metrics(pred: DepthMap, gt: DepthMap, cfg: DepthEvalConfig = DepthEvalConfig()) -> dict:
    """AbsRel, RMSE and threshold accuracies (percent) over jointly valid pixels."""
    if pred.shape != gt.shape:
        raise InvalidInputError(f"shape mismatch {pred.shape} vs {gt.shape}")
    joint = pred.valid & gt.valid
    if not joint.any():
        raise InvalidInputError("no jointly valid depth pixels")
    p = pred.values[joint]
    g = gt.values[joint]
    if np.any(g == 0):
        raise InvalidInputError("ground-truth depth contains zeros in the valid region")
    if cfg.alignment == "median_scaled":
        p = p * (np.median(g) / np.median(p))
    ratio = np.maximum(p / g, g / p)
    out = {
        "absrel": float(np.mean(np.abs(p - g) / g)),
        "rmse": float(np.sqrt(np.mean((p - g) ** 2))),
    }
    for k in (1, 2, 3):
        out[f"delta{k}"] = float(100.0 * np.mean(ratio < cfg.delta_base ** k))
    return out


def flow_metrics(pred: FlowField, gt: FlowField) -> dict:
    """End-point error and outlier percentages over jointly valid pixels.

    Fl-all counts pixels whose EPE exceeds both 3 px and 5% of the
    ground-truth magnitude.
    """
    if pred.shape != gt.shape:
        raise InvalidInputError(f"shape mismatch {pred.shape} vs {gt.shape}")
    joint = pred.valid & gt.valid
    if not joint.any():
        raise InvalidInputError("no jointly valid flow pixels")
    epe = np.hypot(pred.du - gt.du, pred.dv - gt.dv)[joint]
    mag = np.hypot(gt.du, gt.dv)[joint]
    return {
        "epe": float(np.mean(epe)),
        "fl_all_pct": float(100.0 * np.mean((epe > FL_ALL_ABS_PX) & (epe > FL_ALL_REL * mag))),
        "out_1px_pct": float(100.0 * np.mean(epe > 1.0)),
        "out_3px_pct": float(100.0 * np.mean(epe > 3.0)),
    }


def _luma(frame: RgbFrame) -> np.ndarray:
    return frame.luma()


def ssim(a: np.ndarray, b: np.ndarray, data_range: float = 1.0) -> float:
    """Mean SSIM of two grayscale images with an 11x11 Gaussian window (sigma 1.5).

    Statistics use population (not sample) covariance; a border of half the
    window width is excluded from the mean.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise InvalidInputError(f"shape mismatch {a.shape} vs {b.shape}")
    C1 = (SSIM_K1 * data_range) ** 2
    C2 = (SSIM_K2 * data_range) ** 2

    def blur(x):
        return gaussian_filter(x, sigma=SSIM_SIGMA, truncate=SSIM_TRUNCATE, mode="reflect")

    mu_a, mu_b = blur(a), blur(b)
    var_a = blur(a * a) - mu_a * mu_a
    var_b = blur(b * b) - mu_b * mu_b
    cov = blur(a * b) - mu_a * mu_b
    num = (2 * mu_a * mu_b + C1) * (2 * cov + C2)
    den = (mu_a ** 2 + mu_b ** 2 + C1) * (var_a + var_b + C2)
    smap = num / den
    pad = int(SSIM_TRUNCATE * SSIM_SIGMA + 0.5)
    if min(a.shape) <= 2 * pad:
        raise InvalidInputError(f"image {a.shape} too small for an 11x11 SSIM window")
    return float(smap[pad:-pad, pad:-pad].mean())


def _check_sequences(pred, gt):
    if len(pred) != len(gt):
        raise InvalidInputError(f"sequence lengths differ: {len(pred)} vs {len(gt)}")
    if not pred:
        raise InvalidInputError("empty frame sequence")
    for i, (p, g) in enumerate(zip(pred, gt)):
        if p.shape != g.shape:
            raise InvalidInputError(f"frame {i}: shape mismatch {p.shape} vs {g.shape}")


def pixel_metrics(pred: list[RgbFrame], gt: list[RgbFrame]) -> dict:
    """MSE over all pixels and frames, PSNR for a [0, 1] range, mean per-frame luma SSIM.

    PSNR of an exact match is ``inf``.
    """
    _check_sequences(pred, gt)
    sq = [np.mean((p.pixels - g.pixels) ** 2) for p, g in zip(pred, gt)]
    mse = float(np.mean(sq))
    psnr = float("inf") if mse == 0 else float(10.0 * np.log10(1.0 / mse))
    s = float(np.mean([ssim(_luma(p), _luma(g)) for p, g in zip(pred, gt)]))
    return {"mse": mse, "psnr": psnr, "ssim": s}


def motion_masks(frames: list[RgbFrame], cfg: MotionMaskConfig = MotionMaskConfig()) -> np.ndarray:
    """Binary (T, H, W) masks of pixels whose smoothed luma differs from frame 0."""
    ref = _luma(frames[0])
    out = np.zeros((len(frames),) + ref.shape, dtype=bool)
    for t, f in enumerate(frames):
        diff = np.abs(_luma(f) - ref)
        if cfg.smoothing_radius > 0:
            diff = gaussian_filter(diff, sigma=cfg.smoothing_radius, mode="nearest")
        out[t] = diff > cfg.diff_threshold
    return out


def _iou(a: np.ndarray, b: np.ndarray):
    union = np.count_nonzero(a | b)
    if union == 0:
        return None
    return np.count_nonzero(a & b) / union


def physicsiq_scores(pred: list[RgbFrame], gt: list[RgbFrame], cfg: MotionMaskConfig = MotionMaskConfig()) -> dict:
    """Spatial, spatiotemporal and weighted spatial IoU of motion masks, plus MSE.

    * spatial_iou: IoU of the masks collapsed over time (any motion);
    * spatiotemporal_iou: mean per-frame IoU over frames where either mask is non-empty;
    * weighted_spatial_iou: sum(min(f_pred, f_gt)) / sum(max(f_pred, f_gt)) with f the
      fraction of frames each pixel is moving.

    An IoU with an empty union is ``None``.
    """
    _check_sequences(pred, gt)
    mp = motion_masks(pred, cfg)
    mg = motion_masks(gt, cfg)
    spatial = _iou(mp.any(axis=0), mg.any(axis=0))
    per_frame = [v for v in (_iou(a, b) for a, b in zip(mp, mg)) if v is not None]
    st = float(np.mean(per_frame)) if per_frame else None
    fp, fg = mp.mean(axis=0), mg.mean(axis=0)
    denom = np.maximum(fp, fg).sum()
    weighted = float(np.minimum(fp, fg).sum() / denom) if denom > 0 else None
    mse = float(np.mean([np.mean((p.pixels - g.pixels) ** 2) for p, g in zip(pred, gt)]))
    return {
        "spatial_iou": None if spatial is None else float(spatial),
        "spatiotemporal_iou": st,
        "weighted_spatial_iou": weighted,
        "mse": mse,
    }


__all__ = [
    "DepthEvalConfig",
    "MotionMaskConfig",
    "depth_metrics",
    "flow_metrics",
    "pixel_metrics",
    "physicsiq_scores",
    "motion_masks",
    "ssim",
]
