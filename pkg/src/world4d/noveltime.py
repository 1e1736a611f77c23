"""Novel-time interpolation: hold out frames, rebuild them by warping observed depth."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError
from .geometry import DepthMap, FlowField
from .warp import backward_warp


@dataclass(frozen=True)
class TimelineSplit:
    observed: tuple
    novel: tuple

    def __post_init__(self):
        obs, nov = tuple(sorted(self.observed)), tuple(sorted(self.novel))
        if set(obs) & set(nov):
            raise InvalidInputError("observed and novel frames overlap")
        full = set(obs) | set(nov)
        if full != set(range(len(full))):
            raise InvalidInputError("observed and novel frames must cover 0..T-1")
        object.__setattr__(self, "observed", obs)
        object.__setattr__(self, "novel", nov)

    @classmethod
    def even_odd(cls, T: int) -> "TimelineSplit":
        return cls(tuple(range(0, T, 2)), tuple(range(1, T, 2)))


def interpolate_depth(D_obs_prev: DepthMap, flow_pred: FlowField) -> DepthMap:
    """Depth at the novel frame: observed depth backward-warped along ``flow_pred``.

    Backward warping samples the source at ``p + flow(p)`` for every pixel p
    of the result, so ``flow_pred`` lives on the novel frame's grid and points
    back to the observed frame (novel -> observed).
    """
    w = backward_warp(D_obs_prev, flow_pred)
    return DepthMap(w.warped, w.coverage)


def pullback_from_forward(flow_fwd: FlowField) -> FlowField:
    """First-order novel -> observed field from an observed -> novel flow: ``-F(p)``.

    Exact wherever the flow is locally constant; wrong in a band as wide as
    the motion at moving boundaries.
    """
    return FlowField(-flow_fwd.du, -flow_fwd.dv, flow_fwd.valid)


def _masked_l1(a: DepthMap, b_values, b_valid):
    region = a.valid & b_valid
    if not region.any():
        return None
    return float(np.mean(np.abs(a.values[region] - b_values[region])))


def novel_depth_error(D_tilde: DepthMap, D_gt_novel: DepthMap) -> float | None:
    """Mean absolute depth error over the joint valid region; ``None`` if empty."""
    if D_tilde.shape != D_gt_novel.shape:
        raise InvalidInputError(f"shape mismatch {D_tilde.shape} vs {D_gt_novel.shape}")
    return _masked_l1(D_tilde, D_gt_novel.values, D_gt_novel.valid)


def novel_warp_error(D_prev_pred: DepthMap, flow_gt: FlowField, D_tilde: DepthMap) -> float | None:
    """Mean absolute difference between ``warp(D_prev_pred, flow_gt)`` and ``D_tilde``."""
    if D_prev_pred.shape != D_tilde.shape:
        raise InvalidInputError(f"shape mismatch {D_prev_pred.shape} vs {D_tilde.shape}")
    ref = backward_warp(D_prev_pred, flow_gt)
    return _masked_l1(D_tilde, ref.warped, ref.coverage)


def noveltime_errors(depths_pred, flows_pred, depths_gt, flows_gt, split: TimelineSplit | None = None, *,
                     flows_pred_bwd=None, flows_gt_bwd=None) -> dict:
    """Sequence-level novel-time depth and warp errors.

    ``flows_*[t]`` spans frame t -> t+1 on t's grid; ``flows_*_bwd[t]``, when
    given, spans t+1 -> t on t+1's grid and is used directly for the pullback.
    Without it the forward flow is negated. Each novel frame is rebuilt from
    the immediately preceding observed frame. Frames whose evaluation region
    is empty are skipped and counted.
    """
    T = len(depths_pred)
    if len(depths_gt) != T:
        raise InvalidInputError("predicted and ground-truth sequences differ in length")
    split = TimelineSplit.even_odd(T) if split is None else split
    if len(split.observed) + len(split.novel) != T:
        raise InvalidInputError(f"split covers {len(split.observed) + len(split.novel)} frames, sequence has {T}")

    def pullback(fwd, bwd, k):
        if k >= len(fwd) or (bwd is not None and k >= len(bwd)):
            raise InvalidInputError(f"missing flow raster for observed->novel pair {k}->{k + 1}")
        return bwd[k] if bwd is not None else pullback_from_forward(fwd[k])

    depth_errs, warp_errs = [], []
    skipped_depth = skipped_warp = 0
    for t in split.novel:
        if t == 0 or (t - 1) not in split.observed:
            raise InvalidInputError(f"novel frame {t} has no immediately preceding observed frame")
        D_tilde = interpolate_depth(depths_pred[t - 1], pullback(flows_pred, flows_pred_bwd, t - 1))
        e = novel_depth_error(D_tilde, depths_gt[t])
        if e is None:
            skipped_depth += 1
        else:
            depth_errs.append(e)
        w = novel_warp_error(depths_pred[t - 1], pullback(flows_gt, flows_gt_bwd, t - 1), D_tilde)
        if w is None:
            skipped_warp += 1
        else:
            warp_errs.append(w)
    return {
        "depth_err": float(np.mean(depth_errs)) if depth_errs else None,
        "warp_err": float(np.mean(warp_errs)) if warp_errs else None,
        "novel_frames": len(split.novel),
        "skipped_depth_frames": skipped_depth,
        "skipped_warp_frames": skipped_warp,
    }


__all__ = [
    "TimelineSplit",
    "interpolate_depth",
    "novel_depth_error",
    "novel_warp_error",
    "noveltime_errors",
    "pullback_from_forward",
]
