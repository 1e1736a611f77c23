"""Metric suites over a predicted and a ground-truth sequence, and report aggregation.

A report is a JSON object::

    {"tool": {...}, "timestamp": "...", "inputs": {...},
     "suites": {name: {"config": {...}, "metrics": {...}}}}

Absent values (empty evaluation regions, undefined IoUs) are ``null``; an
infinite PSNR is the string ``"inf"``. ``timestamp`` is the only field that
varies between identical runs.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from datetime import datetime, timezone

import numpy as np

from . import __version__
from .chamfer import ChamferConfig, chamfer4d
from .dataset_io import Sequence
from .errors import EmptySetError, InvalidInputError, ValidationError
from .frame_metrics import (
    DepthEvalConfig,
    MotionMaskConfig,
    depth_metrics,
    flow_metrics,
    physicsiq_scores,
    pixel_metrics,
)
from .geometry import DEFAULT_ALPHA, PointSet4D, depth_to_points4d, moving_mask
from .noveltime import noveltime_errors
from .warp import (
    DEFAULT_CHARBONNIER_EPS,
    DEFAULT_FB_TOL_PX,
    OcclusionMask,
    depth_warp_error,
    mean_over_pairs,
    occlusion_from_fb,
    rgb_warp_error,
)
from .worldline import (
    DEFAULT_FAIL_TAU,
    DEFAULT_NUM_SEEDS,
    DEFAULT_SEED,
    build_worldlines,
    sample_seeds,
    worldline_metrics,
)

SUITES = ("depth", "warp", "flow", "chamfer4d", "worldline", "noveltime", "physicsiq")
DEFAULT_DELTA_PX = 0.5
DEFAULT_POINT_BUDGET = 100_000

REQUIRED = {
    "depth": ("depth",),
    "warp": ("depth", "rgb", "flow"),
    "flow": ("flow",),
    "chamfer4d": ("depth", "flow"),
    "worldline": ("depth", "flow"),
    "noveltime": ("depth", "flow"),
    "physicsiq": ("rgb",),
}


@dataclass(frozen=True)
class EvalConfig:
    alpha: float = DEFAULT_ALPHA
    delta_px: float = DEFAULT_DELTA_PX
    point_budget: int = DEFAULT_POINT_BUDGET
    fail_tau: float = DEFAULT_FAIL_TAU
    charbonnier_eps: float = DEFAULT_CHARBONNIER_EPS
    depth_align: str = "metric"
    delta_base: float = 1.25
    num_seeds: int = DEFAULT_NUM_SEEDS
    seed: int = DEFAULT_SEED
    seed_region: str = "depth"
    occlusion: str = "auto"
    fb_tol_px: float = DEFAULT_FB_TOL_PX
    motion_threshold: float = 0.05
    motion_sigma: float = 1.5
    workers: int = 1

    def __post_init__(self):
        if not self.alpha > 0:
            raise InvalidInputError(f"alpha must be positive, got {self.alpha}")
        if self.delta_px < 0:
            raise InvalidInputError(f"delta must be >= 0, got {self.delta_px}")
        if not self.fail_tau > 0:
            raise InvalidInputError(f"fail_tau must be positive, got {self.fail_tau}")
        if not self.charbonnier_eps > 0:
            raise InvalidInputError(f"charbonnier_eps must be positive, got {self.charbonnier_eps}")
        if self.num_seeds < 1 or self.point_budget < 1:
            raise InvalidInputError("seed count and point budget must be positive")
        if self.seed_region not in ("depth", "object"):
            raise InvalidInputError(f"seed_region must be 'depth' or 'object', got {self.seed_region!r}")
        if self.occlusion not in ("auto", "gt", "fb", "none"):
            raise InvalidInputError(f"occlusion must be auto, gt, fb or none, got {self.occlusion!r}")
        if self.workers < 1:
            raise InvalidInputError(f"workers must be >= 1, got {self.workers}")
        DepthEvalConfig(self.depth_align, self.delta_base)
        MotionMaskConfig(self.motion_threshold, self.motion_sigma)


def _map(fn, items, workers: int) -> list:
    """Ordered map; results come back in input order whatever the worker count."""
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _mean_dicts(rows: list[dict]) -> dict:
    out = {}
    for key in rows[0]:
        vals = [r[key] for r in rows if r[key] is not None]
        out[key] = float(np.mean(vals)) if vals else None
    return out


class _Pair:
    """Predicted and ground-truth sequences with per-modality caches."""

    def __init__(self, pred: Sequence, gt: Sequence):
        self.pred, self.gt = pred, gt
        self._cache = {}

    def get(self, which: str, modality: str) -> list:
        key = (which, modality)
        if key not in self._cache:
            seq = self.pred if which == "pred" else self.gt
            self._cache[key] = seq.load_all(modality)
        return self._cache[key]


def check_compatible(pred: Sequence, gt: Sequence, suites) -> None:
    if pred.intrinsics.shape != gt.intrinsics.shape:
        raise ValidationError(
            f"resolution mismatch: prediction is {pred.intrinsics.width}x{pred.intrinsics.height}, "
            f"ground truth is {gt.intrinsics.width}x{gt.intrinsics.height}"
        )
    if len(pred) != len(gt):
        raise ValidationError(f"frame count mismatch: prediction has {len(pred)}, ground truth has {len(gt)}")
    for suite in suites:
        for mod in REQUIRED[suite]:
            for name, seq in (("prediction", pred), ("ground truth", gt)):
                if not seq.has(mod):
                    raise ValidationError(f"suite {suite!r} needs modality {mod!r}, missing from {name} ({seq.path})")
    if "warp" in suites or "flow" in suites or "noveltime" in suites:
        if len(pred) < 2:
            raise ValidationError("flow-based suites need at least 2 frames")


def suite_depth(pair: _Pair, cfg: EvalConfig) -> dict:
    dcfg = DepthEvalConfig(cfg.depth_align, cfg.delta_base)
    pd, gd = pair.get("pred", "depth"), pair.get("gt", "depth")

    def one(t):
        try:
            return depth_metrics(pd[t], gd[t], dcfg)
        except InvalidInputError:
            return None

    rows = _map(one, range(len(pd)), cfg.workers)
    scored = [r for r in rows if r is not None]
    metrics = _mean_dicts(scored) if scored else dict.fromkeys(("absrel", "rmse", "delta1", "delta2", "delta3"))
    metrics["frames_scored"] = len(scored)
    if pair.pred.has("rgb") and pair.gt.has("rgb"):
        metrics.update(pixel_metrics(pair.get("pred", "rgb"), pair.get("gt", "rgb")))
    else:
        metrics.update(mse=None, psnr=None, ssim=None)
    metrics.update(fvd=None, lpips=None)
    return {
        "config": {"alignment": dcfg.alignment, "delta_base": dcfg.delta_base, "deltas_in": "percent",
                   "ssim_window": "gaussian 11x11 sigma 1.5", "psnr_range": 1.0},
        "metrics": metrics,
    }


def suite_flow(pair: _Pair, cfg: EvalConfig) -> dict:
    pf, gf = pair.get("pred", "flow"), pair.get("gt", "flow")

    def one(t):
        try:
            return flow_metrics(pf[t], gf[t])
        except InvalidInputError:
            return None

    rows = [r for r in _map(one, range(len(pf)), cfg.workers) if r is not None]
    metrics = _mean_dicts(rows) if rows else dict.fromkeys(("epe", "fl_all_pct", "out_1px_pct", "out_3px_pct"))
    metrics["pairs_scored"] = len(rows)
    return {"config": {"fl_all": "epe > 3 px and epe > 5% of |gt|"}, "metrics": metrics}


def _occlusions(pair: _Pair, cfg: EvalConfig):
    n = len(pair.get("gt", "flow"))
    mode = cfg.occlusion
    fb_side = "gt" if pair.gt.has("flow_bwd") else "pred" if pair.pred.has("flow_bwd") else None
    if mode == "auto":
        mode = "gt" if pair.gt.has("occlusion") else "fb" if fb_side else "none"
    if mode == "gt":
        if not pair.gt.has("occlusion"):
            raise ValidationError("occlusion source 'gt' needs the ground truth 'occlusion' modality")
        return "gt", pair.get("gt", "occlusion")
    if mode == "fb":
        if fb_side is None:
            raise ValidationError("occlusion source 'fb' needs a 'flow_bwd' modality in either sequence")
        fwd, bwd = pair.get(fb_side, "flow"), pair.get(fb_side, "flow_bwd")
        return f"forward_backward ({fb_side})", [occlusion_from_fb(fwd[t], bwd[t], cfg.fb_tol_px) for t in range(n)]
    h, w = pair.gt.intrinsics.shape
    return "none", [OcclusionMask.none(h, w)] * n


def suite_warp(pair: _Pair, cfg: EvalConfig) -> dict:
    # depth: predicted D_t moved by ground-truth flow, against ground-truth D_t+1
    pd, gd, gf = pair.get("pred", "depth"), pair.get("gt", "depth"), pair.get("gt", "flow")
    # rgb: predicted frames under the predicted flow
    frames, pf = pair.get("pred", "rgb"), pair.get("pred", "flow")
    source, occ = _occlusions(pair, cfg)

    def one(t):
        return (
            depth_warp_error(pd[t], gd[t + 1], gf[t], occ[t], cfg.charbonnier_eps),
            rgb_warp_error(frames[t], frames[t + 1], pf[t], occ[t], cfg.charbonnier_eps),
        )

    rows = _map(one, range(len(gf)), cfg.workers)
    return {
        "config": {"charbonnier_eps": cfg.charbonnier_eps, "occlusion_source": source,
                   "fb_tol_px": cfg.fb_tol_px, "interpolation": "bilinear",
                   "residual": "X_next(p + F(p)) - X_t(p) on frame t's grid",
                   "depth": "pred D_t, gt flow, gt D_t+1", "rgb": "pred I_t, pred flow, pred I_t+1",
                   "aggregation": "mean over pixels, then pairs"},
        "metrics": {
            "depth": mean_over_pairs([r[0] for r in rows]),
            "rgb": mean_over_pairs([r[1] for r in rows]),
            "pairs": len(rows),
        },
    }


def motion_points(depths, flows, K, delta_px: float, alpha: float) -> PointSet4D:
    """4D points of every pixel whose flow to the next frame exceeds ``delta_px``."""
    chunks = []
    for t, flow in enumerate(flows):
        sel = moving_mask(flow, delta_px) & depths[t].valid
        if sel.any():
            chunks.append(depth_to_points4d(depths[t], K, float(t), sel, alpha))
    if not chunks:
        return PointSet4D(np.empty((0, 4)), alpha)
    return PointSet4D.concat(chunks, alpha)


def suite_chamfer(pair: _Pair, cfg: EvalConfig) -> dict:
    K = pair.gt.intrinsics
    gen = motion_points(pair.get("pred", "depth"), pair.get("pred", "flow"), pair.pred.intrinsics, cfg.delta_px, cfg.alpha)
    ref = motion_points(pair.get("gt", "depth"), pair.get("gt", "flow"), K, cfg.delta_px, cfg.alpha)
    n_gen, n_ref = len(gen), len(ref)
    gen = gen.subsample(cfg.point_budget, cfg.seed)
    ref = ref.subsample(cfg.point_budget, cfg.seed)
    try:
        cd = chamfer4d(gen, ref, ChamferConfig(cfg.alpha))
    except EmptySetError:
        cd = None
    return {
        "config": {"alpha": cfg.alpha, "delta_px": cfg.delta_px, "point_budget": cfg.point_budget,
                   "subsample_seed": cfg.seed, "distance": "squared", "moving_points": "flow magnitude > delta_px"},
        "metrics": {
            "chamfer4d": cd,
            "reward": None if cd is None else -cd,
            "points_pred": n_gen,
            "points_gt": n_ref,
            "points_used_pred": len(gen),
            "points_used_gt": len(ref),
        },
    }


def suite_worldline(pair: _Pair, cfg: EvalConfig) -> dict:
    gd = pair.get("gt", "depth")
    if cfg.seed_region == "object":
        if not pair.gt.has("ids"):
            raise ValidationError("seed region 'object' needs the ground truth 'ids' modality")
        region = (pair.get("gt", "ids")[0] > 0) & gd[0].valid
    else:
        region = gd[0].valid
    try:
        seeds = sample_seeds(region, cfg.num_seeds, cfg.seed)
        wl = build_worldlines(seeds, pair.get("gt", "flow"), pair.get("pred", "depth"), gd, pair.gt.intrinsics)
        metrics = worldline_metrics(wl, cfg.fail_tau).as_dict()
        metrics["num_seeds"] = int(len(seeds))
    except EmptySetError:
        metrics = dict.fromkeys(("l2_error", "mean_drift", "final_drift", "fail_rate",
                                 "traj_length_frames", "traj_length_pct", "drift_curve"))
        metrics["num_seeds"] = 0
    return {
        "config": {"fail_tau": cfg.fail_tau, "num_seeds": cfg.num_seeds, "seed": cfg.seed,
                   "seed_region": cfg.seed_region, "tracking_flow": "gt", "sampling": "bilinear over valid taps"},
        "metrics": metrics,
    }


def suite_noveltime(pair: _Pair, cfg: EvalConfig) -> dict:
    # exact novel -> observed fields when both sequences carry them
    use_bwd = pair.pred.has("flow_bwd") and pair.gt.has("flow_bwd")
    metrics = noveltime_errors(
        pair.get("pred", "depth"), pair.get("pred", "flow"), pair.get("gt", "depth"), pair.get("gt", "flow"),
        flows_pred_bwd=pair.get("pred", "flow_bwd") if use_bwd else None,
        flows_gt_bwd=pair.get("gt", "flow_bwd") if use_bwd else None,
    )
    return {
        "config": {"split": "even observed, odd novel", "source": "previous observed frame",
                   "pullback": "flow_bwd" if use_bwd else "negated forward flow"},
        "metrics": metrics,
    }


def suite_physicsiq(pair: _Pair, cfg: EvalConfig) -> dict:
    mcfg = MotionMaskConfig(cfg.motion_threshold, cfg.motion_sigma)
    return {
        "config": {"motion_threshold": mcfg.diff_threshold, "smoothing_sigma": mcfg.smoothing_radius,
                   "reference_frame": 0, "channel": "BT.601 luma"},
        "metrics": physicsiq_scores(pair.get("pred", "rgb"), pair.get("gt", "rgb"), mcfg),
    }


_SUITE_FNS = {
    "depth": suite_depth,
    "warp": suite_warp,
    "flow": suite_flow,
    "chamfer4d": suite_chamfer,
    "worldline": suite_worldline,
    "noveltime": suite_noveltime,
    "physicsiq": suite_physicsiq,
}


def resolve_suites(names) -> list[str]:
    out = []
    for name in names:
        if name == "all":
            out.extend(SUITES)
        elif name in SUITES:
            out.append(name)
        else:
            raise ValidationError(f"unknown suite {name!r}; choose from {', '.join(SUITES + ('all',))}")
    return [s for s in SUITES if s in out]


def evaluate(pred_manifest, gt_manifest, suites=("all",), cfg: EvalConfig = EvalConfig()) -> dict:
    """Run the requested suites; returns a report dict (not yet JSON-encoded)."""
    names = resolve_suites(suites)
    pred = Sequence(pred_manifest)
    gt = Sequence(gt_manifest)
    check_compatible(pred, gt, names)
    pair = _Pair(pred, gt)
    report = {
        "tool": {"name": "world4d", "version": __version__},
        "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "inputs": {
            "pred": str(pred_manifest),
            "gt": str(gt_manifest),
            "frame_count": len(gt),
            "resolution": [gt.intrinsics.width, gt.intrinsics.height],
        },
        "suites": {},
    }
    for name in names:
        report["suites"][name] = _SUITE_FNS[name](pair, cfg)
    return report


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return None
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    return x


def dump_report(report: dict) -> str:
    return json.dumps(_jsonable(report), sort_keys=True, indent=2) + "\n"


# ---------------------------------------------------------------- aggregation

class ConfigConflictError(ValidationError):
    """Reports to be aggregated were produced with different configurations."""


def _flatten(prefix: str, value, out: dict):
    if isinstance(value, dict):
        for k in sorted(value):
            _flatten(f"{prefix}.{k}" if prefix else k, value[k], out)
    elif isinstance(value, list):
        return   # curves are per-sequence, not aggregated
    else:
        out[prefix] = value


def _as_number(v):
    if v == "inf":
        return math.inf
    if v == "-inf":
        return -math.inf
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        return None
    return float(v)


def aggregate_reports(reports: list[dict]) -> dict:
    """Per-metric mean across reports; ``None`` values are skipped and counted."""
    if not reports:
        raise ValidationError("no reports to aggregate")
    for i, r in enumerate(reports):
        if not isinstance(r, dict) or "suites" not in r:
            raise ValidationError(f"report {i} is malformed: missing 'suites'")
        for name, body in r["suites"].items():
            if "config" not in body or "metrics" not in body:
                raise ValidationError(f"report {i} suite {name!r} is missing its config or metrics")
    suite_names = sorted(reports[0]["suites"])
    for i, r in enumerate(reports[1:], start=1):
        if sorted(r["suites"]) != suite_names:
            raise ConfigConflictError(f"report {i} has suites {sorted(r['suites'])}, report 0 has {suite_names}")
    out = {"num_reports": len(reports), "suites": {}}
    for name in suite_names:
        config = reports[0]["suites"][name]["config"]
        for i, r in enumerate(reports[1:], start=1):
            other = r["suites"][name]["config"]
            if other != config:
                keys = sorted(k for k in set(config) | set(other) if config.get(k) != other.get(k))
                raise ConfigConflictError(
                    f"suite {name!r}: report {i} config differs from report 0 in {', '.join(keys)}"
                )
        flat = []
        for r in reports:
            f = {}
            _flatten("", r["suites"][name]["metrics"], f)
            flat.append(f)
        keys = sorted(set().union(*flat))
        means, counts = {}, {}
        for key in keys:
            vals = [_as_number(f.get(key)) for f in flat]
            vals = [v for v in vals if v is not None]
            counts[key] = len(vals)
            if not vals:
                means[key] = None
            elif any(math.isinf(v) for v in vals):
                means[key] = math.fsum(vals)  # inf, or nan for mixed signs
            else:
                means[key] = math.fsum(vals) / len(vals)
        out["suites"][name] = {"config": config, "mean": means, "count": counts}
    return out


def summary_csv(summary: dict) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["suite", "metric", "mean", "count"])
    for name, body in summary["suites"].items():
        for key, value in body["mean"].items():
            v = _jsonable(value)
            w.writerow([name, key, "" if v is None else (v if isinstance(v, str) else repr(v)), body["count"][key]])
    return buf.getvalue()


def report_csv(report: dict) -> str:
    """A single report as CSV rows of ``suite, metric, value``."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["suite", "metric", "value"])
    for name in sorted(report["suites"]):
        flat = {}
        _flatten("", report["suites"][name]["metrics"], flat)
        for key, value in flat.items():
            v = _jsonable(value)
            w.writerow([name, key, "" if v is None else (v if isinstance(v, str) else repr(v))])
    return buf.getvalue()


__all__ = [
    "EvalConfig",
    "SUITES",
    "evaluate",
    "dump_report",
    "aggregate_reports",
    "summary_csv",
    "report_csv",
    "ConfigConflictError",
    "motion_points",
    "check_compatible",
    "resolve_suites",
]
