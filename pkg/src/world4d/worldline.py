"""Worldlines: seed pixels tracked with flow, lifted to 3D with depth.

A worldline set is stored as dense arrays over (N seeds, T frames). Validity
is prefix-monotone: once a track breaks it never resumes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptySetError, InvalidInputError
from .geometry import CameraIntrinsics, DepthMap, FlowField, unproject_pixels
from .warp import bilinear_sample

DEFAULT_FAIL_TAU = 0.1
DEFAULT_NUM_SEEDS = 2048
DEFAULT_SEED = 42


@dataclass(frozen=True, eq=False)
class Worldlines:
    seeds: np.ndarray                       # (N, 2) pixel (u, v) at t=0
    positions_2d: np.ndarray                # (N, T, 2)
    valid: np.ndarray                       # (N, T)
    positions_3d_pred: np.ndarray | None = None   # (N, T, 3)
    positions_3d_gt: np.ndarray | None = None     # (N, T, 3)

    @property
    def num_tracks(self) -> int:
        return self.positions_2d.shape[0]

    @property
    def horizon(self) -> int:
        return self.positions_2d.shape[1]


@dataclass(frozen=True)
class WorldlineMetrics:
    l2_error: float
    mean_drift: float
    final_drift: float | None
    fail_rate: float
    traj_length_frames: float
    traj_length_pct: float
    drift_curve: tuple

    def as_dict(self) -> dict:
        return {
            "l2_error": self.l2_error,
            "mean_drift": self.mean_drift,
            "final_drift": self.final_drift,
            "fail_rate": self.fail_rate,
            "traj_length_frames": self.traj_length_frames,
            "traj_length_pct": self.traj_length_pct,
            "drift_curve": list(self.drift_curve),
        }


def _prefix(valid: np.ndarray) -> np.ndarray:
    return np.logical_and.accumulate(valid, axis=-1)


def sample_seeds(mask, n: int, seed: int = DEFAULT_SEED) -> np.ndarray:
    """Draw ``n`` distinct pixels uniformly from ``mask`` (all of them if fewer).

    Returns an (n, 2) float array of ``(u, v)`` positions, in draw order.
    """
    mask = np.asarray(mask, dtype=bool)
    rows, cols = np.nonzero(mask)
    if rows.size == 0:
        raise InvalidInputError("seed mask has no true pixels")
    if n <= 0:
        raise InvalidInputError(f"number of seeds must be positive, got {n}")
    rng = np.random.default_rng(seed)
    pick = rng.choice(rows.size, size=min(n, rows.size), replace=False)
    return np.stack([cols[pick], rows[pick]], axis=1).astype(np.float64)


def track_2d(seeds, flows: list[FlowField]) -> Worldlines:
    """Advance seeds through ``flows[t]`` (t -> t+1) with bilinear flow sampling.

    A track becomes invalid, permanently, when it leaves the raster or samples
    invalid flow.
    """
    seeds = np.asarray(seeds, dtype=np.float64).reshape(-1, 2)
    if not flows:
        raise InvalidInputError("track_2d needs at least one flow field")
    height, width = flows[0].shape
    T = len(flows) + 1
    pos = np.full((seeds.shape[0], T, 2), np.nan)
    valid = np.zeros((seeds.shape[0], T), dtype=bool)
    p = seeds.copy()
    alive = (p[:, 0] >= 0) & (p[:, 0] <= width - 1) & (p[:, 1] >= 0) & (p[:, 1] <= height - 1)
    pos[alive, 0] = p[alive]
    valid[:, 0] = alive
    for t, flow in enumerate(flows):
        if flow.shape != (height, width):
            raise InvalidInputError(f"flow {t} has shape {flow.shape}, expected {(height, width)}")
        f, ok = bilinear_sample(flow.vectors, flow.valid, p[:, 0], p[:, 1], renormalize=True)
        p = p + f
        alive &= ok
        alive &= (p[:, 0] >= 0) & (p[:, 0] <= width - 1) & (p[:, 1] >= 0) & (p[:, 1] <= height - 1)
        pos[alive, t + 1] = p[alive]
        valid[:, t + 1] = alive
    return Worldlines(seeds, pos, valid)


def lift_3d(tracks: Worldlines, depths: list[DepthMap], K: CameraIntrinsics):
    """Unproject tracked positions with bilinearly sampled depth.

    Returns ``(positions_3d, valid)``; validity is the track validity further
    restricted to positions with at least one valid weighted depth tap.
    """
    if len(depths) != tracks.horizon:
        raise InvalidInputError(f"need {tracks.horizon} depth maps, got {len(depths)}")
    N, T = tracks.valid.shape
    xyz = np.full((N, T, 3), np.nan)
    valid = tracks.valid.copy()
    for t, depth in enumerate(depths):
        if depth.shape != K.shape:
            raise InvalidInputError(f"depth {t} has shape {depth.shape}, expected {K.shape}")
        uv = np.where(valid[:, t, None], tracks.positions_2d[:, t], 0.0)
        d, ok = bilinear_sample(depth.values, depth.valid, uv[:, 0], uv[:, 1], renormalize=True)
        valid[:, t] &= ok
        if t > 0:
            valid[:, t] &= valid[:, t - 1]
        sel = valid[:, t]
        xyz[sel, t] = unproject_pixels(uv[sel, 0], uv[sel, 1], d[sel], K)
    return xyz, valid


def build_worldlines(seeds, flows_gt, depths_pred, depths_gt, K: CameraIntrinsics) -> Worldlines:
    """Track with ground-truth flow, lift with predicted and ground-truth depth."""
    tracks = track_2d(seeds, flows_gt)
    pred, valid_pred = lift_3d(tracks, depths_pred, K)
    gt, valid_gt = lift_3d(tracks, depths_gt, K)
    valid = _prefix(valid_pred & valid_gt)
    pred[~valid] = np.nan
    gt[~valid] = np.nan
    return Worldlines(tracks.seeds, tracks.positions_2d, valid, pred, gt)


def worldline_metrics(wl: Worldlines, fail_tau: float = DEFAULT_FAIL_TAU) -> WorldlineMetrics:
    """L2 error, drift curve summaries, fail rate and trajectory length.

    Only worldlines with at least one valid frame take part. A worldline fails
    when its deviation exceeds ``fail_tau`` at any valid step or when it breaks
    before the last frame.
    """
    if wl.positions_3d_pred is None or wl.positions_3d_gt is None:
        raise InvalidInputError("worldlines have not been lifted to 3D")
    valid = _prefix(wl.valid)
    used = valid[:, 0]
    if not used.any():
        raise EmptySetError("no worldline has a valid frame")
    valid = valid[used]
    T = valid.shape[1]
    err = np.linalg.norm(wl.positions_3d_pred[used] - wl.positions_3d_gt[used], axis=-1)
    err = np.where(valid, err, 0.0)
    counts = valid.sum(axis=1)

    l2 = float(np.mean(err.sum(axis=1) / counts))
    per_t = valid.sum(axis=0)
    drift = [float(err[:, t].sum() / per_t[t]) if per_t[t] else None for t in range(T)]
    defined = [d for d in drift if d is not None]
    exceeded = np.any(err > fail_tau, axis=1)
    broken = ~valid[:, -1]
    return WorldlineMetrics(
        l2_error=l2,
        mean_drift=float(np.mean(defined)),
        final_drift=drift[-1],
        fail_rate=float(np.mean(exceeded | broken)),
        traj_length_frames=float(np.mean(counts)),
        traj_length_pct=float(100.0 * np.mean(counts) / T),
        drift_curve=tuple(drift),
    )


__all__ = [
    "Worldlines",
    "WorldlineMetrics",
    "sample_seeds",
    "track_2d",
    "lift_3d",
    "build_worldlines",
    "worldline_metrics",
    "DEFAULT_FAIL_TAU",
    "DEFAULT_NUM_SEEDS",
    "DEFAULT_SEED",
]
