"""Spatio-temporal (4D) Chamfer distance and the matching reward.

Points ``(x, y, z, tau)`` are compared with

    d(p, q) = |xyz_p - xyz_q|^2 + alpha^2 (tau_p - tau_q)^2

which is the squared Euclidean distance between the embeddings
``(x, y, z, alpha * tau)``. The indexed path builds a k-d tree over that
embedding; the brute path evaluates every pair.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree
from scipy.spatial.distance import cdist

from .errors import EmptySetError, InvalidInputError
from .geometry import DEFAULT_ALPHA, PointSet4D

_BRUTE_CHUNK = 1024


@dataclass(frozen=True)
class ChamferConfig:
    alpha: float = DEFAULT_ALPHA
    acceleration: str = "indexed"

    def __post_init__(self):
        if not self.alpha > 0:
            raise InvalidInputError(f"alpha must be positive, got {self.alpha}")
        if self.acceleration not in ("brute", "indexed"):
            raise InvalidInputError(f"acceleration must be 'brute' or 'indexed', got {self.acceleration!r}")


def dist4d(p, q, alpha: float) -> float:
    """Squared 4D distance between two ``(x, y, z, tau)`` points (m^2)."""
    if not alpha > 0:
        raise InvalidInputError(f"alpha must be positive, got {alpha}")
    dx, dy, dz = p[0] - q[0], p[1] - q[1], p[2] - q[2]
    dt = p[3] - q[3]
    return float(dx * dx + dy * dy + dz * dz + alpha * alpha * dt * dt)


def _embed(points: np.ndarray, alpha: float) -> np.ndarray:
    out = np.array(points, dtype=np.float64).reshape(-1, 4)
    out[:, 3] *= alpha
    return out


def _nn_brute(src: np.ndarray, dst: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    sq = np.empty(src.shape[0])
    idx = np.empty(src.shape[0], dtype=np.int64)
    for start in range(0, src.shape[0], _BRUTE_CHUNK):
        block = cdist(src[start:start + _BRUTE_CHUNK], dst, "sqeuclidean")
        # argmin returns the first minimum, i.e. the lowest index on ties
        j = np.argmin(block, axis=1)
        idx[start:start + _BRUTE_CHUNK] = j
        sq[start:start + _BRUTE_CHUNK] = block[np.arange(block.shape[0]), j]
    return sq, idx


def _nn_indexed(src: np.ndarray, dst: np.ndarray, tree: cKDTree | None = None) -> tuple[np.ndarray, np.ndarray]:
    tree = cKDTree(dst) if tree is None else tree
    k = min(4, dst.shape[0])
    _, cand = tree.query(src, k=k)
    cand = cand.reshape(src.shape[0], k)
    # Recompute squared distances exactly from coordinate differences so the
    # result does not carry the sqrt/square round trip of the tree query.
    diff = src[:, None, :] - dst[cand]
    sq = np.einsum("nkd,nkd->nk", diff, diff)
    # lowest index among exact ties
    order = np.lexsort((cand, sq), axis=-1)
    first = order[:, 0]
    rows = np.arange(src.shape[0])
    return sq[rows, first], cand[rows, first]


def nearest_neighbors(src: PointSet4D, dst: PointSet4D, cfg: ChamferConfig = ChamferConfig()):
    """For each point of ``src``: squared 4D distance to and index of its nearest point in ``dst``.

    Ties are broken toward the lowest index in ``dst``.
    """
    if len(src) == 0 or len(dst) == 0:
        raise EmptySetError("nearest-neighbor search needs non-empty point sets")
    a = _embed(src.points, cfg.alpha)
    b = _embed(dst.points, cfg.alpha)
    if cfg.acceleration == "brute":
        return _nn_brute(a, b)
    return _nn_indexed(a, b)


def chamfer4d(gen: PointSet4D, gt: PointSet4D, cfg: ChamferConfig = ChamferConfig()) -> float:
    """Symmetric 4D Chamfer distance: mean nearest-neighbor d(p, q) in both directions, summed."""
    if len(gen) == 0 or len(gt) == 0:
        raise EmptySetError(f"chamfer4d needs non-empty sets (got {len(gen)} and {len(gt)} points)")
    a = _embed(gen.points, cfg.alpha)
    b = _embed(gt.points, cfg.alpha)
    if cfg.acceleration == "brute":
        d_ab, _ = _nn_brute(a, b)
        d_ba, _ = _nn_brute(b, a)
    else:
        d_ab, _ = _nn_indexed(a, b)
        d_ba, _ = _nn_indexed(b, a)
    return float(np.mean(d_ab) + np.mean(d_ba))


def reward(gen: PointSet4D, gt: PointSet4D, cfg: ChamferConfig = ChamferConfig()) -> float:
    """Negative 4D Chamfer distance; 0 is the best attainable value."""
    return -chamfer4d(gen, gt, cfg)


__all__ = ["ChamferConfig", "dist4d", "chamfer4d", "reward", "nearest_neighbors"]
