"""Pinhole cameras, dense rasters and 4D point sets.

Conventions used throughout the package:

* pixel centers sit at integer coordinates ``(u, v) = (column, row)``;
  ``(0, 0)`` is the center of the top-left pixel;
* camera space is x right, y down, z forward (meters);
* a :class:`CameraPose` maps world points into camera space,
  ``X_cam = R @ X_world + t``.

All containers are immutable: arrays are copied on construction and marked
read-only.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import BehindCameraError, EmptySetError, InvalidInputError

DEFAULT_ALPHA = 0.03  # meters per frame


def _frozen(array, dtype=np.float64):
    out = np.array(array, dtype=dtype, copy=True)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise InvalidInputError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")
        if self.width <= 0 or self.height <= 0:
            raise InvalidInputError(f"raster size must be positive, got {self.width}x{self.height}")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise InvalidInputError(
                f"principal point ({self.cx}, {self.cy}) outside {self.width}x{self.height} raster"
            )

    @classmethod
    def from_fov(cls, width: int, height: int, fov_x_deg: float = 60.0) -> "CameraIntrinsics":
        """Square-pixel camera with the principal point at the raster center."""
        f = 0.5 * width / np.tan(np.deg2rad(fov_x_deg) / 2.0)
        return cls(f, f, (width - 1) / 2.0, (height - 1) / 2.0, int(width), int(height))

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)

    def to_dict(self) -> dict:
        return {
            "fx": float(self.fx),
            "fy": float(self.fy),
            "cx": float(self.cx),
            "cy": float(self.cy),
            "width": int(self.width),
            "height": int(self.height),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CameraIntrinsics":
        return cls(d["fx"], d["fy"], d["cx"], d["cy"], int(d["width"]), int(d["height"]))


@dataclass(frozen=True, eq=False)
class CameraPose:
    """World-to-camera rigid transform."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        R = _frozen(self.rotation)
        t = _frozen(self.translation).reshape(3)
        if R.shape != (3, 3):
            raise InvalidInputError(f"rotation must be 3x3, got {R.shape}")
        if not np.all(np.isfinite(R)) or not np.all(np.isfinite(t)):
            raise InvalidInputError("pose contains non-finite entries")
        if np.max(np.abs(R.T @ R - np.eye(3))) > 1e-9:
            raise InvalidInputError("rotation is not orthonormal within 1e-9")
        if abs(np.linalg.det(R) - 1.0) > 1e-9:
            raise InvalidInputError("rotation determinant is not +1")
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "CameraPose":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def look_at(cls, eye, target, up=(0.0, 1.0, 0.0)) -> "CameraPose":
        """Camera at ``eye`` looking at ``target``; image y points away from ``up``."""
        eye = np.asarray(eye, dtype=np.float64)
        forward = np.asarray(target, dtype=np.float64) - eye
        forward /= np.linalg.norm(forward)
        right = np.cross(forward, np.asarray(up, dtype=np.float64))
        norm = np.linalg.norm(right)
        if norm < 1e-12:
            raise InvalidInputError("look_at: up vector is parallel to the viewing direction")
        right /= norm
        down = np.cross(forward, right)
        R = np.stack([right, down, forward])
        # re-orthonormalize so the 1e-9 invariant survives accumulated rounding
        u, _, vt = np.linalg.svd(R)
        R = u @ vt
        return cls(R, -R @ eye)

    @property
    def center(self) -> np.ndarray:
        """Camera center in world coordinates."""
        return -self.rotation.T @ self.translation

    def inverse(self) -> "CameraPose":
        """The camera-to-world transform, expressed as a pose."""
        return CameraPose(self.rotation.T, -self.rotation.T @ self.translation)

    def to_dict(self) -> dict:
        return {"rotation": self.rotation.tolist(), "translation": self.translation.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "CameraPose":
        return cls(np.asarray(d["rotation"]), np.asarray(d["translation"]))


@dataclass(frozen=True, eq=False)
class DepthMap:
    """Per-pixel camera-space z in meters.

    Pixels that are non-finite or non-positive are never valid, whatever the
    supplied mask says.
    """

    values: np.ndarray
    valid: np.ndarray | None = None

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise InvalidInputError(f"depth must be 2-D, got shape {values.shape}")
        with np.errstate(invalid="ignore"):
            ok = np.isfinite(values) & (values > 0)
        if self.valid is not None:
            mask = np.asarray(self.valid, dtype=bool)
            if mask.shape != values.shape:
                raise InvalidInputError(f"valid mask shape {mask.shape} != depth shape {values.shape}")
            ok &= mask
        object.__setattr__(self, "values", _frozen(values))
        object.__setattr__(self, "valid", _frozen(ok, bool))

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def filled(self, fill=np.nan) -> np.ndarray:
        return np.where(self.valid, self.values, fill)


@dataclass(frozen=True, eq=False)
class FlowField:
    """Pixel displacement from frame t to frame t+1, sampled on frame t's grid."""

    du: np.ndarray
    dv: np.ndarray
    valid: np.ndarray | None = None

    def __post_init__(self):
        du = np.array(self.du, dtype=np.float64)
        dv = np.array(self.dv, dtype=np.float64)
        if du.ndim != 2 or du.shape != dv.shape:
            raise InvalidInputError(f"flow components must be matching 2-D rasters, got {du.shape} and {dv.shape}")
        ok = np.isfinite(du) & np.isfinite(dv)
        if self.valid is not None:
            mask = np.asarray(self.valid, dtype=bool)
            if mask.shape != du.shape:
                raise InvalidInputError(f"valid mask shape {mask.shape} != flow shape {du.shape}")
            ok &= mask
        object.__setattr__(self, "du", _frozen(du))
        object.__setattr__(self, "dv", _frozen(dv))
        object.__setattr__(self, "valid", _frozen(ok, bool))

    @classmethod
    def zeros(cls, height: int, width: int) -> "FlowField":
        return cls(np.zeros((height, width)), np.zeros((height, width)))

    @classmethod
    def constant(cls, height: int, width: int, du: float, dv: float) -> "FlowField":
        return cls(np.full((height, width), float(du)), np.full((height, width), float(dv)))

    @property
    def shape(self) -> tuple[int, int]:
        return self.du.shape

    @property
    def vectors(self) -> np.ndarray:
        return np.stack([self.du, self.dv], axis=-1)

    def magnitude(self) -> np.ndarray:
        return np.hypot(np.where(self.valid, self.du, 0.0), np.where(self.valid, self.dv, 0.0))


@dataclass(frozen=True, eq=False)
class SceneFlowField:
    """Per-pixel 3D displacement in camera space (meters)."""

    dx: np.ndarray
    dy: np.ndarray
    dz: np.ndarray
    valid: np.ndarray | None = None

    def __post_init__(self):
        comps = [np.array(c, dtype=np.float64) for c in (self.dx, self.dy, self.dz)]
        if comps[0].ndim != 2 or any(c.shape != comps[0].shape for c in comps):
            raise InvalidInputError("scene flow components must be matching 2-D rasters")
        ok = np.isfinite(comps[0]) & np.isfinite(comps[1]) & np.isfinite(comps[2])
        if self.valid is not None:
            mask = np.asarray(self.valid, dtype=bool)
            if mask.shape != comps[0].shape:
                raise InvalidInputError("valid mask shape does not match scene flow")
            ok &= mask
        for name, c in zip(("dx", "dy", "dz"), comps):
            object.__setattr__(self, name, _frozen(c))
        object.__setattr__(self, "valid", _frozen(ok, bool))

    @property
    def shape(self) -> tuple[int, int]:
        return self.dx.shape

    @property
    def vectors(self) -> np.ndarray:
        return np.stack([self.dx, self.dy, self.dz], axis=-1)

    def magnitude(self) -> np.ndarray:
        v = np.where(self.valid[..., None], self.vectors, 0.0)
        return np.sqrt(np.sum(v * v, axis=-1))


@dataclass(frozen=True, eq=False)
class RgbFrame:
    """Linear RGB image with channels in [0, 1], shape (H, W, 3)."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.array(self.pixels, dtype=np.float64)
        if px.ndim != 3 or px.shape[2] != 3:
            raise InvalidInputError(f"RGB frame must have shape (H, W, 3), got {px.shape}")
        if not np.all(np.isfinite(px)) or px.min(initial=0.0) < 0.0 or px.max(initial=0.0) > 1.0:
            raise InvalidInputError("RGB values must lie within [0, 1]")
        object.__setattr__(self, "pixels", _frozen(px))

    @property
    def shape(self) -> tuple[int, int]:
        return self.pixels.shape[:2]

    @property
    def r(self) -> np.ndarray:
        return self.pixels[..., 0]

    @property
    def g(self) -> np.ndarray:
        return self.pixels[..., 1]

    @property
    def b(self) -> np.ndarray:
        return self.pixels[..., 2]

    def luma(self) -> np.ndarray:
        # ITU-R BT.601
        return 0.299 * self.r + 0.587 * self.g + 0.114 * self.b


class Point4D(NamedTuple):
    x: float
    y: float
    z: float
    tau: float


@dataclass(frozen=True, eq=False)
class PointSet4D:
    """Points ``(x, y, z, tau)`` in camera space with a temporal weight.

    ``alpha`` converts one frame of time difference into meters.
    """

    points: np.ndarray
    alpha: float = DEFAULT_ALPHA

    def __post_init__(self):
        pts = np.array(self.points, dtype=np.float64).reshape(-1, 4)
        if not self.alpha > 0:
            raise InvalidInputError(f"alpha must be positive, got {self.alpha}")
        if not np.all(np.isfinite(pts)):
            raise InvalidInputError("4D points must be finite")
        object.__setattr__(self, "points", _frozen(pts))
        object.__setattr__(self, "alpha", float(self.alpha))

    def __len__(self) -> int:
        return self.points.shape[0]

    def __iter__(self):
        return (Point4D(*map(float, p)) for p in self.points)

    @property
    def xyz(self) -> np.ndarray:
        return self.points[:, :3]

    @property
    def tau(self) -> np.ndarray:
        return self.points[:, 3]

    def embedded(self, alpha: float | None = None) -> np.ndarray:
        """Coordinates ``(x, y, z, alpha * tau)`` where 4D distance is Euclidean."""
        a = self.alpha if alpha is None else alpha
        out = self.points.copy()
        out[:, 3] *= a
        return out

    @classmethod
    def concat(cls, sets, alpha: float | None = None) -> "PointSet4D":
        sets = list(sets)
        if alpha is None:
            alpha = sets[0].alpha if sets else DEFAULT_ALPHA
        if not sets:
            return cls(np.empty((0, 4)), alpha)
        return cls(np.concatenate([s.points for s in sets]), alpha)

    def subsample(self, budget: int, seed: int = 0) -> "PointSet4D":
        """Uniform subsample without replacement; order of kept points is preserved."""
        if budget is None or len(self) <= budget:
            return self
        rng = np.random.default_rng(seed)
        idx = np.sort(rng.choice(len(self), size=budget, replace=False))
        return PointSet4D(self.points[idx], self.alpha)


def unproject(pixel, depth, K: CameraIntrinsics) -> np.ndarray:
    """Back-project pixel ``(u, v)`` at ``depth`` meters to camera space.

    Returns ``depth * K^-1 @ (u, v, 1)``; the z component equals ``depth``.
    """
    u, v = float(pixel[0]), float(pixel[1])
    d = float(depth)
    if not np.isfinite(d) or d <= 0:
        raise InvalidInputError(f"depth must be finite and positive, got {depth}")
    if not (0 <= u <= K.width - 1 and 0 <= v <= K.height - 1):
        raise InvalidInputError(f"pixel ({u}, {v}) outside {K.width}x{K.height} raster")
    return np.array([d * (u - K.cx) / K.fx, d * (v - K.cy) / K.fy, d])


def unproject_pixels(u, v, depth, K: CameraIntrinsics) -> np.ndarray:
    """Vectorized :func:`unproject` without bounds checks; returns ``(..., 3)``."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    d = np.asarray(depth, dtype=np.float64)
    return np.stack([d * (u - K.cx) / K.fx, d * (v - K.cy) / K.fy, d * np.ones_like(u)], axis=-1)


def project(point, K: CameraIntrinsics) -> tuple[float, float, float]:
    """Project a camera-space point; returns ``(u, v, depth)``."""
    x, y, z = (float(c) for c in point)
    if not z > 0:
        raise BehindCameraError(f"point has non-positive depth z={z}")
    return (K.fx * x / z + K.cx, K.fy * y / z + K.cy, z)


def project_points(points, K: CameraIntrinsics) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized projection of ``(..., 3)`` points; returns ``(uv, z)``.

    Points with ``z <= 0`` get NaN pixel coordinates.
    """
    p = np.asarray(points, dtype=np.float64)
    z = p[..., 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        safe = np.where(z > 0, z, np.nan)
        uv = np.stack([K.fx * p[..., 0] / safe + K.cx, K.fy * p[..., 1] / safe + K.cy], axis=-1)
    return uv, z


def world_to_camera(points_world, pose: CameraPose) -> np.ndarray:
    p = np.asarray(points_world, dtype=np.float64)
    return p @ pose.rotation.T + pose.translation


def camera_to_world(points_cam, pose: CameraPose) -> np.ndarray:
    p = np.asarray(points_cam, dtype=np.float64)
    return (p - pose.translation) @ pose.rotation


def pixel_grid(height: int, width: int) -> tuple[np.ndarray, np.ndarray]:
    """``(u, v)`` coordinate rasters of shape (H, W)."""
    v, u = np.mgrid[0:height, 0:width]
    return u.astype(np.float64), v.astype(np.float64)


def depth_to_points4d(
    depth: DepthMap,
    K: CameraIntrinsics,
    tau: int,
    select=None,
    alpha: float = DEFAULT_ALPHA,
) -> PointSet4D:
    """One 4D point per valid (and selected) pixel, in row-major pixel order."""
    if depth.shape != K.shape:
        raise InvalidInputError(f"depth shape {depth.shape} does not match intrinsics {K.shape}")
    keep = depth.valid
    if select is not None:
        select = np.asarray(select, dtype=bool)
        if select.shape != depth.shape:
            raise InvalidInputError(f"selection mask shape {select.shape} != depth shape {depth.shape}")
        keep = keep & select
    rows, cols = np.nonzero(keep)
    if rows.size == 0:
        raise EmptySetError(f"no valid selected pixels at tau={tau}")
    xyz = unproject_pixels(cols, rows, depth.values[rows, cols], K)
    pts = np.concatenate([xyz, np.full((rows.size, 1), float(tau))], axis=1)
    return PointSet4D(pts, alpha)


def moving_mask(flow, delta: float) -> np.ndarray:
    """Pixels whose motion magnitude strictly exceeds ``delta``.

    Works for both :class:`FlowField` (pixels) and :class:`SceneFlowField`
    (meters); invalid flow is never moving.
    """
    if delta < 0:
        raise InvalidInputError(f"delta must be non-negative, got {delta}")
    return (flow.magnitude() > delta) & flow.valid


__all__ = [
    "CameraIntrinsics",
    "CameraPose",
    "DepthMap",
    "FlowField",
    "SceneFlowField",
    "RgbFrame",
    "Point4D",
    "PointSet4D",
    "DEFAULT_ALPHA",
    "unproject",
    "unproject_pixels",
    "project",
    "project_points",
    "world_to_camera",
    "camera_to_world",
    "pixel_grid",
    "depth_to_points4d",
    "moving_mask",
]
