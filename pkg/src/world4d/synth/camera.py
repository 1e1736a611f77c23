"""Camera rigs: fixed multi-view setups and continuous trajectories (orbit, dolly)."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import InvalidInputError
from ..geometry import CameraIntrinsics, CameraPose

DEFAULT_TARGET = (0.0, 0.25, 0.0)
DEFAULT_RADIUS = 3.0
DEFAULT_HEIGHT = 1.3


@dataclass(frozen=True, eq=False)
class CameraRig:
    """Per-view, per-frame world-to-camera poses sharing one set of intrinsics."""

    mode: str
    intrinsics: CameraIntrinsics
    poses: tuple                      # poses[view][frame]
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.mode not in ("fixed_multiview", "trajectory"):
            raise InvalidInputError(f"unknown rig mode {self.mode!r}")
        poses = tuple(tuple(view) for view in self.poses)
        if not poses or not poses[0]:
            raise InvalidInputError("camera rig needs at least one view and one frame")
        if len({len(v) for v in poses}) != 1:
            raise InvalidInputError("all views must have the same number of frames")
        object.__setattr__(self, "poses", poses)

    @property
    def num_views(self) -> int:
        return len(self.poses)

    @property
    def num_frames(self) -> int:
        return len(self.poses[0])

    def pose(self, view: int, t: int) -> CameraPose:
        return self.poses[view][t]


def _orbit_eye(azimuth, radius, height, target):
    return np.array([target[0] + radius * np.sin(azimuth), height, target[2] + radius * np.cos(azimuth)])


def fixed_multiview_rig(K: CameraIntrinsics, num_frames: int, num_views: int = 1, *,
                        radius: float = DEFAULT_RADIUS, height: float = DEFAULT_HEIGHT,
                        target=DEFAULT_TARGET, spread_deg: float = 90.0) -> CameraRig:
    """Static cameras spaced evenly over an arc of ``spread_deg`` centred on +z."""
    if num_views < 1:
        raise InvalidInputError("need at least one view")
    if num_views == 1:
        azimuths = [0.0]
    else:
        half = np.deg2rad(spread_deg) / 2.0
        azimuths = np.linspace(-half, half, num_views)
    views = []
    for az in azimuths:
        pose = CameraPose.look_at(_orbit_eye(az, radius, height, target), target)
        views.append([pose] * num_frames)
    return CameraRig("fixed_multiview", K, views,
                     {"radius": radius, "height": height, "target": list(target), "spread_deg": spread_deg})


def orbit_rig(K: CameraIntrinsics, num_frames: int, fps: float, *, angular_rate: float = 0.4,
              radius: float = DEFAULT_RADIUS, height: float = DEFAULT_HEIGHT, target=DEFAULT_TARGET,
              num_views: int = 1, spread_deg: float = 90.0) -> CameraRig:
    """Cameras circling ``target`` at ``angular_rate`` rad/s, always looking at it."""
    starts = [0.0] if num_views == 1 else np.linspace(-np.deg2rad(spread_deg) / 2, np.deg2rad(spread_deg) / 2, num_views)
    views = []
    for az0 in starts:
        views.append([
            CameraPose.look_at(_orbit_eye(az0 + angular_rate * k / fps, radius, height, target), target)
            for k in range(num_frames)
        ])
    return CameraRig("trajectory", K, views, {
        "family": "orbit", "angular_rate": angular_rate, "radius": radius, "height": height,
        "target": list(target), "spread_deg": spread_deg,
    })


def dolly_rig(K: CameraIntrinsics, num_frames: int, fps: float, *, velocity=(0.0, 0.0, 0.3),
              eye=None, target=DEFAULT_TARGET) -> CameraRig:
    """A camera translating at constant world ``velocity`` (m/s) with fixed orientation."""
    eye = _orbit_eye(0.0, DEFAULT_RADIUS, DEFAULT_HEIGHT, target) if eye is None else np.asarray(eye, float)
    base = CameraPose.look_at(eye, target)
    vel = np.asarray(velocity, dtype=np.float64)
    poses = []
    for k in range(num_frames):
        center = eye + vel * (k / fps)
        poses.append(CameraPose(base.rotation, -base.rotation @ center))
    return CameraRig("trajectory", K, [poses], {
        "family": "dolly", "velocity": vel.tolist(), "eye": eye.tolist(), "target": list(target),
    })


__all__ = ["CameraRig", "fixed_multiview_rig", "orbit_rig", "dolly_rig"]
