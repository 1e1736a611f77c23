"""Synthetic rigid-body RGB-D-flow datasets and 4D world-consistency metrics."""

__version__ = "0.1.0"

from .errors import (
    BehindCameraError,
    EmptySetError,
    FormatError,
    InvalidInputError,
    ValidationError,
    World4DError,
)
from .geometry import (
    CameraIntrinsics,
    CameraPose,
    DepthMap,
    FlowField,
    Point4D,
    PointSet4D,
    RgbFrame,
    SceneFlowField,
    camera_to_world,
    depth_to_points4d,
    moving_mask,
    project,
    unproject,
    world_to_camera,
)
from .chamfer import ChamferConfig, chamfer4d, dist4d, reward

__all__ = [
    "__version__",
    "BehindCameraError",
    "EmptySetError",
    "FormatError",
    "InvalidInputError",
    "ValidationError",
    "World4DError",
    "CameraIntrinsics",
    "CameraPose",
    "DepthMap",
    "FlowField",
    "Point4D",
    "PointSet4D",
    "RgbFrame",
    "SceneFlowField",
    "camera_to_world",
    "depth_to_points4d",
    "moving_mask",
    "project",
    "unproject",
    "world_to_camera",
    "ChamferConfig",
    "chamfer4d",
    "dist4d",
    "reward",
]
