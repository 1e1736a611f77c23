"""Desk-scale analytic rigid-body scene generator with exact ground truth."""

from .camera import CameraRig, dolly_rig, fixed_multiview_rig, orbit_rig
from .dynamics import SceneTrace, simulate
from .export import write_sequence
from .render import (
    cast_rays,
    gt_points4d,
    render_correspondence,
    render_flow,
    render_frame,
    sample_surface,
)
from .scene import RigidObject, SceneSpec, randomize_scene, sample_complexity

__all__ = [
    "CameraRig",
    "RigidObject",
    "SceneSpec",
    "SceneTrace",
    "cast_rays",
    "dolly_rig",
    "fixed_multiview_rig",
    "gt_points4d",
    "orbit_rig",
    "randomize_scene",
    "render_correspondence",
    "render_flow",
    "render_frame",
    "sample_complexity",
    "sample_surface",
    "simulate",
    "write_sequence",
]
