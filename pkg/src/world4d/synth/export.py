"""Write simulated scenes to disk as manifest-described sequences."""

from __future__ import annotations

from pathlib import Path

from .. import __version__
from .. import dataset_io as dio
from ..geometry import DEFAULT_ALPHA
from .camera import CameraRig
from .dynamics import FRICTION_MODEL, SceneTrace
from .render import gt_points4d, render_correspondence, render_frame

GT_SAMPLES_PER_OBJECT = 2000
GT_MOVING_DELTA = 0.01   # meters per frame


def write_sequence(trace: SceneTrace, rig: CameraRig, view: int, out_dir, *,
                   samples_per_object: int = GT_SAMPLES_PER_OBJECT, moving_delta: float = GT_MOVING_DELTA,
                   alpha: float = DEFAULT_ALPHA, extra_provenance: dict | None = None) -> Path:
    """Render every modality of one view into ``out_dir`` and return the manifest path.

    ``flow[t]`` maps frame t to t+1 on frame t's grid; ``flow_bwd[t]`` maps
    frame t+1 back to t on frame t+1's grid. ``occlusion[t]`` belongs to
    ``flow[t]``.
    """
    out = Path(out_dir)
    T = trace.num_frames
    if rig.num_frames != T:
        raise ValueError(f"rig has {rig.num_frames} frames, trace has {T}")
    patterns = dict(dio.DEFAULT_PATTERNS)
    for name, pattern in patterns.items():
        (out / pattern).parent.mkdir(parents=True, exist_ok=True)

    def path(name, t=0):
        return out / patterns[name].format(t=t)

    for t in range(T):
        frame = render_frame(trace, t, rig, view)
        dio.write_rgb(path("rgb", t), frame.rgb)
        dio.write_depth(path("depth", t), frame.depth)
        dio.write_ids(path("ids", t), frame.ids)
    for t in range(T - 1):
        fwd = render_correspondence(trace, t, t + 1, rig, view)
        bwd = render_correspondence(trace, t + 1, t, rig, view)
        dio.write_flow(path("flow", t), fwd.flow)
        dio.write_flow(path("flow_bwd", t), bwd.flow)
        dio.write_scene_flow(path("scene_flow", t), fwd.scene_flow)
        dio.write_occlusion(path("occlusion", t), fwd.occlusion)
    points = gt_points4d(trace, rig, view, samples_per_object, moving_only=True, delta=moving_delta,
                         visible_only=True, alpha=alpha)
    dio.write_points4d(path("points4d"), points)

    modalities = {name: {"pattern": patterns[name], "count": dio.expected_count(name, T)} for name in patterns}
    provenance = {
        "generator": "world4d.synth",
        "version": __version__,
        "scene": trace.spec.to_dict(),
        "rig": {"mode": rig.mode, "view": view, "num_views": rig.num_views, **rig.params},
        "friction_model": FRICTION_MODEL,
        "points4d": {"samples_per_object": samples_per_object, "moving_delta_m": moving_delta,
                     "visible_only": True, "alpha": alpha},
        "notes": list(trace.notes),
    }
    if extra_provenance:
        provenance.update(extra_provenance)
    manifest = dio.SequenceManifest(
        frame_count=T,
        fps=float(trace.spec.fps),
        intrinsics=rig.intrinsics,
        extrinsics=[rig.pose(view, t) for t in range(T)],
        modalities=modalities,
        provenance=provenance,
        units=dict(dio.UNITS),
    )
    manifest_path = out / "manifest.json"
    dio.write_manifest(manifest_path, manifest)
    return manifest_path


__all__ = ["write_sequence"]
