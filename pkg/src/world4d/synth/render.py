"""Analytic ray-cast renderer for simulated scenes.

Every quantity is computed in closed form from the simulated trace: depth is
the camera-space z of the nearest ray hit, flow follows each visible surface
point rigidly to the next frame, and occlusion is decided by casting a ray
through the point's new sub-pixel position.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..geometry import (
    CameraIntrinsics,
    CameraPose,
    DepthMap,
    FlowField,
    PointSet4D,
    RgbFrame,
    SceneFlowField,
    DEFAULT_ALPHA,
    pixel_grid,
    project_points,
    world_to_camera,
)
from ..warp import OcclusionMask
from .camera import CameraRig
from .dynamics import SceneTrace

RAY_EPS = 1e-9
OCCLUSION_TOL = 1e-4          # meters
AMBIENT = 0.3
SKY_COLOR = (0.62, 0.74, 0.90)
GROUND_TILE = 0.25            # meters
GROUND_ALBEDO = (0.45, 0.70)


@dataclass
class RayHits:
    depth: np.ndarray        # camera z; NaN on miss
    ids: np.ndarray          # 0 ground or miss, k + 1 for object k
    hit: np.ndarray
    points: np.ndarray       # world-space hit points
    normals: np.ndarray      # world-space unit normals


@dataclass
class RenderedFrame:
    rgb: RgbFrame
    depth: DepthMap
    ids: np.ndarray


def _ray_dirs(pose: CameraPose, K: CameraIntrinsics, u, v):
    d_cam = np.stack([(u - K.cx) / K.fx, (v - K.cy) / K.fy, np.ones_like(u)], axis=-1)
    # direction with camera z = 1 so the ray parameter equals camera depth
    return d_cam @ pose.rotation


def _sphere_hit(origin, dirs, center, radius):
    oc = origin - center
    a = np.einsum("...k,...k->...", dirs, dirs)
    b = dirs @ oc
    c = oc @ oc - radius * radius
    disc = b * b - a * c
    hit = disc >= 0
    sq = np.sqrt(np.where(hit, disc, 0.0))
    q = -(b + np.copysign(sq, b))
    with np.errstate(divide="ignore", invalid="ignore"):
        s1 = q / a
        s2 = np.where(q != 0, c / q, np.inf)
    near = np.minimum(s1, s2)
    far = np.maximum(s1, s2)
    s = np.where(near > RAY_EPS, near, far)
    return np.where(hit & (s > RAY_EPS), s, np.inf)


def _box_hit(origin, dirs, center, half):
    safe = np.where(dirs == 0, 1e-300, dirs)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        t1 = (center - half - origin) / safe
        t2 = (center + half - origin) / safe
    tmin = np.max(np.minimum(t1, t2), axis=-1)
    tmax = np.min(np.maximum(t1, t2), axis=-1)
    s = np.where(tmin > RAY_EPS, tmin, tmax)
    ok = (tmax >= tmin) & (s > RAY_EPS)
    return np.where(ok, s, np.inf)


def _box_normal(points, center, half):
    rel = (points - center) / half
    axis = np.argmax(np.abs(rel), axis=-1)
    n = np.zeros_like(points)
    idx = np.indices(axis.shape)
    n[(*idx, axis)] = np.sign(np.take_along_axis(rel, axis[..., None], axis=-1)[..., 0])
    return n


def cast_rays(trace: SceneTrace, frame: int, pose: CameraPose, K: CameraIntrinsics, u, v) -> RayHits:
    """Nearest intersection of pixel rays ``(u, v)`` with the scene at ``frame``."""
    spec = trace.spec
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    origin = pose.center
    dirs = _ray_dirs(pose, K, u, v)
    best = np.full(u.shape, np.inf)
    ids = np.zeros(u.shape, dtype=np.int32)

    dy = dirs[..., 1]
    with np.errstate(divide="ignore", invalid="ignore"):
        s_ground = (spec.ground_height - origin[1]) / dy
    s_ground = np.where(np.isfinite(s_ground) & (s_ground > RAY_EPS), s_ground, np.inf)
    best = np.minimum(best, s_ground)

    centers = trace.positions[frame]
    for k, obj in enumerate(spec.objects):
        if obj.shape == "sphere":
            s = _sphere_hit(origin, dirs, centers[k], obj.size)
        else:
            s = _box_hit(origin, dirs, centers[k], obj.half_extents)
        closer = s < best
        best = np.where(closer, s, best)
        ids = np.where(closer, k + 1, ids)

    hit = np.isfinite(best)
    s = np.where(hit, best, 0.0)
    points = origin + dirs * s[..., None]
    normals = np.zeros_like(points)
    normals[..., 1] = 1.0
    for k, obj in enumerate(spec.objects):
        sel = ids == k + 1
        if not sel.any():
            continue
        if obj.shape == "sphere":
            normals[sel] = (points[sel] - centers[k]) / obj.size
        else:
            normals[sel] = _box_normal(points[sel], centers[k], obj.half_extents)
    return RayHits(np.where(hit, best, np.nan), ids, hit, points, normals)


def _shade(trace: SceneTrace, hits: RayHits) -> np.ndarray:
    spec = trace.spec
    light = np.asarray(spec.light_direction)
    lambert = np.clip(hits.normals @ light, 0.0, None)
    intensity = AMBIENT + (1.0 - AMBIENT) * lambert
    albedo = np.empty(hits.ids.shape + (3,))
    checker = (np.floor(hits.points[..., 0] / GROUND_TILE) + np.floor(hits.points[..., 2] / GROUND_TILE)) % 2
    grey = np.where(checker == 0, GROUND_ALBEDO[0], GROUND_ALBEDO[1])
    albedo[:] = grey[..., None]
    for k, obj in enumerate(spec.objects):
        albedo[hits.ids == k + 1] = obj.albedo
    rgb = albedo * intensity[..., None]
    rgb[~hits.hit] = SKY_COLOR
    return np.clip(rgb, 0.0, 1.0)


def render_frame(trace: SceneTrace, t: int, rig: CameraRig, view: int = 0) -> RenderedFrame:
    """RGB, depth and front-most object id raster of frame ``t`` seen from ``view``."""
    K = rig.intrinsics
    u, v = pixel_grid(K.height, K.width)
    hits = cast_rays(trace, t, rig.pose(view, t), K, u, v)
    return RenderedFrame(RgbFrame(_shade(trace, hits)), DepthMap(hits.depth, hits.hit), hits.ids)


@dataclass
class RenderedMotion:
    flow: FlowField
    scene_flow: SceneFlowField
    occlusion: OcclusionMask


def render_correspondence(trace: SceneTrace, t_from: int, t_to: int, rig: CameraRig, view: int = 0) -> RenderedMotion:
    """Flow, scene flow and occlusion from frame ``t_from`` to ``t_to`` on ``t_from``'s grid."""
    K = rig.intrinsics
    u, v = pixel_grid(K.height, K.width)
    pose_a = rig.pose(view, t_from)
    pose_b = rig.pose(view, t_to)
    hits = cast_rays(trace, t_from, pose_a, K, u, v)

    shift = np.zeros((len(trace.spec.objects) + 1, 3))
    shift[1:] = trace.positions[t_to] - trace.positions[t_from]
    moved = hits.points + shift[hits.ids]

    xa = world_to_camera(hits.points, pose_a)
    xb = world_to_camera(moved, pose_b)
    uv_a, _ = project_points(xa, K)
    uv_b, z_b = project_points(xb, K)
    valid = hits.hit & (z_b > 0)
    # difference of projections, so a point that does not move has exactly zero flow
    du = uv_b[..., 0] - uv_a[..., 0]
    dv = uv_b[..., 1] - uv_a[..., 1]

    ub, vb = u + du, v + dv
    inside = (ub >= 0) & (ub <= K.width - 1) & (vb >= 0) & (vb <= K.height - 1)
    check = valid & inside
    occluded = ~check
    if check.any():
        again = cast_rays(trace, t_to, pose_b, K, ub[check], vb[check])
        blocked = again.hit & (again.depth < z_b[check] - OCCLUSION_TOL)
        occluded[check] = blocked
    occluded &= hits.hit

    flow = FlowField(np.where(valid, du, np.nan), np.where(valid, dv, np.nan), valid)
    sf = xb - xa
    scene_flow = SceneFlowField(*(np.where(valid, sf[..., c], np.nan) for c in range(3)), valid=valid)
    return RenderedMotion(flow, scene_flow, OcclusionMask(occluded, "renderer"))


def render_flow(trace: SceneTrace, t: int, rig: CameraRig, view: int = 0) -> RenderedMotion:
    """Forward motion ``t -> t+1``."""
    if not 0 <= t <= trace.num_frames - 2:
        raise ValueError(f"flow needs 0 <= t <= T-2, got t={t} with T={trace.num_frames}")
    return render_correspondence(trace, t, t + 1, rig, view)


def sample_surface(obj, n: int, rng: np.random.Generator) -> np.ndarray:
    """``n`` points uniformly distributed over the object's surface, relative to its center."""
    if obj.shape == "sphere":
        d = rng.normal(size=(n, 3))
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        return d * obj.size
    h = obj.half_extents
    areas = np.array([h[1] * h[2], h[0] * h[2], h[0] * h[1]])
    axis = rng.choice(3, size=n, p=areas / areas.sum())
    pts = rng.uniform(-1.0, 1.0, size=(n, 3)) * h
    side = rng.choice([-1.0, 1.0], size=n)
    pts[np.arange(n), axis] = side * h[axis]
    return pts


def gt_points4d(trace: SceneTrace, rig: CameraRig, view: int = 0, samples_per_object: int = 2000,
                moving_only: bool = True, delta: float = 0.01, *, visible_only: bool = False,
                alpha: float = DEFAULT_ALPHA, seed: int | None = None) -> PointSet4D:
    """Analytic surface samples of every object at every frame, in camera space.

    With ``moving_only`` an object contributes at frame t only when its
    displacement to frame t+1 exceeds ``delta`` meters (so the last frame
    never contributes). With ``visible_only`` samples hidden from the camera
    or outside the raster are dropped.
    """
    if samples_per_object <= 0:
        raise ValueError("samples_per_object must be positive")
    rng = np.random.default_rng(trace.spec.rng_seed if seed is None else seed)
    K = rig.intrinsics
    local = [sample_surface(obj, samples_per_object, rng) for obj in trace.spec.objects]
    chunks = []
    T = trace.num_frames
    for t in range(T):
        pose = rig.pose(view, t)
        for k in range(len(local)):
            if moving_only:
                if t == T - 1:
                    continue
                disp = np.linalg.norm(trace.positions[t + 1, k] - trace.positions[t, k])
                if not disp > delta:
                    continue
            cam = world_to_camera(local[k] + trace.positions[t, k], pose)
            if visible_only:
                uv, z = project_points(cam, K)
                ok = (z > 0) & (uv[:, 0] >= 0) & (uv[:, 0] <= K.width - 1) & (uv[:, 1] >= 0) & (uv[:, 1] <= K.height - 1)
                if ok.any():
                    hits = cast_rays(trace, t, pose, K, uv[ok, 0], uv[ok, 1])
                    seen = (hits.ids == k + 1) & (np.abs(hits.depth - z[ok]) <= 1e-6 * np.maximum(1.0, z[ok]))
                    ok[ok] = seen
                cam = cam[ok]
            if cam.shape[0]:
                chunks.append(np.concatenate([cam, np.full((cam.shape[0], 1), float(t))], axis=1))
    pts = np.concatenate(chunks) if chunks else np.empty((0, 4))
    return PointSet4D(pts, alpha)


__all__ = [
    "RayHits",
    "RenderedFrame",
    "RenderedMotion",
    "cast_rays",
    "render_frame",
    "render_flow",
    "render_correspondence",
    "sample_surface",
    "gt_points4d",
]
