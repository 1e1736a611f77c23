"""Exit criteria. Each test prints one PASS/FAIL line (also collected in the
terminal summary) and fails when its criterion is not met."""

import json
import shutil
import time
from pathlib import Path

import numpy as np
import pytest

from world4d.chamfer import ChamferConfig, chamfer4d, reward
from world4d.cli import main
from world4d.dataset_io import (
    dump_manifest,
    read_depth_raw,
    read_flow,
    read_manifest,
    read_points4d,
    read_rgb,
    write_depth,
    write_depth_raw,
    write_flow,
    write_manifest,
    write_points4d,
)
from world4d.geometry import (
    CameraIntrinsics,
    DepthMap,
    FlowField,
    PointSet4D,
    camera_to_world,
    depth_to_points4d,
    pixel_grid,
    project_points,
    unproject_pixels,
    world_to_camera,
)
from world4d.synth import (
    RigidObject,
    SceneSpec,
    dolly_rig,
    fixed_multiview_rig,
    gt_points4d,
    orbit_rig,
    randomize_scene,
    render_flow,
    render_frame,
    simulate,
)
from world4d.synth.scene import (
    COMPLEXITY_CLASSES,
    COMPLEXITY_WEIGHTS,
    DENSITY_RANGE,
    FRICTION_RANGE,
    GRAVITY_RANGE,
    LIGHT_LUX_RANGE,
    PERTURBATION_RANGE,
    RESTITUTION_RANGE,
    SCALE_RANGE,
)
from world4d.warp import depth_warp_error, mean_over_pairs
from world4d.worldline import build_worldlines, sample_seeds, worldline_metrics

pytestmark = pytest.mark.acceptance

DATA = Path(__file__).parent / "data"


def _random_cloud(rng, n, frames=24):
    kind = rng.integers(3)
    if kind == 0:
        xyz = rng.normal(size=(n, 3))
    elif kind == 1:
        xyz = rng.uniform(-2, 2, size=(n, 3))
    else:
        centers = rng.normal(scale=2, size=(5, 3))
        xyz = centers[rng.integers(5, size=n)] + rng.normal(scale=0.05, size=(n, 3))
    tau = rng.integers(0, frames, size=n).astype(float)
    return np.concatenate([xyz, tau[:, None]], axis=1)


def _rig(kind, K, T, fps):
    if kind == "fixed":
        return fixed_multiview_rig(K, T)
    if kind == "orbit":
        return orbit_rig(K, T, fps)
    return dolly_rig(K, T, fps)


# ---------------------------------------------------------------- 1

def test_c01_chamfer_oracle_equivalence(criterion):
    rng = np.random.default_rng(2024)
    pairs = []
    for _ in range(1000):
        n, m = rng.integers(1, 5001, size=2)
        alpha = float(rng.uniform(0.005, 0.5))
        pairs.append((PointSet4D(_random_cloud(rng, n), alpha), PointSet4D(_random_cloud(rng, m), alpha)))
    start = time.perf_counter()
    indexed = [chamfer4d(a, b, ChamferConfig(a.alpha)) for a, b in pairs]
    elapsed = time.perf_counter() - start
    brute = [chamfer4d(a, b, ChamferConfig(a.alpha, "brute")) for a, b in pairs]
    rel = max(abs(x - y) / abs(y) if y else abs(x) for x, y in zip(indexed, brute))
    ok = criterion(1, "chamfer indexed vs brute", rel <= 1e-9 and elapsed < 60.0,
                   f"max rel err {rel:.2e} (<= 1e-9), indexed runtime {elapsed:.1f} s (< 60 s) over 1000 pairs")
    assert ok


# ---------------------------------------------------------------- 2

def test_c02_chamfer_axioms(criterion):
    rng = np.random.default_rng(7)
    worst_sym = worst_hom = 0.0
    identity_ok = nonneg_ok = True
    for _ in range(200):
        alpha = float(rng.uniform(0.005, 1.0))
        a = _random_cloud(rng, int(rng.integers(1, 400)))
        b = _random_cloud(rng, int(rng.integers(1, 400)))
        A, B = PointSet4D(a, alpha), PointSet4D(b, alpha)
        cfg = ChamferConfig(alpha)
        ab, ba = chamfer4d(A, B, cfg), chamfer4d(B, A, cfg)
        worst_sym = max(worst_sym, abs(ab - ba) / max(ab, 1e-300))
        identity_ok &= chamfer4d(A, A, cfg) == 0.0
        nonneg_ok &= ab >= 0.0
        s = float(rng.uniform(0.1, 10.0))
        As = PointSet4D(np.concatenate([a[:, :3] * s, a[:, 3:]], axis=1), alpha * s)
        Bs = PointSet4D(np.concatenate([b[:, :3] * s, b[:, 3:]], axis=1), alpha * s)
        scaled = chamfer4d(As, Bs, ChamferConfig(alpha * s))
        worst_hom = max(worst_hom, abs(scaled - s * s * ab) / max(s * s * ab, 1e-300))
    ok = worst_sym <= 1e-12 and identity_ok and nonneg_ok and worst_hom <= 1e-12
    criterion(2, "chamfer axioms", ok,
              f"symmetry rel {worst_sym:.1e}, CD(A,A)=0 {identity_ok}, non-negative {nonneg_ok}, "
              f"degree-2 homogeneity rel {worst_hom:.1e} over 200 instances")
    assert ok


# ---------------------------------------------------------------- 3

def test_c03_reward_sign(criterion):
    rng = np.random.default_rng(11)
    exact = True
    for _ in range(200):
        A = PointSet4D(_random_cloud(rng, int(rng.integers(1, 300))))
        B = PointSet4D(_random_cloud(rng, int(rng.integers(1, 300))))
        exact &= reward(A, B) == -chamfer4d(A, B)
    decreases = total = 0
    for _ in range(50):
        pts = _random_cloud(rng, 20)
        gt = PointSet4D(pts)
        base = reward(PointSet4D(pts.copy()), gt)
        for k in range(len(pts)):
            moved = pts.copy()
            step = rng.normal(size=3)
            moved[k, :3] += step / np.linalg.norm(step) * 10 ** rng.uniform(-4, 0)
            total += 1
            decreases += reward(PointSet4D(moved), gt) < base
    ok = exact and decreases == total
    criterion(3, "reward sign", ok,
              f"reward == -CD bit-exact on 200 pairs: {exact}; single-point perturbation of a perfect "
              f"generation lowers reward in {decreases}/{total} cases")
    assert ok


# ---------------------------------------------------------------- 4

def test_c04_self_evaluation_identity(criterion, tmp_path, capsys):
    out = tmp_path / "ds"
    t0 = time.perf_counter()
    assert main(["synth", "--seed", "7", "--frames", "24", "--resolution", "256x256", "--out", str(out)]) == 0
    t_synth = time.perf_counter() - t0
    seq = out / "view_00"
    capsys.readouterr()
    t0 = time.perf_counter()
    assert main(["eval", str(seq), str(seq), "--suite", "all"]) == 0
    t_eval = time.perf_counter() - t0
    s = json.loads(capsys.readouterr().out)["suites"]
    d, f, w = s["depth"]["metrics"], s["flow"]["metrics"], s["warp"]["metrics"]
    wl, iq = s["worldline"]["metrics"], s["physicsiq"]["metrics"]
    checks = {
        "absrel": d["absrel"] == 0.0,
        "rmse": d["rmse"] == 0.0,
        "delta1-3": d["delta1"] == d["delta2"] == d["delta3"] == 100.0,
        "epe": f["epe"] == 0.0,
        "chamfer": s["chamfer4d"]["metrics"]["chamfer4d"] == 0.0,
        "drift": wl["mean_drift"] == 0.0 and wl["final_drift"] == 0.0 and wl["l2_error"] == 0.0,
        "fail_rate": wl["fail_rate"] == 0.0,
        "ious": iq["spatial_iou"] == iq["spatiotemporal_iou"] == iq["weighted_spatial_iou"] == 1.0,
        "novel warp": s["noveltime"]["metrics"]["warp_err"] == 0.0,
    }
    warp_values = {f"{kind}.{m}.{r}": w[kind][m][r] for kind in ("depth", "rgb")
                   for m in ("l1", "charbonnier") for r in ("non_occluded", "occluded", "all")}
    # a Charbonnier penalty is at least eps, so "zero" means its floor
    eps = s["warp"]["config"]["charbonnier_eps"]
    checks["warp"] = all(v is None or v == (eps if ".charbonnier." in k else 0.0) for k, v in warp_values.items())
    failed = [k for k, v in checks.items() if not v]
    ok = not failed and t_eval <= 30.0
    detail = (f"eval {t_eval:.1f} s (synth {t_synth:.1f} s) at 256x256x24; "
              + ("all identities exact" if not failed else f"not exact: {', '.join(failed)}"))
    if not checks["warp"]:
        detail += (f" (depth l1 non_occluded {w['depth']['l1']['non_occluded']:.2e}, "
                   f"rgb l1 non_occluded {w['rgb']['l1']['non_occluded']:.2e})")
    criterion(4, "self-evaluation identity", ok, detail)
    assert ok


# ---------------------------------------------------------------- 5

def _max_penetration(trace, samples_per_second=240):
    spec = trace.spec
    objs = spec.objects
    times = np.concatenate([
        np.linspace(0.0, spec.duration, int(spec.duration * samples_per_second) + 1),
        [e[0] for e in trace.events],
        trace.timestamps,
    ])
    times = np.unique(times[times <= trace.timestamps[-1]])
    P = np.stack([np.stack([trace.position_at(i, t) for t in times]) for i in range(len(objs))])
    worst = -np.inf
    for i, o in enumerate(objs):
        worst = max(worst, float(np.max(spec.ground_height + o.bottom_offset - P[i, :, 1])))
        for j in range(i + 1, len(objs)):
            gap = np.linalg.norm(P[i] - P[j], axis=1) - (o.bounding_radius + objs[j].bounding_radius)
            worst = max(worst, float(np.max(-gap)))
    return worst


def test_c05_kinematic_exactness(criterion):
    r = 0.1
    ball = RigidObject("sphere", r, (0.0, 1.0 + r, 0.0), (0.0, 0.0, 0.0), restitution=0.5, friction=0.0)
    trace = simulate(SceneSpec((ball,), gravity=10.0, duration=2.0, fps=100.0))
    impact = next(t for t, kind, _ in trace.events if kind == "ground")
    seg = trace.segments[0][1]
    apex = float(seg.position(seg.t0 + seg.v0[1] / 10.0)[1]) - r
    drop_ok = abs(impact - np.sqrt(0.2)) <= 1e-6 and abs(impact - 0.44721) <= 1e-5 and abs(apex - 0.25) <= 1e-6
    worst, disabled = -np.inf, 0
    for s in range(500):
        tr = simulate(randomize_scene(seed=s, duration=2.0))
        worst = max(worst, _max_penetration(tr))
        disabled += bool(tr.notes)
    ok = drop_ok and worst <= 1e-9
    criterion(5, "kinematic exactness", ok,
              f"first impact {impact:.9f} s (0.44721), apex {apex:.9f} m (0.25); max penetration "
              f"{max(worst, 0.0):.1e} m over 500 scenes (<= 1e-9), contact budget exhausted in {disabled}")
    assert ok


# ---------------------------------------------------------------- 6

def test_c06_flow_projection_consistency(criterion):
    K = CameraIntrinsics.from_fov(96, 72)
    u, v = pixel_grid(K.height, K.width)
    worst, pixels, mask_ok = 0.0, 0, True
    kinds = ("fixed", "orbit", "dolly")
    for s in range(50):
        spec = randomize_scene(seed=1000 + s, duration=12 / 24)
        trace = simulate(spec)
        rig = _rig(kinds[s % 3], K, trace.num_frames, spec.fps)
        for t in range(trace.num_frames - 1):
            frame = render_frame(trace, t, rig)
            motion = render_flow(trace, t, rig)
            d = frame.depth
            # lift every visible pixel, move it with its object, project into the next camera
            world = camera_to_world(unproject_pixels(u, v, np.where(d.valid, d.values, 1.0), K), rig.pose(0, t))
            disp = np.zeros((len(spec.objects) + 1, 3))
            for k in range(len(spec.objects)):
                disp[k + 1] = trace.position_at(k, trace.timestamps[t + 1]) - trace.position_at(k, trace.timestamps[t])
            uv, z = project_points(world_to_camera(world + disp[frame.ids], rig.pose(0, t + 1)), K)
            valid = d.valid & (z > 0)
            mask_ok &= bool(np.array_equal(valid, motion.flow.valid))
            err = np.maximum(np.abs(uv[..., 0] - u - motion.flow.du), np.abs(uv[..., 1] - v - motion.flow.dv))[valid]
            worst = max(worst, float(err.max(initial=0.0)))
            pixels += int(valid.sum())
    ok = worst <= 1e-6 and mask_ok
    criterion(6, "flow-projection consistency", ok,
              f"max |flow - finite difference| {worst:.1e} px over {pixels} pixels, 50 scenes "
              f"(fixed/orbit/dolly cameras), validity masks equal {mask_ok}")
    assert ok


# ---------------------------------------------------------------- 7

def test_c07_cross_oracle_geometry(criterion):
    K = CameraIntrinsics.from_fov(256, 256)
    seeds = [s for s in range(300) if randomize_scene("single", seed=s).objects[0].shape == "sphere"][:5]
    rows = []
    for s in seeds:
        trace = simulate(randomize_scene("single", seed=s, duration=8 / 24))
        rig = fixed_multiview_rig(K, trace.num_frames)
        chunks, depths = [], []
        for t in range(trace.num_frames):
            frame = render_frame(trace, t, rig)
            sel = frame.ids == 1
            if sel.any():
                chunks.append(depth_to_points4d(frame.depth, K, t, sel))
                depths.append(frame.depth.values[sel])
        lifted = PointSet4D.concat(chunks)
        analytic = gt_points4d(trace, rig, samples_per_object=20000, moving_only=False, visible_only=True, seed=0)
        cd = chamfer4d(lifted, analytic)
        footprint = float(np.median(np.concatenate(depths))) / K.fx
        rows.append((s, cd, (2 * footprint) ** 2))
    ok = all(cd < bound for _, cd, bound in rows)
    criterion(7, "cross-oracle geometry", ok,
              "; ".join(f"seed {s}: CD {cd:.2e} < {bound:.2e}" for s, cd, bound in rows)
              + " (bound (2 x median-depth pixel footprint)^2, 256x256)")
    assert ok


# ---------------------------------------------------------------- 8

def test_c08_warp_oracle(criterion):
    K = CameraIntrinsics.from_fov(256, 256)
    rows = []
    for s in range(6):
        trace = simulate(randomize_scene(seed=s, duration=12 / 24))
        rig = fixed_multiview_rig(K, trace.num_frames)
        depths = [render_frame(trace, t, rig).depth for t in range(trace.num_frames)]
        errs = []
        for t in range(trace.num_frames - 1):
            m = render_flow(trace, t, rig)
            errs.append(depth_warp_error(depths[t], depths[t + 1], m.flow, m.occlusion))
        rows.append(mean_over_pairs(errs)["l1"]["non_occluded"])
    ball = RigidObject("sphere", 0.3, (0.0, 0.3, 0.0), (0.0, 0.0, 0.0))
    box = RigidObject("box", 0.2, (0.6, 0.2, 0.3), (0.0, 0.0, 0.0))
    static = simulate(SceneSpec((ball, box), gravity=0.0, duration=6 / 24))
    rig = fixed_multiview_rig(K, static.num_frames)
    static_l1 = []
    for t in range(static.num_frames - 1):
        m = render_flow(static, t, rig)
        e = depth_warp_error(render_frame(static, t, rig).depth, render_frame(static, t + 1, rig).depth, m.flow, m.occlusion)
        static_l1.append(e["l1"]["all"])
    ok = all(r < 1e-2 for r in rows) and all(x == 0.0 for x in static_l1)
    criterion(8, "warp oracle", ok,
              f"non-occluded l1 per scene {', '.join(f'{r:.1e}' for r in rows)} m (< 1e-2, fixed camera, 256x256); "
              f"static scene l1 max {max(static_l1):.1e} (exactly 0)")
    assert ok


# ---------------------------------------------------------------- 9

def test_c09_worldline_degradation_ordering(criterion):
    K = CameraIntrinsics.from_fov(128, 128)
    trace = simulate(randomize_scene("two_body", seed=3, duration=16 / 24))
    rig = fixed_multiview_rig(K, trace.num_frames)
    depths = [render_frame(trace, t, rig).depth for t in range(trace.num_frames)]
    flows = [render_flow(trace, t, rig).flow for t in range(trace.num_frames - 1)]
    seeds = sample_seeds(depths[0].valid, 2048, seed=42)
    noise = np.random.default_rng(0).normal(size=(len(depths),) + K.shape)
    results = []
    for sigma in (0.01, 0.05, 0.1):
        noisy = [DepthMap(np.where(d.valid, d.values + sigma * z, np.nan)) for d, z in zip(depths, noise)]
        results.append(worldline_metrics(build_worldlines(seeds, flows, noisy, depths, K), fail_tau=0.1))

    def increasing(name):
        vals = [getattr(r, name) for r in results]
        return all(a < b for a, b in zip(vals, vals[1:])), vals

    checks = {name: increasing(name) for name in ("l2_error", "mean_drift", "fail_rate")}
    ok = all(c[0] for c in checks.values())
    criterion(9, "worldline degradation ordering", ok,
              "; ".join(f"{n} " + " < ".join(f"{v:.4g}" for v in c[1]) for n, c in checks.items())
              + " at sigma 0.01/0.05/0.1 m")
    assert ok


# ---------------------------------------------------------------- 10

def test_c10_format_round_trips(criterion, tmp_path, small_dataset):
    rng = np.random.default_rng(5)
    results = {}
    vals = rng.uniform(0.1, 30.0, size=(17, 23))
    vals[rng.random(vals.shape) < 0.1] = np.nan
    write_depth(tmp_path / "a.d4df", DepthMap(vals))
    back = read_depth_raw(tmp_path / "a.d4df")
    write_depth_raw(tmp_path / "b.d4df", back)
    results["depth"] = (np.array_equal(back, vals.astype(np.float32).astype(np.float64), equal_nan=True)
                        and (tmp_path / "a.d4df").read_bytes() == (tmp_path / "b.d4df").read_bytes())
    du, dv = rng.normal(scale=8, size=(2, 17, 23))
    valid = rng.random((17, 23)) > 0.1
    write_flow(tmp_path / "a.flo", FlowField(du, dv, valid))
    fb = read_flow(tmp_path / "a.flo")
    write_flow(tmp_path / "b.flo", fb)
    results["flo"] = (np.array_equal(fb.valid, valid) and np.array_equal(fb.du[valid], du.astype(np.float32)[valid])
                      and (tmp_path / "a.flo").read_bytes() == (tmp_path / "b.flo").read_bytes())
    pts = PointSet4D(_random_cloud(rng, 300), 0.03)
    write_points4d(tmp_path / "a.ply", pts)
    pb = read_points4d(tmp_path / "a.ply")
    write_points4d(tmp_path / "b.ply", pb)
    results["ply"] = (np.array_equal(pb.points, pts.points.astype(np.float32).astype(np.float64))
                      and (tmp_path / "a.ply").read_bytes() == (tmp_path / "b.ply").read_bytes())
    m = read_manifest(small_dataset)
    write_manifest(tmp_path / "m.json", m)
    results["manifest"] = dump_manifest(read_manifest(tmp_path / "m.json")) == small_dataset.read_text()

    g = read_depth_raw(DATA / "depth_2x2.d4df")
    golden = {
        "depth golden": g[0, 0] == 1.0 and g[0, 1] == 2.5 and np.isnan(g[1, 0]) and g[1, 1] == 0.125,
    }
    f = read_flow(DATA / "flow_3x2.flo")
    golden["flo golden"] = (f.shape == (2, 3) and list(f.du[0]) == [0.5, 2.0, 0.0] and list(f.dv[1, :2]) == [4.0, 1.0]
                            and not f.valid[1, 2])
    p = read_points4d(DATA / "points_2.ply")
    golden["ply golden"] = p.alpha == 0.03 and p.points.tolist() == [[0.5, -1.25, 3.0, 0.0], [-0.75, 0.125, 2.5, 1.0]]
    golden["png golden"] = read_rgb(DATA / "white_1x1.png").pixels.tolist() == [[[1.0, 1.0, 1.0]]]
    results.update(golden)
    failed = [k for k, v in results.items() if not v]
    ok = not failed
    criterion(10, "format round-trips", ok,
              "depth, .flo, PLY-4D, manifest bit-exact; goldens parse to hand values" if ok
              else f"failed: {', '.join(failed)}")
    assert ok


# ---------------------------------------------------------------- 11

def _tree(root):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def _strip_timestamp(text):
    d = json.loads(text)
    d.pop("timestamp", None)
    return json.dumps(d, sort_keys=True)


def test_c11_determinism(criterion, tmp_path):
    argv = ["synth", "--seed", "21", "--frames", "12", "--resolution", "96x96", "--views", "2"]
    assert main(argv + ["--out", str(tmp_path / "a")]) == 0
    assert main(argv + ["--out", str(tmp_path / "b")]) == 0
    same_data = _tree(tmp_path / "a") == _tree(tmp_path / "b")
    gt = tmp_path / "a" / "view_00"
    pred = tmp_path / "pred"
    shutil.copytree(gt, pred)
    noise = np.random.default_rng(0)
    for f in sorted((pred / "depth").glob("*.d4df")):
        d = read_depth_raw(f)
        write_depth_raw(f, d + noise.normal(scale=0.05, size=d.shape))
    reports = []
    for k, workers in enumerate(("1", "1", "2")):
        out = tmp_path / f"r{k}.json"
        assert main(["eval", str(pred), str(gt), "--workers", workers, "--out", str(out)]) == 0
        reports.append(_strip_timestamp(out.read_text()))
    same_reports = reports[0] == reports[1] == reports[2]
    ok = same_data and same_reports
    criterion(11, "determinism", ok,
              f"synth trees byte-identical {same_data} ({len(_tree(tmp_path / 'a'))} files); "
              f"eval reports identical without timestamp across reruns and worker counts {same_reports}")
    assert ok


# ---------------------------------------------------------------- 12

def test_c12_randomization_coverage(criterion):
    counts = dict.fromkeys(COMPLEXITY_CLASSES, 0)
    outside = []
    N = 10_000
    for s in range(N):
        spec = randomize_scene(seed=s)
        counts[spec.complexity] += 1
        checks = [
            GRAVITY_RANGE[0] <= spec.gravity <= GRAVITY_RANGE[1],
            PERTURBATION_RANGE[0] <= spec.perturbation <= PERTURBATION_RANGE[1],
            LIGHT_LUX_RANGE[0] <= spec.light_lux <= LIGHT_LUX_RANGE[1],
        ]
        for o in spec.objects:
            checks += [
                RESTITUTION_RANGE[0] <= o.restitution <= RESTITUTION_RANGE[1],
                DENSITY_RANGE[0] <= o.density <= DENSITY_RANGE[1],
                FRICTION_RANGE[0] <= o.friction <= FRICTION_RANGE[1],
                SCALE_RANGE[0] <= o.size <= SCALE_RANGE[1],
            ]
        if not all(checks):
            outside.append(s)
    mix = {k: counts[k] / N for k in COMPLEXITY_CLASSES}
    mix_ok = all(abs(mix[k] - w) <= 0.02 for k, w in zip(COMPLEXITY_CLASSES, COMPLEXITY_WEIGHTS))
    ok = not outside and mix_ok and RESTITUTION_RANGE == (0.1, 0.95) and GRAVITY_RANGE == (5.0, 15.0)
    criterion(12, "randomization coverage", ok,
              f"{N} draws, {len(outside)} outside ranges; mix "
              + "/".join(f"{100 * mix[k]:.1f}" for k in COMPLEXITY_CLASSES) + " % (30/35/35 +/- 2)")
    assert ok
