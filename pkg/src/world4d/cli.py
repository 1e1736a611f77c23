"""Command-line interface: ``world4d synth | eval | report``.

Exit codes: 0 success, 1 internal failure, 2 usage or validation error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import __version__
from .errors import FormatError, InvalidInputError, ValidationError, World4DError
from .evaluate import (
    DEFAULT_DELTA_PX,
    DEFAULT_POINT_BUDGET,
    SUITES,
    EvalConfig,
    aggregate_reports,
    dump_report,
    evaluate,
    report_csv,
    summary_csv,
)
from .geometry import DEFAULT_ALPHA
from .warp import DEFAULT_CHARBONNIER_EPS
from .worldline import DEFAULT_FAIL_TAU, DEFAULT_NUM_SEEDS, DEFAULT_SEED

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_USAGE = 2

log = logging.getLogger("world4d")


class UsageError(Exception):
    pass


def _default_workers() -> int:
    raw = os.environ.get("WORLD4D_WORKERS")
    if raw is None or raw == "":
        return 1
    try:
        n = int(raw)
    except ValueError:
        raise UsageError(f"WORLD4D_WORKERS must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise UsageError(f"WORLD4D_WORKERS must be a positive integer, got {raw!r}")
    return n


def _resolution(text: str) -> tuple[int, int]:
    try:
        w, h = (int(x) for x in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"resolution must look like 256x256, got {text!r}") from None
    if w <= 0 or h <= 0:
        raise argparse.ArgumentTypeError("resolution must be positive")
    return w, h


def _manifest_path(text: str) -> Path:
    p = Path(text)
    return p / "manifest.json" if p.is_dir() else p


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="world4d", description="4D world-model evaluation toolkit.")
    parser.add_argument("--version", action="version", version=f"world4d {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="simulate and render a synthetic dataset")
    p.add_argument("--seed", type=int, default=0, help="scene randomization seed")
    p.add_argument("--spec", type=Path, help="scene spec JSON (overrides --seed randomization)")
    p.add_argument("--complexity", choices=("single", "two_body", "multi"), help="force a complexity class")
    p.add_argument("--out", type=Path, required=True, help="output directory")
    p.add_argument("--views", type=int, default=1)
    p.add_argument("--resolution", type=_resolution, default=(256, 256), metavar="WxH")
    p.add_argument("--fov", type=float, default=60.0, help="horizontal field of view in degrees")
    p.add_argument("--fps", type=float, default=24.0)
    p.add_argument("--duration", type=float, default=1.0, help="seconds")
    p.add_argument("--frames", type=int, help="frame count; sets duration = frames / fps")
    p.add_argument("--camera", choices=("fixed", "orbit", "dolly"), default="fixed")
    p.add_argument("--alpha", type=float, default=DEFAULT_ALPHA, help="alpha recorded in the GT point cloud")
    p.add_argument("--samples-per-object", type=int, default=2000)
    p.add_argument("--workers", type=int, default=None)

    p = sub.add_parser("eval", help="evaluate a predicted sequence against ground truth")
    p.add_argument("pred", type=_manifest_path, help="prediction manifest (or its directory)")
    p.add_argument("gt", type=_manifest_path, help="ground-truth manifest (or its directory)")
    p.add_argument("--suite", action="append", choices=SUITES + ("all",),
                   help="suite to run (repeatable, default all)")
    p.add_argument("--alpha", type=float, default=DEFAULT_ALPHA, help="temporal weight, meters per frame")
    p.add_argument("--delta", type=float, default=DEFAULT_DELTA_PX, help="moving-pixel flow threshold (px)")
    p.add_argument("--fail-tau", type=float, default=DEFAULT_FAIL_TAU, help="worldline failure threshold (m)")
    p.add_argument("--charbonnier-eps", type=float, default=DEFAULT_CHARBONNIER_EPS)
    p.add_argument("--depth-align", choices=("metric", "median"), default="metric")
    p.add_argument("--seeds", type=int, default=DEFAULT_NUM_SEEDS, help="worldline seed count")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED, help="sampling seed")
    p.add_argument("--seed-region", choices=("depth", "object"), default="depth")
    p.add_argument("--occlusion", choices=("auto", "gt", "fb", "none"), default="auto")
    p.add_argument("--point-budget", type=int, default=DEFAULT_POINT_BUDGET)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--out", type=Path, help="write the report here instead of stdout")
    p.add_argument("--format", choices=("json", "csv"), default="json")

    p = sub.add_parser("report", help="aggregate metric reports (per-metric mean)")
    p.add_argument("reports", nargs="+", type=Path)
    p.add_argument("--out", type=Path)
    p.add_argument("--format", choices=("json", "csv"), default="json")
    return parser


def _emit(text: str, out: Path | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text, encoding="utf-8")


def _workers(args) -> int:
    n = _default_workers() if args.workers is None else args.workers
    if n < 1:
        raise UsageError(f"--workers must be >= 1, got {n}")
    return n


def cmd_synth(args) -> int:
    from .geometry import CameraIntrinsics
    from .synth import SceneSpec, dolly_rig, fixed_multiview_rig, orbit_rig, randomize_scene, simulate, write_sequence

    if not args.fps > 0:
        raise UsageError(f"--fps must be positive, got {args.fps}")
    duration = args.frames / args.fps if args.frames is not None else args.duration
    if args.frames is not None and args.frames < 1:
        raise UsageError(f"--frames must be >= 1, got {args.frames}")
    if not duration > 0:
        raise UsageError(f"--duration must be positive, got {duration}")
    if args.views < 1:
        raise UsageError(f"--views must be >= 1, got {args.views}")
    if args.camera == "dolly" and args.views != 1:
        raise UsageError("the dolly camera supports a single view")
    workers = _workers(args)
    if args.out.exists() and not args.out.is_dir():
        raise UsageError(f"--out {args.out} exists and is not a directory")

    if args.spec is not None:
        try:
            spec = SceneSpec.from_dict(json.loads(args.spec.read_text(encoding="utf-8")))
        except (OSError, json.JSONDecodeError, TypeError, KeyError) as exc:
            raise UsageError(f"cannot read scene spec {args.spec}: {exc}") from None
        spec = spec.replace(duration=duration, fps=args.fps)
    else:
        spec = randomize_scene(args.complexity, args.seed, duration=duration, fps=args.fps)

    trace = simulate(spec)
    T = trace.num_frames
    w, h = args.resolution
    K = CameraIntrinsics.from_fov(w, h, args.fov)
    if args.camera == "fixed":
        rig = fixed_multiview_rig(K, T, args.views)
    elif args.camera == "orbit":
        rig = orbit_rig(K, T, args.fps, num_views=args.views)
    else:
        rig = dolly_rig(K, T, args.fps)

    args.out.mkdir(parents=True, exist_ok=True)
    (args.out / "scene.json").write_text(json.dumps(spec.to_dict(), sort_keys=True, indent=2) + "\n", encoding="utf-8")

    def one(view):
        log.info("rendering view %d (%d frames)", view, T)
        return write_sequence(trace, rig, view, args.out / f"view_{view:02d}",
                              samples_per_object=args.samples_per_object, alpha=args.alpha)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            paths = list(pool.map(one, range(rig.num_views)))
    else:
        paths = [one(v) for v in range(rig.num_views)]
    for p in paths:
        print(p)
    return EXIT_OK


def cmd_eval(args) -> int:
    for name, p in (("prediction", args.pred), ("ground truth", args.gt)):
        if not p.is_file():
            raise UsageError(f"{name} manifest not found: {p}")
    cfg = EvalConfig(
        alpha=args.alpha,
        delta_px=args.delta,
        point_budget=args.point_budget,
        fail_tau=args.fail_tau,
        charbonnier_eps=args.charbonnier_eps,
        depth_align="median_scaled" if args.depth_align == "median" else "metric",
        num_seeds=args.seeds,
        seed=args.seed,
        seed_region=args.seed_region,
        occlusion=args.occlusion,
        workers=_workers(args),
    )
    report = evaluate(args.pred, args.gt, args.suite or ["all"], cfg)
    _emit(dump_report(report) if args.format == "json" else report_csv(report), args.out)
    return EXIT_OK


def cmd_report(args) -> int:
    reports = []
    for p in args.reports:
        try:
            reports.append(json.loads(p.read_text(encoding="utf-8")))
        except OSError as exc:
            raise UsageError(f"cannot read report {p}: {exc}") from None
        except json.JSONDecodeError as exc:
            raise FormatError(f"invalid JSON: {exc.msg}", p, exc.pos) from None
    summary = aggregate_reports(reports)
    if args.format == "json":
        text = dump_report(summary)
    else:
        text = summary_csv(summary)
    _emit(text, args.out)
    return EXIT_OK


COMMANDS = {"synth": cmd_synth, "eval": cmd_eval, "report": cmd_report}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"world4d {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValidationError, InvalidInputError, FormatError) as exc:
        print(f"world4d {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except World4DError as exc:
        print(f"world4d {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except Exception as exc:  # noqa: BLE001
        log.debug("internal failure", exc_info=True)
        print(f"world4d {args.command}: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
