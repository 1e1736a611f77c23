"""On-disk formats for sequences, plus the manifest that ties them together.

Byte layouts
------------
Depth container (``.d4df``)::

    offset 0   4 bytes   magic b"D4DF"
    offset 4   u32 LE    version (1)
    offset 8   u32 LE    width
    offset 12  u32 LE    height
    offset 16  float32 LE * height * width, row-major, NaN = invalid

Flow (``.flo``, Middlebury)::

    offset 0   float32 LE  202021.25
    offset 4   i32 LE      width
    offset 8   i32 LE      height
    offset 12  float32 LE  (du, dv) interleaved, row-major

    a component with magnitude > 1e9 marks the pixel invalid; invalid
    pixels are written as 1e10.

Scene flow is stored as three depth containers (dx, dy, dz). RGB is an 8-bit
RGB PNG, masks and id rasters are 8-bit grayscale PNGs, and 4D point sets are
ASCII PLY with float properties ``x y z tau`` and a ``comment alpha`` line.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import FormatError, ValidationError
from .geometry import (
    CameraIntrinsics,
    CameraPose,
    DepthMap,
    FlowField,
    PointSet4D,
    RgbFrame,
    SceneFlowField,
)
from .warp import OcclusionMask

DEPTH_MAGIC = b"D4DF"
DEPTH_VERSION = 1
DEPTH_HEADER = struct.Struct("<4sIII")
FLO_MAGIC = 202021.25
FLO_HEADER = struct.Struct("<fii")
FLO_UNKNOWN = 1e10
FLO_INVALID_THRESH = 1e9
SCHEMA_VERSION = 1
SCENE_FLOW_COMPONENTS = ("dx", "dy", "dz")


# ---------------------------------------------------------------- depth

def encode_depth_raw(values: np.ndarray) -> bytes:
    values = np.asarray(values)
    if values.ndim != 2:
        raise ValueError(f"expected a 2-D raster, got shape {values.shape}")
    h, w = values.shape
    return DEPTH_HEADER.pack(DEPTH_MAGIC, DEPTH_VERSION, w, h) + np.ascontiguousarray(values, dtype="<f4").tobytes()


def decode_depth_raw(data: bytes, path=None) -> np.ndarray:
    if len(data) < DEPTH_HEADER.size:
        raise FormatError(f"truncated header: {len(data)} of {DEPTH_HEADER.size} bytes", path, len(data))
    magic, version, w, h = DEPTH_HEADER.unpack_from(data)
    if magic != DEPTH_MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {DEPTH_MAGIC!r}", path, 0)
    if version != DEPTH_VERSION:
        raise FormatError(f"unsupported depth container version {version} (expected {DEPTH_VERSION})", path, 4)
    expected = DEPTH_HEADER.size + 4 * w * h
    if len(data) < expected:
        raise FormatError(f"truncated payload: expected {expected} bytes, got {len(data)}", path, len(data))
    if len(data) > expected:
        raise FormatError(f"{len(data) - expected} trailing bytes after payload", path, expected)
    return np.frombuffer(data, dtype="<f4", count=w * h, offset=DEPTH_HEADER.size).reshape(h, w).astype(np.float64)


def write_depth_raw(path, values: np.ndarray) -> None:
    Path(path).write_bytes(encode_depth_raw(values))


def read_depth_raw(path) -> np.ndarray:
    return decode_depth_raw(Path(path).read_bytes(), path)


def write_depth(path, depth: DepthMap) -> None:
    write_depth_raw(path, depth.filled(np.nan))


def read_depth(path) -> DepthMap:
    return DepthMap(read_depth_raw(path))


# ---------------------------------------------------------------- flow

def encode_flow(flow: FlowField) -> bytes:
    h, w = flow.shape
    data = np.empty((h, w, 2), dtype="<f4")
    data[..., 0] = np.where(flow.valid, flow.du, FLO_UNKNOWN)
    data[..., 1] = np.where(flow.valid, flow.dv, FLO_UNKNOWN)
    return FLO_HEADER.pack(FLO_MAGIC, w, h) + data.tobytes()


def decode_flow(data: bytes, path=None) -> FlowField:
    if len(data) < FLO_HEADER.size:
        raise FormatError(f"truncated header: {len(data)} of {FLO_HEADER.size} bytes", path, len(data))
    magic, w, h = FLO_HEADER.unpack_from(data)
    if magic != FLO_MAGIC:
        raise FormatError(f"bad .flo magic {magic!r}, expected {FLO_MAGIC}", path, 0)
    if w <= 0 or h <= 0:
        raise FormatError(f"non-positive dimensions {w}x{h}", path, 4)
    expected = FLO_HEADER.size + 8 * w * h
    if len(data) != expected:
        raise FormatError(f"payload size mismatch: expected {expected} bytes, got {len(data)}", path,
                          min(len(data), expected))
    arr = np.frombuffer(data, dtype="<f4", count=2 * w * h, offset=FLO_HEADER.size).reshape(h, w, 2).astype(np.float64)
    du, dv = arr[..., 0], arr[..., 1]
    valid = (np.abs(du) <= FLO_INVALID_THRESH) & (np.abs(dv) <= FLO_INVALID_THRESH)
    return FlowField(np.where(valid, du, np.nan), np.where(valid, dv, np.nan), valid)


def write_flow(path, flow: FlowField) -> None:
    Path(path).write_bytes(encode_flow(flow))


def read_flow(path) -> FlowField:
    return decode_flow(Path(path).read_bytes(), path)


# ---------------------------------------------------------------- scene flow

def scene_flow_paths(stem) -> list[Path]:
    stem = Path(stem)
    return [stem.with_name(f"{stem.name}_{c}.d4df") for c in SCENE_FLOW_COMPONENTS]


def write_scene_flow(stem, sf: SceneFlowField) -> None:
    for p, comp in zip(scene_flow_paths(stem), (sf.dx, sf.dy, sf.dz)):
        write_depth_raw(p, np.where(sf.valid, comp, np.nan))


def read_scene_flow(stem) -> SceneFlowField:
    return SceneFlowField(*(read_depth_raw(p) for p in scene_flow_paths(stem)))


# ---------------------------------------------------------------- images

def _open_png(path, mode: str) -> np.ndarray:
    try:
        with Image.open(path) as img:
            img.load()
            if img.format != "PNG":
                raise FormatError(f"expected PNG, found {img.format}", path)
            if img.mode != mode:
                raise FormatError(f"expected PNG mode {mode}, found {img.mode}", path)
            return np.asarray(img)
    except (UnidentifiedImageError, OSError, SyntaxError) as exc:
        raise FormatError(f"unreadable PNG: {exc}", path) from exc


def write_rgb(path, frame: RgbFrame) -> None:
    q = np.round(frame.pixels * 255.0).astype(np.uint8)
    Image.fromarray(q).save(path, format="PNG")


def read_rgb(path) -> RgbFrame:
    return RgbFrame(_open_png(path, "RGB").astype(np.float64) / 255.0)


def write_mask(path, mask: np.ndarray) -> None:
    Image.fromarray(np.asarray(mask, dtype=bool).astype(np.uint8) * 255).save(path, format="PNG")


def read_mask(path) -> np.ndarray:
    arr = _open_png(path, "L")
    if not np.all((arr == 0) | (arr == 255)):
        raise FormatError("mask PNG must contain only 0 and 255", path)
    return arr == 255


def write_ids(path, ids: np.ndarray) -> None:
    ids = np.asarray(ids)
    if ids.min(initial=0) < 0 or ids.max(initial=0) > 255:
        raise ValueError("object ids must fit in 8 bits")
    Image.fromarray(ids.astype(np.uint8)).save(path, format="PNG")


def read_ids(path) -> np.ndarray:
    return _open_png(path, "L").astype(np.int32)


def write_occlusion(path, occ: OcclusionMask) -> None:
    write_mask(path, occ.occluded)


def read_occlusion(path) -> OcclusionMask:
    return OcclusionMask(read_mask(path), "file")


# ---------------------------------------------------------------- PLY

def format_points4d(points: PointSet4D) -> str:
    lines = [
        "ply",
        "format ascii 1.0",
        f"comment alpha {points.alpha!r}",
        f"element vertex {len(points)}",
        "property float x",
        "property float y",
        "property float z",
        "property float tau",
        "end_header",
    ]
    # float32 values printed with enough digits to round-trip exactly
    body = [" ".join(repr(float(c)) for c in row) for row in points.points.astype(np.float32)]
    return "\n".join(lines + body) + "\n"


def parse_points4d(text: str, path=None) -> PointSet4D:
    lines = text.split("\n")
    if not lines or lines[0].strip() != "ply":
        raise FormatError("missing 'ply' signature", path, 1)
    alpha = None
    count = None
    props = []
    end = None
    for i, raw in enumerate(lines[1:], start=2):
        line = raw.strip()
        parts = line.split()
        if not parts:
            raise FormatError("blank line inside header", path, i)
        if parts[0] == "format":
            if parts[1:] != ["ascii", "1.0"]:
                raise FormatError(f"unsupported PLY format {' '.join(parts[1:])!r}", path, i)
        elif parts[0] == "comment":
            if len(parts) == 3 and parts[1] == "alpha":
                try:
                    alpha = float(parts[2])
                except ValueError:
                    raise FormatError(f"bad alpha value {parts[2]!r}", path, i) from None
        elif parts[0] == "element":
            if len(parts) != 3 or parts[1] != "vertex" or count is not None:
                raise FormatError(f"unexpected element line {line!r}", path, i)
            try:
                count = int(parts[2])
            except ValueError:
                raise FormatError(f"bad vertex count {parts[2]!r}", path, i) from None
        elif parts[0] == "property":
            if len(parts) != 3 or parts[1] not in ("float", "float32"):
                raise FormatError(f"unsupported property {line!r}", path, i)
            props.append(parts[2])
        elif parts[0] == "end_header":
            end = i
            break
        else:
            raise FormatError(f"unknown header line {line!r}", path, i)
    if end is None:
        raise FormatError("missing end_header", path, len(lines))
    if count is None:
        raise FormatError("missing vertex element", path, end)
    if props != ["x", "y", "z", "tau"]:
        raise FormatError(f"expected properties x y z tau, found {' '.join(props)}", path, end)
    if alpha is None:
        raise FormatError("missing 'comment alpha' line", path, end)
    body = lines[end:]
    if body and body[-1] == "":
        body = body[:-1]
    if len(body) != count:
        raise FormatError(f"expected {count} vertices, found {len(body)}", path, end + min(len(body), count) + 1)
    pts = np.empty((count, 4), dtype=np.float32)
    for k, row in enumerate(body):
        vals = row.split()
        if len(vals) != 4:
            raise FormatError(f"vertex line has {len(vals)} values, expected 4", path, end + k + 1)
        try:
            pts[k] = [float(x) for x in vals]
        except ValueError:
            raise FormatError(f"non-numeric vertex {row!r}", path, end + k + 1) from None
    return PointSet4D(pts.astype(np.float64), alpha)


def write_points4d(path, points: PointSet4D) -> None:
    Path(path).write_text(format_points4d(points), encoding="ascii")


def read_points4d(path) -> PointSet4D:
    try:
        text = Path(path).read_text(encoding="ascii")
    except UnicodeDecodeError as exc:
        raise FormatError(f"PLY is not ASCII: {exc}", path, exc.start) from exc
    return parse_points4d(text, path)


# ---------------------------------------------------------------- manifest

# modality -> (reader, frames that carry it relative to T)
PER_FRAME = ("rgb", "depth", "ids")
PER_PAIR = ("flow", "flow_bwd", "scene_flow", "occlusion")
SINGLE = ("points4d",)
KNOWN_MODALITIES = PER_FRAME + PER_PAIR + SINGLE

_READERS = {
    "rgb": read_rgb,
    "depth": read_depth,
    "ids": read_ids,
    "flow": read_flow,
    "flow_bwd": read_flow,
    "scene_flow": read_scene_flow,
    "occlusion": read_occlusion,
    "points4d": read_points4d,
}


def expected_count(modality: str, frame_count: int) -> int:
    if modality in PER_FRAME:
        return frame_count
    if modality in PER_PAIR:
        return max(frame_count - 1, 0)
    return 1


@dataclass
class SequenceManifest:
    frame_count: int
    fps: float
    intrinsics: CameraIntrinsics
    extrinsics: list                 # CameraPose per frame
    modalities: dict                 # name -> {"pattern": str, "count": int}
    provenance: dict
    units: dict
    schema_version: int = SCHEMA_VERSION

    @property
    def resolution(self) -> tuple[int, int]:
        return (self.intrinsics.width, self.intrinsics.height)

    def to_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "frame_count": self.frame_count,
            "fps": self.fps,
            "resolution": list(self.resolution),
            "intrinsics": self.intrinsics.to_dict(),
            "extrinsics": [p.to_dict() for p in self.extrinsics],
            "modalities": {k: dict(v) for k, v in self.modalities.items()},
            "provenance": self.provenance,
            "units": self.units,
        }

    @classmethod
    def from_dict(cls, d: dict, path=None) -> "SequenceManifest":
        where = f" in {path}" if path is not None else ""
        if not isinstance(d, dict):
            raise ValidationError(f"manifest{where} must be a JSON object")
        version = d.get("schema_version")
        if version != SCHEMA_VERSION:
            raise ValidationError(
                f"unsupported manifest schema_version {version!r}{where}; this reader supports {SCHEMA_VERSION}"
            )
        required = ("frame_count", "fps", "resolution", "intrinsics", "extrinsics", "modalities", "provenance", "units")
        missing = [k for k in required if k not in d]
        if missing:
            raise ValidationError(f"manifest{where} is missing field(s): {', '.join(missing)}")
        try:
            K = CameraIntrinsics.from_dict(d["intrinsics"])
            poses = [CameraPose.from_dict(p) for p in d["extrinsics"]]
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"bad camera block{where}: {exc}") from exc
        T = d["frame_count"]
        if not isinstance(T, int) or T < 1:
            raise ValidationError(f"frame_count must be a positive integer{where}, got {T!r}")
        if list(d["resolution"]) != [K.width, K.height]:
            raise ValidationError(f"resolution {d['resolution']} disagrees with intrinsics {K.width}x{K.height}{where}")
        if len(poses) != T:
            raise ValidationError(f"{len(poses)} extrinsics for {T} frames{where}")
        mods = {}
        for name, entry in d["modalities"].items():
            if name not in KNOWN_MODALITIES:
                raise ValidationError(f"unknown modality {name!r}{where}")
            if not isinstance(entry, dict) or "pattern" not in entry or "count" not in entry:
                raise ValidationError(f"modality {name!r} needs 'pattern' and 'count'{where}")
            if entry["count"] != expected_count(name, T):
                raise ValidationError(
                    f"modality {name!r} lists {entry['count']} files, expected {expected_count(name, T)}{where}"
                )
            mods[name] = {"pattern": str(entry["pattern"]), "count": int(entry["count"])}
        return cls(T, float(d["fps"]), K, poses, mods, d["provenance"], d["units"], version)


def dump_manifest(manifest: SequenceManifest) -> str:
    return json.dumps(manifest.to_dict(), sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def write_manifest(path, manifest: SequenceManifest) -> None:
    Path(path).write_text(dump_manifest(manifest), encoding="utf-8")


def read_manifest(path) -> SequenceManifest:
    try:
        d = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"invalid JSON: {exc.msg}", path, exc.pos) from exc
    return SequenceManifest.from_dict(d, path)


def modality_path(root, manifest: SequenceManifest, modality: str, index: int = 0) -> Path:
    return Path(root) / manifest.modalities[modality]["pattern"].format(t=index)


def _files_for(root, manifest, modality, index) -> list[Path]:
    p = modality_path(root, manifest, modality, index)
    return scene_flow_paths(p) if modality == "scene_flow" else [p]


def validate_sequence(path, deep: bool = False) -> SequenceManifest:
    """Check that every file the manifest references exists (and parses when ``deep``)."""
    path = Path(path)
    manifest = read_manifest(path)
    root = path.parent
    for name, entry in manifest.modalities.items():
        for k in range(entry["count"]):
            for f in _files_for(root, manifest, name, k):
                if not f.is_file():
                    raise ValidationError(f"missing {name} file {f}")
            if deep:
                item = _READERS[name](modality_path(root, manifest, name, k))
                if name == "points4d":
                    continue
                shape = item.occluded.shape if isinstance(item, OcclusionMask) else np.shape(item) if isinstance(item, np.ndarray) else item.shape
                if tuple(shape) != manifest.intrinsics.shape:
                    raise ValidationError(
                        f"{name} file {modality_path(root, manifest, name, k)} has shape {tuple(shape)}, "
                        f"expected {manifest.intrinsics.shape}"
                    )
    return manifest


class Sequence:
    """Lazy access to the modalities of one on-disk sequence."""

    def __init__(self, manifest_path, validate: bool = True):
        self.path = Path(manifest_path)
        self.root = self.path.parent
        self.manifest = validate_sequence(self.path) if validate else read_manifest(self.path)

    def __len__(self) -> int:
        return self.manifest.frame_count

    @property
    def intrinsics(self) -> CameraIntrinsics:
        return self.manifest.intrinsics

    def pose(self, t: int) -> CameraPose:
        return self.manifest.extrinsics[t]

    def has(self, modality: str) -> bool:
        return modality in self.manifest.modalities

    def load(self, modality: str, index: int = 0):
        if not self.has(modality):
            raise ValidationError(f"sequence {self.path} has no {modality!r} modality")
        return _READERS[modality](modality_path(self.root, self.manifest, modality, index))

    def load_all(self, modality: str) -> list:
        if not self.has(modality):
            raise ValidationError(f"sequence {self.path} has no {modality!r} modality")
        return [self.load(modality, k) for k in range(self.manifest.modalities[modality]["count"])]


DEFAULT_PATTERNS = {
    "rgb": "rgb/{t:05d}.png",
    "depth": "depth/{t:05d}.d4df",
    "ids": "ids/{t:05d}.png",
    "flow": "flow/{t:05d}.flo",
    "flow_bwd": "flow_bwd/{t:05d}.flo",
    "scene_flow": "scene_flow/{t:05d}",
    "occlusion": "occlusion/{t:05d}.png",
    "points4d": "points4d.ply",
}

UNITS = {"depth": "meters", "scene_flow": "meters", "flow": "pixels", "time": "frames"}

__all__ = [
    "FormatError",
    "ValidationError",
    "SequenceManifest",
    "Sequence",
    "DEFAULT_PATTERNS",
    "encode_depth_raw",
    "decode_depth_raw",
    "read_depth",
    "write_depth",
    "read_depth_raw",
    "write_depth_raw",
    "encode_flow",
    "decode_flow",
    "read_flow",
    "write_flow",
    "read_scene_flow",
    "write_scene_flow",
    "scene_flow_paths",
    "read_rgb",
    "write_rgb",
    "read_mask",
    "write_mask",
    "read_ids",
    "write_ids",
    "read_occlusion",
    "write_occlusion",
    "read_points4d",
    "write_points4d",
    "format_points4d",
    "parse_points4d",
    "read_manifest",
    "write_manifest",
    "dump_manifest",
    "validate_sequence",
    "modality_path",
    "expected_count",
]
