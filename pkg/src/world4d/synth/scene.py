"""Parametric rigid-body scene descriptions and their randomization."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from ..errors import InvalidInputError

# Randomization ranges. Physical ranges follow the simulation parameter table
# of the data pipeline this generator mimics; sizes and layout are desk scale.
RESTITUTION_RANGE = (0.1, 0.95)
GRAVITY_RANGE = (5.0, 15.0)
DENSITY_RANGE = (100.0, 10_000.0)
FRICTION_RANGE = (0.1, 1.0)
SCALE_RANGE = (0.1, 5.0)
DESK_SIZE_RANGE = (0.1, 0.25)   # sub-range of SCALE_RANGE
PERTURBATION_RANGE = (0.05, 0.25)
LIGHT_LUX_RANGE = (100.0, 100_000.0)
ASPECT_RANGE = (0.6, 1.6)

COMPLEXITY_CLASSES = ("single", "two_body", "multi")
COMPLEXITY_WEIGHTS = (0.30, 0.35, 0.35)
MULTI_OBJECT_COUNT = (3, 6)

SHAPES = ("sphere", "box")


@dataclass(frozen=True)
class RigidObject:
    """A sphere (``size`` = radius) or axis-aligned box (half extents ``size * aspect``)."""

    shape: str
    size: float
    position: tuple
    velocity: tuple
    density: float = 1000.0
    restitution: float = 0.5
    friction: float = 0.5
    albedo: tuple = (0.8, 0.3, 0.2)
    aspect: tuple = (1.0, 1.0, 1.0)

    def __post_init__(self):
        if self.shape not in SHAPES:
            raise InvalidInputError(f"unknown shape {self.shape!r}")
        if not self.size > 0:
            raise InvalidInputError(f"object size must be positive, got {self.size}")
        if not self.density > 0:
            raise InvalidInputError(f"density must be positive, got {self.density}")
        if not 0 <= self.restitution <= 1:
            raise InvalidInputError(f"restitution must lie in [0, 1], got {self.restitution}")
        if self.friction < 0:
            raise InvalidInputError(f"friction must be non-negative, got {self.friction}")
        for name in ("position", "velocity", "albedo", "aspect"):
            value = tuple(float(c) for c in getattr(self, name))
            if len(value) != 3:
                raise InvalidInputError(f"{name} must have 3 components")
            object.__setattr__(self, name, value)

    @property
    def half_extents(self) -> np.ndarray:
        if self.shape == "sphere":
            return np.full(3, self.size)
        return self.size * np.asarray(self.aspect)

    @property
    def bottom_offset(self) -> float:
        """Distance from the center to the lowest point."""
        return float(self.half_extents[1])

    @property
    def bounding_radius(self) -> float:
        if self.shape == "sphere":
            return float(self.size)
        return float(np.linalg.norm(self.half_extents))

    @property
    def volume(self) -> float:
        if self.shape == "sphere":
            return 4.0 / 3.0 * np.pi * self.size ** 3
        return float(8.0 * np.prod(self.half_extents))

    @property
    def mass(self) -> float:
        return self.density * self.volume


@dataclass(frozen=True)
class SceneSpec:
    objects: tuple
    gravity: float = 9.81
    ground_height: float = 0.0
    duration: float = 1.0
    fps: float = 24.0
    rng_seed: int = 0
    light_direction: tuple = (0.3, 0.8, 0.5)
    light_lux: float = 10_000.0
    complexity: str | None = None
    perturbation: float | None = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        objs = tuple(o if isinstance(o, RigidObject) else RigidObject(**o) for o in self.objects)
        object.__setattr__(self, "objects", objs)
        if not self.fps > 0:
            raise InvalidInputError(f"fps must be positive, got {self.fps}")
        if not self.duration > 0:
            raise InvalidInputError(f"duration must be positive, got {self.duration}")
        if self.gravity < 0:
            raise InvalidInputError(f"gravity is a downward magnitude and must be >= 0, got {self.gravity}")
        light = np.asarray(self.light_direction, dtype=np.float64)
        norm = np.linalg.norm(light)
        if norm == 0:
            raise InvalidInputError("light direction must be non-zero")
        object.__setattr__(self, "light_direction", tuple(float(c) for c in light / norm))

    @property
    def num_frames(self) -> int:
        return max(1, int(round(self.duration * self.fps)))

    @property
    def frame_times(self) -> np.ndarray:
        return np.arange(self.num_frames) / self.fps

    def replace(self, **changes) -> "SceneSpec":
        d = self.to_dict()
        d.update(changes)
        return SceneSpec.from_dict(d)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["objects"] = [asdict(o) for o in self.objects]
        for o in d["objects"]:
            for k in ("position", "velocity", "albedo", "aspect"):
                o[k] = list(o[k])
        d["light_direction"] = list(self.light_direction)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SceneSpec":
        d = dict(d)
        d["objects"] = tuple(RigidObject(**o) for o in d["objects"])
        return cls(**d)


def sample_complexity(rng: np.random.Generator) -> str:
    return str(rng.choice(COMPLEXITY_CLASSES, p=COMPLEXITY_WEIGHTS))


def _object_count(complexity: str, rng: np.random.Generator) -> int:
    if complexity == "single":
        return 1
    if complexity == "two_body":
        return 2
    if complexity == "multi":
        return int(rng.integers(MULTI_OBJECT_COUNT[0], MULTI_OBJECT_COUNT[1] + 1))
    raise InvalidInputError(f"unknown complexity {complexity!r}; expected one of {COMPLEXITY_CLASSES}")


def randomize_scene(complexity: str | None = None, seed: int = 0, *, duration: float = 1.0,
                    fps: float = 24.0, max_attempts: int = 1000) -> SceneSpec:
    """Draw a scene; deterministic given ``seed``.

    When ``complexity`` is None it is drawn with the 30/35/35 curriculum mix.
    Base layout values (drop heights, horizontal placement, launch velocities)
    are jittered by a per-scene perturbation ratio.
    """
    rng = np.random.default_rng(seed)
    if complexity is None:
        complexity = sample_complexity(rng)
    n = _object_count(complexity, rng)
    gravity = float(rng.uniform(*GRAVITY_RANGE))
    ratio = float(rng.uniform(*PERTURBATION_RANGE))

    def jitter(base):
        return base * (1.0 + rng.uniform(-ratio, ratio, size=np.shape(base)))

    objects = []
    placed = []   # (center, bounding radius)
    for i in range(n):
        shape = SHAPES[int(rng.integers(0, 2))]
        size = float(rng.uniform(*DESK_SIZE_RANGE))
        aspect = tuple(rng.uniform(*ASPECT_RANGE, size=3)) if shape == "box" else (1.0, 1.0, 1.0)
        proto = RigidObject(shape, size, (0, 0, 0), (0, 0, 0), aspect=aspect)
        for attempt in range(max_attempts):
            # a crowded desk drops later objects from progressively higher up
            top = 0.9 + 0.25 * (attempt // 50)
            base = np.array([rng.uniform(-1.1, 1.1), rng.uniform(0.25, top), rng.uniform(-0.8, 0.8)])
            pos = jitter(base)
            pos[1] = max(pos[1], proto.bottom_offset) + 0.0
            if all(np.linalg.norm(pos - c) > proto.bounding_radius + r + 0.02 for c, r in placed):
                break
        else:
            raise RuntimeError(f"could not place object {i} without overlap (seed {seed})")
        base_vel = np.array([rng.uniform(-0.6, 0.6), rng.uniform(-0.5, 1.0), rng.uniform(-0.4, 0.4)])
        vel = jitter(base_vel)
        placed.append((pos, proto.bounding_radius))
        objects.append(RigidObject(
            shape=shape,
            size=size,
            position=tuple(pos),
            velocity=tuple(vel),
            density=float(rng.uniform(*DENSITY_RANGE)),
            restitution=float(rng.uniform(*RESTITUTION_RANGE)),
            friction=float(rng.uniform(*FRICTION_RANGE)),
            albedo=tuple(rng.uniform(0.0, 1.0, size=3)),
            aspect=aspect,
        ))
    elevation = np.deg2rad(rng.uniform(30.0, 80.0))
    azimuth = rng.uniform(0.0, 2.0 * np.pi)
    light = (np.cos(elevation) * np.cos(azimuth), np.sin(elevation), np.cos(elevation) * np.sin(azimuth))
    return SceneSpec(
        objects=tuple(objects),
        gravity=gravity,
        ground_height=0.0,
        duration=duration,
        fps=fps,
        rng_seed=int(seed),
        light_direction=light,
        light_lux=float(rng.uniform(*LIGHT_LUX_RANGE)),
        complexity=complexity,
        perturbation=ratio,
    )
