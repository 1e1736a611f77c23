"""Event-driven closed-form rigid-body simulation (translation only).

World frame: y is up, the ground is the plane ``y = ground_height``. Between
events every object moves with constant acceleration, so its state is an
exact quadratic in time. Events are solved analytically:

* ground impact of a falling object (quadratic root);
* a sliding object coming to rest under kinetic friction (linear);
* contact between the bounding spheres of two objects (polynomial root of
  degree <= 4 in the relative motion).

Ground bounce: the normal velocity flips and scales by ``-e``; the tangential
velocity is scaled by ``clamp(1 - mu * (1 + e) |v_n| / |v_t|, 0, 1)``. When the
rebound speed drops below :data:`REST_SPEED` the object settles and slides
with deceleration ``mu * g`` until it stops.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ..errors import InvalidInputError
from .scene import SceneSpec

log = logging.getLogger(__name__)

REST_HEIGHT = 1e-4                      # bounce apex below this counts as settled (m)
TIME_EPS = 1e-12
MAX_EVENTS = 20_000
CONTACT_REL_TOL = 1e-9                  # relative gap below which two bodies count as touching
FRICTION_MODEL = (
    "tangential factor clamp(1 - mu*(1+e)*|v_n|/|v_t|, 0, 1) at ground impact; mu*g sliding deceleration; "
    "a body rebounding off a grounded body slower than the rest speed sticks to it"
)


@dataclass
class Segment:
    """Constant-acceleration piece of a trajectory starting at ``t0``."""

    t0: float
    p0: np.ndarray
    v0: np.ndarray
    a: np.ndarray

    def position(self, t):
        dt = np.asarray(t, dtype=np.float64)[..., None] - self.t0
        return self.p0 + self.v0 * dt + 0.5 * self.a * dt * dt

    def velocity(self, t):
        dt = np.asarray(t, dtype=np.float64)[..., None] - self.t0
        return self.v0 + self.a * dt


@dataclass
class SceneTrace:
    spec: SceneSpec
    timestamps: np.ndarray          # (T,)
    positions: np.ndarray           # (T, N, 3) object centers
    velocities: np.ndarray          # (T, N, 3)
    contact: np.ndarray             # (T, N) contact in (t_{k-1}, t_k] or resting
    segments: list = field(repr=False)    # per object: list[Segment]
    events: list = field(default_factory=list, repr=False)   # (time, kind, objects)
    notes: list = field(default_factory=list)

    @property
    def num_frames(self) -> int:
        return self.timestamps.shape[0]

    @property
    def num_objects(self) -> int:
        return self.positions.shape[1]

    def _segment(self, i: int, t: float) -> Segment:
        segs = self.segments[i]
        starts = [s.t0 for s in segs]
        k = int(np.searchsorted(starts, t, side="right")) - 1
        return segs[max(k, 0)]

    def position_at(self, i: int, t: float) -> np.ndarray:
        """Exact center of object ``i`` at time ``t`` (seconds)."""
        return self._segment(i, t).position(t)

    def velocity_at(self, i: int, t: float) -> np.ndarray:
        return self._segment(i, t).velocity(t)


def _ground_impact_time(h: float, vy: float, g: float) -> float:
    """Time until a body at height ``h`` above contact with vertical speed ``vy`` lands."""
    if h <= 0.0 and vy <= 0.0:
        return 0.0
    if g == 0.0:
        return h / -vy if vy < 0 else np.inf
    root = np.sqrt(vy * vy + 2.0 * g * h)
    # two algebraically equal forms; pick the one without cancellation
    if vy >= 0:
        return (vy + root) / g
    return 2.0 * h / (root - vy)


def _pair_contact_time(dp, dv, da, radius: float) -> float:
    """Earliest t >= 0 with |dp + dv t + da t^2 / 2| = radius while approaching.

    A pair already touching and closing (to first or second order) collides now.
    """
    if dp @ dp <= (radius * (1.0 + CONTACT_REL_TOL)) ** 2:
        rate = dp @ dv
        if rate < 0 or (rate == 0 and dp @ da < 0):
            return 0.0
    A = 0.5 * da
    coeffs = np.array([
        A @ A,
        2.0 * (A @ dv),
        dv @ dv + 2.0 * (A @ dp),
        2.0 * (dv @ dp),
        dp @ dp - radius * radius,
    ])
    scale = np.max(np.abs(coeffs))
    if scale == 0:
        return np.inf
    nz = np.flatnonzero(np.abs(coeffs) > 1e-15 * scale)
    coeffs = coeffs[nz[0]:]
    if coeffs.size < 2:
        return np.inf
    best = np.inf
    for r in np.roots(coeffs):
        if abs(r.imag) > 1e-9 * max(1.0, abs(r.real)):
            continue
        t = r.real
        # polish on the real polynomial
        for _ in range(3):
            f = np.polyval(coeffs, t)
            df = np.polyval(np.polyder(coeffs), t)
            if df == 0:
                break
            t -= f / df
        if t <= TIME_EPS or t >= best:
            continue
        rel_p = dp + dv * t + A * t * t
        rel_v = dv + da * t
        if rel_p @ rel_v < 0:
            best = t
    return best


class _Simulator:
    def __init__(self, spec: SceneSpec):
        self.spec = spec
        self.g = float(spec.gravity)
        objs = spec.objects
        self.n = len(objs)
        self.contact_y = np.array([spec.ground_height + o.bottom_offset for o in objs])
        self.radius = np.array([o.bounding_radius for o in objs])
        self.mass = np.array([o.mass for o in objs])
        self.e = np.array([o.restitution for o in objs])
        self.mu = np.array([o.friction for o in objs])
        self.rest_speed = np.sqrt(2.0 * self.g * REST_HEIGHT) if self.g > 0 else 0.0
        self.t = 0.0
        self.p = np.array([o.position for o in objs], dtype=np.float64).reshape(self.n, 3)
        self.v = np.array([o.velocity for o in objs], dtype=np.float64).reshape(self.n, 3)
        for i in range(self.n):
            if self.p[i, 1] < self.contact_y[i] - 1e-12:
                raise InvalidInputError(
                    f"object {i} starts below the ground (bottom at {self.p[i, 1] - objs[i].bottom_offset:.6g} m)"
                )
        self.grounded = np.zeros(self.n, dtype=bool)
        self.support = np.full(self.n, -1)    # body a perched body is carried by
        for i in range(self.n):
            if self.p[i, 1] <= self.contact_y[i] + 1e-12 and self.v[i, 1] <= 0:
                self._settle(i)
        self.pair_collisions = self.n > 1
        self.events = []
        self.segments = [[] for _ in range(self.n)]
        for i in range(self.n):
            self._start_segment(i)

    def _settle(self, i):
        self.grounded[i] = True
        self.p[i, 1] = self.contact_y[i]
        self.v[i, 1] = 0.0

    def accel(self, i) -> np.ndarray:
        if self.support[i] >= 0:
            return self.accel(self.support[i])
        if not self.grounded[i]:
            return np.array([0.0, -self.g, 0.0])
        vh = np.array([self.v[i, 0], 0.0, self.v[i, 2]])
        speed = np.linalg.norm(vh)
        if speed == 0.0 or self.mu[i] == 0.0 or self.g == 0.0:
            return np.zeros(3)
        return -self.mu[i] * self.g * vh / speed

    def _start_segment(self, i):
        self.segments[i].append(Segment(self.t, self.p[i].copy(), self.v[i].copy(), self.accel(i)))

    def _state_at(self, i, t):
        seg = self.segments[i][-1]
        return seg.position(t), seg.velocity(t)

    def next_event(self):
        best = (np.inf, None, None)
        for i in range(self.n):
            if self.support[i] >= 0:
                continue
            seg = self.segments[i][-1]
            if not self.grounded[i]:
                p, v = self._state_at(i, self.t)
                dt = _ground_impact_time(p[1] - self.contact_y[i], v[1], self.g)
                kind = "ground"
            else:
                a = np.linalg.norm(seg.a)
                if a == 0.0:
                    continue
                _, v = self._state_at(i, self.t)
                dt = np.hypot(v[0], v[2]) / a
                kind = "stop"
            if self.t + dt < best[0]:
                best = (self.t + dt, kind, (i,))
        if self.pair_collisions:
            for i in range(self.n):
                pi, vi = self._state_at(i, self.t)
                ai = self.segments[i][-1].a
                for j in range(i + 1, self.n):
                    if self.support[i] == j or self.support[j] == i:
                        continue
                    pj, vj = self._state_at(j, self.t)
                    aj = self.segments[j][-1].a
                    dt = _pair_contact_time(pj - pi, vj - vi, aj - ai, self.radius[i] + self.radius[j])
                    if self.t + dt < best[0]:
                        best = (self.t + dt, "pair", (i, j))
        return best

    def advance(self, t):
        for i in range(self.n):
            self.p[i], self.v[i] = self._state_at(i, t)
        self.t = t

    def ground_bounce(self, i):
        vy = self.v[i, 1]
        e = self.e[i]
        self.p[i, 1] = self.contact_y[i]
        vt = np.array([self.v[i, 0], self.v[i, 2]])
        speed_t = np.linalg.norm(vt)
        if speed_t > 0:
            factor = np.clip(1.0 - self.mu[i] * (1.0 + e) * abs(vy) / speed_t, 0.0, 1.0)
            self.v[i, 0] *= factor
            self.v[i, 2] *= factor
        self.v[i, 1] = -e * vy
        if self.v[i, 1] <= self.rest_speed:
            self._settle(i)
        self._start_segment(i)

    def stop(self, i):
        self.v[i, 0] = 0.0
        self.v[i, 2] = 0.0
        self._restart(i)

    def _carried(self, k) -> list:
        """Bodies perched on ``k``, directly or through other perched bodies."""
        out = []
        for u in np.flatnonzero(self.support == k):
            out.append(int(u))
            out.extend(self._carried(u))
        return out

    def _restart(self, k):
        self._start_segment(k)
        for u in np.flatnonzero(self.support == k):
            self.v[u] = self.v[k]
            self._restart(u)

    def pair_impulse(self, i, j):
        # an impact frees both bodies and everything they carry
        freed = {i, j}
        for k in (i, j):
            freed.update(self._carried(k))
        for k in freed:
            self.support[k] = -1
        n = self.p[j] - self.p[i]
        n /= np.linalg.norm(n)
        approach = (self.v[i] - self.v[j]) @ n
        if approach > 0:
            e = np.sqrt(self.e[i] * self.e[j])
            dirs, inv = [], []
            for k, sign in ((i, -1.0), (j, 1.0)):
                if self.grounded[k] and sign * n[1] < 0:
                    # the ground absorbs the vertical part of a downward push
                    d = np.array([n[0], 0.0, n[2]])
                    dirs.append(d)
                    inv.append((d @ d) / self.mass[k])
                else:
                    dirs.append(n)
                    inv.append(1.0 / self.mass[k])
            jimp = (1.0 + e) * approach / (inv[0] + inv[1])
            self.v[i] -= jimp / self.mass[i] * dirs[0]
            self.v[j] += jimp / self.mass[j] * dirs[1]
        for k in (i, j):
            if self.grounded[k]:
                if self.v[k, 1] > self.rest_speed:
                    self.grounded[k] = False
                else:
                    self.v[k, 1] = 0.0
        # a slow rebound off a grounded body would repeat without end; stick instead
        separation = (self.v[j] - self.v[i]) @ n
        if separation < self.rest_speed:
            if n[1] > 0 and self.grounded[i] and not self.grounded[j]:
                self.support[j] = i
                self.v[j] = self.v[i]
            elif n[1] < 0 and self.grounded[j] and not self.grounded[i]:
                self.support[i] = j
                self.v[i] = self.v[j]
        for k in sorted(freed):
            self._start_segment(k)

    def run(self, t_end: float):
        count = 0
        while True:
            t_ev, kind, who = self.next_event()
            if t_ev > t_end:
                break
            count += 1
            if count > MAX_EVENTS and self.pair_collisions:
                self.pair_collisions = False
                log.warning("event budget exhausted at t=%.6f; disabling object-object contacts", self.t)
                continue
            if count > 2 * MAX_EVENTS:
                raise RuntimeError("simulation did not converge (event budget exhausted)")
            self.advance(max(t_ev, self.t))
            self.events.append((self.t, kind, who))
            if kind == "ground":
                self.ground_bounce(who[0])
            elif kind == "stop":
                self.stop(who[0])
            else:
                self.pair_impulse(*who)


def simulate(spec: SceneSpec) -> SceneTrace:
    """Simulate ``spec`` and sample object states at every frame time."""
    sim = _Simulator(spec)
    times = spec.frame_times
    sim.run(float(times[-1]))
    T, N = times.size, sim.n
    trace = SceneTrace(
        spec=spec,
        timestamps=times,
        positions=np.zeros((T, N, 3)),
        velocities=np.zeros((T, N, 3)),
        contact=np.zeros((T, N), dtype=bool),
        segments=sim.segments,
        events=sim.events,
    )
    for i in range(N):
        for k, t in enumerate(times):
            trace.positions[k, i] = trace.position_at(i, t)
            trace.velocities[k, i] = trace.velocity_at(i, t)
            # never report a center below its contact height because of rounding
            trace.positions[k, i, 1] = max(trace.positions[k, i, 1], sim.contact_y[i])
    event_times = [(t, who) for t, _, who in sim.events]
    for k, t in enumerate(times):
        lo = times[k - 1] if k > 0 else -np.inf
        for t_ev, who in event_times:
            if lo < t_ev <= t:
                trace.contact[k, list(who)] = True
        for i in range(N):
            if trace.positions[k, i, 1] <= sim.contact_y[i] + 1e-12:
                trace.contact[k, i] = True
    if not sim.pair_collisions and N > 1:
        trace.notes.append("object-object contacts disabled after event budget was exhausted")
    return trace


__all__ = ["Segment", "SceneTrace", "simulate", "FRICTION_MODEL"]
