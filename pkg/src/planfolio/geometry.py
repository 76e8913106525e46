"""Planar collision geometry shared by the generators, planners and encoders.

Boxes are closed sets: touching counts as a collision.  The hot paths
(state validity, motion validation, clearance) run in numba kernels over
flat arrays; the dataclasses here are the public, validated surface.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np
from numba import njit

TWO_PI = 2.0 * math.pi

#: Default edge-validation resolution, in normalized units (fraction of each
#: positional range; angles divided by pi).
DEFAULT_RESOLUTION = 0.005

NAV2D = 0
ARM = 1


class InvalidConfigurationError(ValueError):
    """Configuration has the wrong dimension for the robot."""


def normalize_angle(a: float) -> float:
    """Wrap an angle into (-pi, pi]."""
    r = a + math.pi
    r -= TWO_PI * math.floor(r / TWO_PI)
    r -= math.pi
    if r <= -math.pi:
        r = math.pi
    elif r > math.pi:
        r -= TWO_PI
    return r


@dataclass(frozen=True)
class OrientedBox:
    center: tuple[float, float]
    half_extents: tuple[float, float]
    angle: float = 0.0

    def __post_init__(self):
        cx, cy = (float(v) for v in self.center)
        hx, hy = (float(v) for v in self.half_extents)
        if not (hx > 0 and hy > 0):
            raise ValueError(f"half extents must be positive, got {(hx, hy)}")
        if not all(math.isfinite(v) for v in (cx, cy, hx, hy, self.angle)):
            raise ValueError("box fields must be finite")
        object.__setattr__(self, "center", (cx, cy))
        object.__setattr__(self, "half_extents", (hx, hy))
        object.__setattr__(self, "angle", normalize_angle(float(self.angle)))

    @property
    def width(self) -> float:
        return 2.0 * self.half_extents[0]

    @property
    def height(self) -> float:
        return 2.0 * self.half_extents[1]

    def row(self) -> np.ndarray:
        """Kernel layout: [cx, cy, hx, hy, cos, sin]."""
        return np.array([*self.center, *self.half_extents,
                         math.cos(self.angle), math.sin(self.angle)])

    def corners(self) -> np.ndarray:
        c, s = math.cos(self.angle), math.sin(self.angle)
        hx, hy = self.half_extents
        local = np.array([[hx, hy], [-hx, hy], [-hx, -hy], [hx, -hy]])
        rot = np.array([[c, -s], [s, c]])
        return local @ rot.T + np.asarray(self.center)

    def aabb_extents(self) -> tuple[float, float]:
        """Full width/height of the axis-aligned bounding box."""
        c, s = abs(math.cos(self.angle)), abs(math.sin(self.angle))
        hx, hy = self.half_extents
        return 2 * (hx * c + hy * s), 2 * (hx * s + hy * c)

    def to_dict(self) -> dict:
        return {"center": list(self.center), "half_extents": list(self.half_extents),
                "angle": self.angle}

    @classmethod
    def from_dict(cls, d: dict) -> "OrientedBox":
        return cls(tuple(d["center"]), tuple(d["half_extents"]), d["angle"])


@dataclass(frozen=True)
class Workspace:
    """Axis-aligned bounds; for the block robot these bound its center."""

    lo: tuple[float, float] = (0.0, 0.0)
    hi: tuple[float, float] = (0.9, 0.9)

    def to_dict(self) -> dict:
        return {"lo": list(self.lo), "hi": list(self.hi)}

    @classmethod
    def from_dict(cls, d: dict) -> "Workspace":
        return cls(tuple(d["lo"]), tuple(d["hi"]))


@dataclass(frozen=True)
class BlockRobot:
    half_extents: tuple[float, float] = (0.025, 0.025)

    kind = "nav2d"

    @property
    def dof(self) -> int:
        return 3

    def to_dict(self) -> dict:
        return {"type": "block", "half_extents": list(self.half_extents)}


@dataclass(frozen=True)
class ArmSpec:
    base: tuple[float, float]
    link_lengths: tuple[float, ...]
    link_widths: tuple[float, ...]

    kind = "arm"

    def __post_init__(self):
        object.__setattr__(self, "base", tuple(float(v) for v in self.base))
        object.__setattr__(self, "link_lengths", tuple(float(v) for v in self.link_lengths))
        object.__setattr__(self, "link_widths", tuple(float(v) for v in self.link_widths))
        if not self.link_lengths or len(self.link_lengths) != len(self.link_widths):
            raise ValueError("link_lengths and link_widths need equal, nonzero length")
        if min(self.link_lengths) <= 0 or min(self.link_widths) <= 0:
            raise ValueError("link dimensions must be positive")

    @property
    def dof(self) -> int:
        return len(self.link_lengths)

    @property
    def reach(self) -> float:
        return sum(self.link_lengths)

    def to_dict(self) -> dict:
        return {"type": "arm", "base": list(self.base),
                "link_lengths": list(self.link_lengths),
                "link_widths": list(self.link_widths)}


Robot = Union[BlockRobot, ArmSpec]


def robot_from_dict(d: dict) -> Robot:
    if d["type"] == "block":
        return BlockRobot(tuple(d["half_extents"]))
    if d["type"] == "arm":
        return ArmSpec(tuple(d["base"]), tuple(d["link_lengths"]), tuple(d["link_widths"]))
    raise ValueError(f"unknown robot type {d['type']!r}")


# ---------------------------------------------------------------------------
# numba kernels; boxes are rows [cx, cy, hx, hy, cos, sin]


@njit(cache=True)
def _wrap(a):
    r = a + math.pi
    r -= 2.0 * math.pi * math.floor(r / (2.0 * math.pi))
    r -= math.pi
    if r <= -math.pi:
        r = math.pi
    elif r > math.pi:
        r -= 2.0 * math.pi
    return r


@njit(cache=True)
def _proj_radius(hx, hy, c, s, lx, ly):
    return hx * abs(c * lx + s * ly) + hy * abs(-s * lx + c * ly)


@njit(cache=True)
def _sat(ax, ay, ahx, ahy, ac, as_, bx, by, bhx, bhy, bc, bs):
    dx = bx - ax
    dy = by - ay
    for k in range(4):
        if k == 0:
            lx, ly = ac, as_
        elif k == 1:
            lx, ly = -as_, ac
        elif k == 2:
            lx, ly = bc, bs
        else:
            lx, ly = -bs, bc
        dist = abs(dx * lx + dy * ly)
        ra = _proj_radius(ahx, ahy, ac, as_, lx, ly)
        rb = _proj_radius(bhx, bhy, bc, bs, lx, ly)
        if dist > ra + rb:
            return False
    return True


@njit(cache=True)
def _sat_rows(a, b):
    return _sat(a[0], a[1], a[2], a[3], a[4], a[5], b[0], b[1], b[2], b[3], b[4], b[5])


@njit(cache=True)
def _arm_rows(q, base, lengths, widths, out):
    px = base[0]
    py = base[1]
    phi = 0.0
    for i in range(q.shape[0]):
        phi = phi + q[i]
        c = math.cos(phi)
        s = math.sin(phi)
        half = 0.5 * lengths[i]
        out[i, 0] = px + half * c
        out[i, 1] = py + half * s
        out[i, 2] = half
        out[i, 3] = 0.5 * widths[i]
        out[i, 4] = c
        out[i, 5] = s
        px += lengths[i] * c
        py += lengths[i] * s


@njit(cache=True)
def _state_valid(kind, q, obs, block, lo, hi, base, lengths, widths, links):
    if kind == 0:
        x = q[0]
        y = q[1]
        if x < lo[0] or x > hi[0] or y < lo[1] or y > hi[1]:
            return False
        c = math.cos(q[2])
        s = math.sin(q[2])
        for j in range(obs.shape[0]):
            if _sat(x, y, block[0], block[1], c, s,
                    obs[j, 0], obs[j, 1], obs[j, 2], obs[j, 3], obs[j, 4], obs[j, 5]):
                return False
        return True
    n = q.shape[0]
    _arm_rows(q, base, lengths, widths, links)
    for i in range(n):
        cx = links[i, 0]
        cy = links[i, 1]
        ex = links[i, 2] * abs(links[i, 4]) + links[i, 3] * abs(links[i, 5])
        ey = links[i, 2] * abs(links[i, 5]) + links[i, 3] * abs(links[i, 4])
        if cx - ex < lo[0] or cx + ex > hi[0] or cy - ey < lo[1] or cy + ey > hi[1]:
            return False
    for i in range(n):
        for j in range(obs.shape[0]):
            if _sat_rows(links[i], obs[j]):
                return False
    for i in range(n):
        for j in range(i + 2, n):
            if _sat_rows(links[i], links[j]):
                return False
    return True


@njit(cache=True)
def _motion_valid(kind, q0, q1, spans, angular, res, check_start,
                  obs, block, lo, hi, base, lengths, widths, links):
    """Return (valid, states_checked).  Sample counts are powers of two so a
    finer resolution always checks a superset of the coarser samples."""
    n = q0.shape[0]
    d = np.empty(n)
    worst = 0.0
    for i in range(n):
        di = q1[i] - q0[i]
        if angular[i]:
            di = _wrap(di)
        d[i] = di
        r = abs(di) / spans[i]
        if r > worst:
            worst = r
    checks = 0
    if check_start:
        checks += 1
        if not _state_valid(kind, q0, obs, block, lo, hi, base, lengths, widths, links):
            return False, checks
    checks += 1
    if not _state_valid(kind, q1, obs, block, lo, hi, base, lengths, widths, links):
        return False, checks
    nseg = 1
    while worst / nseg > res:
        nseg *= 2
    q = np.empty(n)
    step = nseg
    while step > 1:
        half = step // 2
        k = half
        while k < nseg:
            t = k / nseg
            for i in range(n):
                v = q0[i] + t * d[i]
                if angular[i]:
                    v = _wrap(v)
                q[i] = v
            checks += 1
            if not _state_valid(kind, q, obs, block, lo, hi, base, lengths, widths, links):
                return False, checks
            k += step
        step = half
    return True, checks


@njit(cache=True)
def _point_box_distance(px, py, b):
    dx = px - b[0]
    dy = py - b[1]
    lx = dx * b[4] + dy * b[5]
    ly = -dx * b[5] + dy * b[4]
    ox = max(abs(lx) - b[2], 0.0)
    oy = max(abs(ly) - b[3], 0.0)
    return math.sqrt(ox * ox + oy * oy)


@njit(cache=True)
def _clearance(kind, q, obs, base, lengths, widths, links):
    best = 1.0
    if kind == 0:
        for j in range(obs.shape[0]):
            dd = _point_box_distance(q[0], q[1], obs[j])
            if dd < best:
                best = dd
        return best
    _arm_rows(q, base, lengths, widths, links)
    for i in range(q.shape[0]):
        for j in range(obs.shape[0]):
            dd = _point_box_distance(links[i, 0], links[i, 1], obs[j])
            if dd < best:
                best = dd
    return best


# ---------------------------------------------------------------------------
# public API


def boxes_intersect(a: OrientedBox, b: OrientedBox) -> bool:
    """Exact closed-set overlap test by separating axes."""
    return bool(_sat_rows(a.row(), b.row()))


def separation_margin(a: OrientedBox, b: OrientedBox) -> float:
    """Largest projected gap over the four candidate axes.

    Positive means separated by at least that much; negative is minus the
    smallest overlap depth.
    """
    ra, rb = a.row(), b.row()
    d = rb[:2] - ra[:2]
    best = -math.inf
    for axis in (ra[4:6], np.array([-ra[5], ra[4]]), rb[4:6], np.array([-rb[5], rb[4]])):
        dist = abs(d @ axis)
        pa = ra[2] * abs(ra[4] * axis[0] + ra[5] * axis[1]) + ra[3] * abs(-ra[5] * axis[0] + ra[4] * axis[1])
        pb = rb[2] * abs(rb[4] * axis[0] + rb[5] * axis[1]) + rb[3] * abs(-rb[5] * axis[0] + rb[4] * axis[1])
        best = max(best, dist - pa - pb)
    return best


def forward_kinematics(spec: ArmSpec, q: Sequence[float]) -> list[OrientedBox]:
    q = np.asarray(q, dtype=float)
    if q.shape != (spec.dof,):
        raise InvalidConfigurationError(f"expected {spec.dof} joints, got shape {q.shape}")
    boxes = []
    px, py = spec.base
    phi = 0.0
    for qi, length, width in zip(q, spec.link_lengths, spec.link_widths):
        phi += qi
        c, s = math.cos(phi), math.sin(phi)
        boxes.append(OrientedBox((px + 0.5 * length * c, py + 0.5 * length * s),
                                 (0.5 * length, 0.5 * width), phi))
        px += length * c
        py += length * s
    return boxes


def end_effector(spec: ArmSpec, q: Sequence[float]) -> tuple[float, float]:
    px, py = spec.base
    phi = 0.0
    for qi, length in zip(q, spec.link_lengths):
        phi += qi
        px += length * math.cos(phi)
        py += length * math.sin(phi)
    return px, py


class CollisionChecker:
    """Flat-array view of one problem, reused across many queries."""

    def __init__(self, robot: Robot, obstacles: Sequence[OrientedBox], workspace: Workspace):
        self.robot = robot
        self.obs = (np.array([b.row() for b in obstacles]) if obstacles
                    else np.zeros((0, 6)))
        self.lo = np.array(workspace.lo, dtype=float)
        self.hi = np.array(workspace.hi, dtype=float)
        if isinstance(robot, ArmSpec):
            self.kind = ARM
            n = robot.dof
            self.block = np.zeros(2)
            self.base = np.array(robot.base, dtype=float)
            self.lengths = np.array(robot.link_lengths, dtype=float)
            self.widths = np.array(robot.link_widths, dtype=float)
            self.links = np.zeros((n, 6))
            self.spans = np.full(n, math.pi)
            self.angular = np.ones(n, dtype=np.bool_)
            # box-pair tests per state: link/obstacle plus non-adjacent link pairs
            self.pairs_per_state = n * len(self.obs) + (n - 1) * (n - 2) // 2
        else:
            self.kind = NAV2D
            n = 3
            self.block = np.array(robot.half_extents, dtype=float)
            self.base = np.zeros(2)
            self.lengths = np.zeros(0)
            self.widths = np.zeros(0)
            self.links = np.zeros((0, 6))
            self.spans = np.array([self.hi[0] - self.lo[0], self.hi[1] - self.lo[1], math.pi])
            self.angular = np.array([False, False, True])
            self.pairs_per_state = len(self.obs)
        self.dof = n
        self.pairs_per_state = max(self.pairs_per_state, 1)

    @classmethod
    def for_problem(cls, problem) -> "CollisionChecker":
        return cls(problem.robot, problem.obstacles, problem.workspace)

    def _vec(self, q) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        if q.shape != (self.dof,):
            raise InvalidConfigurationError(
                f"configuration must have shape ({self.dof},), got {q.shape}")
        return q

    def is_valid(self, q) -> bool:
        return bool(_state_valid(self.kind, self._vec(q), self.obs, self.block, self.lo,
                                 self.hi, self.base, self.lengths, self.widths, self.links))

    def motion(self, q0, q1, resolution: float = DEFAULT_RESOLUTION,
               check_start: bool = True) -> tuple[bool, int]:
        ok, checks = _motion_valid(self.kind, q0, q1, self.spans, self.angular, resolution,
                                   check_start, self.obs, self.block, self.lo, self.hi,
                                   self.base, self.lengths, self.widths, self.links)
        return bool(ok), int(checks)

    def clearance(self, q) -> float:
        return float(_clearance(self.kind, q, self.obs, self.base, self.lengths,
                                self.widths, self.links))

    def robot_boxes(self, q) -> list[OrientedBox]:
        q = self._vec(q)
        if self.kind == ARM:
            return forward_kinematics(self.robot, q)
        return [OrientedBox((q[0], q[1]), self.robot.half_extents, q[2])]


def config_collides(problem, q) -> bool:
    """True iff the robot at `q` hits an obstacle, itself, or the bounds."""
    return not CollisionChecker.for_problem(problem).is_valid(q)


def motion_valid(problem, q0, q1, resolution: float = DEFAULT_RESOLUTION) -> bool:
    checker = CollisionChecker.for_problem(problem)
    q0, q1 = checker._vec(q0), checker._vec(q1)
    return checker.motion(q0, q1, resolution)[0]


def interpolate(q0, q1, t: float, angular) -> np.ndarray:
    """Linear in positions, shortest arc in angles (a pi tie goes positive)."""
    q0 = np.asarray(q0, dtype=float)
    d = np.asarray(q1, dtype=float) - q0
    angular = np.asarray(angular, dtype=bool)
    d[angular] = [normalize_angle(v) for v in d[angular]]
    out = q0 + t * d
    out[angular] = [normalize_angle(v) for v in out[angular]]
    return out
