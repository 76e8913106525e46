"""State space, search tree, randomness and clocks shared by the planners."""
from __future__ import annotations

import enum
import math
import time
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from numba import njit

from ..env_gen import derive_seed, make_rng
from ..geometry import DEFAULT_RESOLUTION, NAV2D, CollisionChecker, _wrap


class PlannerId(str, enum.Enum):
    RRT = "RRT"
    RRTConnect = "RRTConnect"
    TRRT = "TRRT"
    LazyRRT = "LazyRRT"

    @classmethod
    def parse(cls, name: str) -> "PlannerId":
        for p in cls:
            if p.value.lower() == name.strip().lower():
                return p
        raise ValueError(f"unknown planner {name!r}; choose from {[p.value for p in cls]}")


#: Tie-break order used when expected times are equal.
TIE_ORDER = (PlannerId.RRTConnect, PlannerId.RRT, PlannerId.TRRT, PlannerId.LazyRRT)


class Outcome(str, enum.Enum):
    Solved = "Solved"
    Timeout = "Timeout"


class PlannerPreconditionError(ValueError):
    """Start or goal configuration is invalid."""


@dataclass(frozen=True)
class PlannerParams:
    step_size: float = 0.05          # fraction of the state-space extent
    goal_bias: float = 0.05
    timeout: float = 3.0             # seconds on the selected clock
    trrt_temp_init: float = 1.0
    trrt_temp_rate: float = 1.1
    rng_seed: int = 0
    resolution: float = DEFAULT_RESOLUTION
    clock: str = "work"              # "work" (deterministic) or "wall"

    def __post_init__(self):
        if not 0.0 <= self.goal_bias < 1.0:
            raise ValueError("goal_bias must be in [0, 1)")
        if not self.timeout > 0:
            raise ValueError("timeout must be positive")
        if not self.step_size > 0:
            raise ValueError("step_size must be positive")
        if self.trrt_temp_init <= 0 or self.trrt_temp_rate <= 0:
            raise ValueError("TRRT temperature parameters must be positive")
        if self.clock not in ("work", "wall"):
            raise ValueError(f"unknown clock {self.clock!r}")

    def for_trial(self, i: int) -> "PlannerParams":
        return replace(self, rng_seed=derive_seed(self.rng_seed, i))


@dataclass
class PlanResult:
    outcome: Outcome
    time: float                      # seconds on the configured clock
    wall_time: float
    iterations: int
    path: Optional[list[tuple[float, ...]]] = None
    work_units: float = 0.0
    counts: dict = field(default_factory=dict)

    @property
    def solved(self) -> bool:
        return self.outcome is Outcome.Solved


# ---------------------------------------------------------------------------
# clocks

# Work-clock prices in abstract units; one unit ~ one box/box separation test.
PAIR_TEST_UNITS = 1.0
ITERATION_UNITS = 2.0
NN_UNITS_PER_LEVEL = 1.0
CLEARANCE_UNITS_PER_OBSTACLE = 1.0
#: Virtual seconds per work unit.
SECONDS_PER_UNIT = 1e-5


class WorkClock:
    """Deterministic clock: elapsed time is a priced count of primitive operations."""

    name = "work"

    def __init__(self, pairs_per_state: int, n_obstacles: int):
        self.pairs_per_state = pairs_per_state
        self.n_obstacles = max(n_obstacles, 1)
        self.units = 0.0
        self.counts = {"states": 0, "nearest": 0, "iterations": 0, "clearance": 0}

    def states(self, n: int) -> None:
        self.counts["states"] += n
        self.units += n * self.pairs_per_state * PAIR_TEST_UNITS

    def nearest(self, tree_size: int) -> None:
        self.counts["nearest"] += 1
        self.units += NN_UNITS_PER_LEVEL * math.log2(tree_size + 1)

    def iteration(self) -> None:
        self.counts["iterations"] += 1
        self.units += ITERATION_UNITS

    def clearance(self, n_bodies: int = 1) -> None:
        self.counts["clearance"] += 1
        self.units += CLEARANCE_UNITS_PER_OBSTACLE * self.n_obstacles * n_bodies

    def elapsed(self) -> float:
        return self.units * SECONDS_PER_UNIT


class WallClock(WorkClock):
    """Monotonic wall time; operation counts are still tallied for reporting."""

    name = "wall"

    def __init__(self, pairs_per_state: int, n_obstacles: int):
        super().__init__(pairs_per_state, n_obstacles)
        self.t0 = time.perf_counter()

    def elapsed(self) -> float:
        return time.perf_counter() - self.t0


def make_clock(name: str, checker: CollisionChecker):
    cls = WorkClock if name == "work" else WallClock
    return cls(checker.pairs_per_state, len(checker.obs))


# ---------------------------------------------------------------------------
# randomness


class RandomStream:
    """Uniform [0, 1) draws served from seeded blocks."""

    def __init__(self, seed: int, block: int = 4096):
        self._rng = make_rng(seed)
        self._block = block
        self._buf = self._rng.random(block)
        self._i = 0

    def next(self) -> float:
        if self._i >= self._block:
            self._buf = self._rng.random(self._block)
            self._i = 0
        v = self._buf[self._i]
        self._i += 1
        return float(v)

    def take(self, n: int) -> np.ndarray:
        if self._i + n > self._block:
            self._buf = np.concatenate([self._buf[self._i:], self._rng.random(self._block)])
            self._block = self._buf.shape[0]
            self._i = 0
        out = self._buf[self._i:self._i + n]
        self._i += n
        return out


# ---------------------------------------------------------------------------
# state space


@njit(cache=True)
def _adiff(d):
    """Wrap a difference of two angles already in (-pi, pi]."""
    if d > math.pi:
        return d - 2.0 * math.pi
    if d <= -math.pi:
        return d + 2.0 * math.pi
    return d


@njit(cache=True)
def _dist(a, b, w, angular):
    s = 0.0
    for j in range(a.shape[0]):
        d = a[j] - b[j]
        if angular[j]:
            d = _adiff(d)
        d *= w[j]
        s += d * d
    return math.sqrt(s)


@njit(cache=True)
def _nearest(nodes, n, alive, q, w, angular):
    best = -1
    bd = np.inf
    for i in range(n):
        if not alive[i]:
            continue
        s = 0.0
        for j in range(q.shape[0]):
            d = nodes[i, j] - q[j]
            if angular[j]:
                d = _adiff(d)
            d *= w[j]
            s += d * d
        if s < bd:
            bd = s
            best = i
    return best, math.sqrt(bd)


@njit(cache=True)
def _steer(a, b, dist, step, angular):
    """Move from a toward b by at most `step` (weighted metric)."""
    out = np.empty(a.shape[0])
    if dist <= step:
        for j in range(a.shape[0]):
            out[j] = b[j]
        return out, True
    t = step / dist
    for j in range(a.shape[0]):
        d = b[j] - a[j]
        if angular[j]:
            d = _adiff(d)
        v = a[j] + t * d
        if angular[j]:
            v = _wrap(v)
        out[j] = v
    return out, False


@njit(cache=True)
def _sample(u, lo, hi, angular):
    q = np.empty(u.shape[0])
    for j in range(u.shape[0]):
        v = lo[j] + u[j] * (hi[j] - lo[j])
        if angular[j]:
            v = _wrap(v)
        q[j] = v
    return q


class StateSpace:
    """Bounds, sampling and weighted metric for one problem's robot."""

    ANGLE_WEIGHT = 0.3  # a half-turn counts as 0.3x the positional range

    def __init__(self, checker: CollisionChecker):
        self.dof = checker.dof
        self.angular = checker.angular.copy()
        if checker.kind == NAV2D:
            self.lo = np.array([checker.lo[0], checker.lo[1], -math.pi])
            self.hi = np.array([checker.hi[0], checker.hi[1], math.pi])
            pos_range = max(checker.hi - checker.lo)
            self.weights = np.array([1.0, 1.0, self.ANGLE_WEIGHT * pos_range / math.pi])
            spans = np.array([checker.hi[0] - checker.lo[0], checker.hi[1] - checker.lo[1], math.pi])
        else:
            self.lo = np.full(self.dof, -math.pi)
            self.hi = np.full(self.dof, math.pi)
            self.weights = np.ones(self.dof)
            spans = np.full(self.dof, math.pi)
        self.extent = float(np.sqrt(np.sum((self.weights * spans) ** 2)))

    def sample(self, stream: RandomStream) -> np.ndarray:
        return _sample(stream.take(self.dof), self.lo, self.hi, self.angular)

    def distance(self, a, b) -> float:
        return float(_dist(a, b, self.weights, self.angular))


class Tree:
    """Growable array-backed tree with an `alive` mask for pruning."""

    def __init__(self, root: np.ndarray, space: StateSpace, capacity: int = 1024):
        d = root.shape[0]
        self.space = space
        self.nodes = np.empty((capacity, d))
        self.parent = np.full(capacity, -1, dtype=np.int64)
        self.alive = np.zeros(capacity, dtype=np.bool_)
        self.cost = np.zeros(capacity)
        self.edge_checked = np.zeros(capacity, dtype=np.bool_)
        self.children: list[list[int]] = []
        self.n = 0
        self.n_alive = 0
        self.add(root, -1)
        self.edge_checked[0] = True

    def _grow(self):
        cap = 2 * self.nodes.shape[0]
        for name in ("nodes", "parent", "alive", "cost", "edge_checked"):
            old = getattr(self, name)
            new = np.empty((cap,) + old.shape[1:], dtype=old.dtype)
            new[: self.n] = old[: self.n]
            setattr(self, name, new)

    def add(self, q: np.ndarray, parent: int, cost: float = 0.0) -> int:
        if self.n == self.nodes.shape[0]:
            self._grow()
        i = self.n
        self.nodes[i] = q
        self.parent[i] = parent
        self.alive[i] = True
        self.cost[i] = cost
        self.edge_checked[i] = False
        self.children.append([])
        if parent >= 0:
            self.children[parent].append(i)
        self.n += 1
        self.n_alive += 1
        return i

    def nearest(self, q: np.ndarray) -> tuple[int, float]:
        i, d = _nearest(self.nodes, self.n, self.alive, q, self.space.weights, self.space.angular)
        return int(i), float(d)

    def steer(self, near: int, q: np.ndarray, dist: float, step: float):
        out, reached = _steer(self.nodes[near], q, dist, step, self.space.angular)
        return out, bool(reached)

    def path_to(self, i: int) -> list[int]:
        out = []
        while i >= 0:
            out.append(i)
            i = int(self.parent[i])
        return out[::-1]

    def prune(self, i: int) -> None:
        """Remove node `i` and its whole subtree."""
        stack = [i]
        while stack:
            j = stack.pop()
            if self.alive[j]:
                self.alive[j] = False
                self.n_alive -= 1
            stack.extend(self.children[j])
            self.children[j] = []
        p = int(self.parent[i])
        if p >= 0 and i in self.children[p]:
            self.children[p].remove(i)


@dataclass
class SearchContext:
    """Everything a planner loop needs for one run."""

    checker: CollisionChecker
    space: StateSpace
    params: PlannerParams
    start: np.ndarray
    goal: np.ndarray
    stream: RandomStream = field(init=False)
    clock: WorkClock = field(init=False)
    step: float = field(init=False)

    def __post_init__(self):
        self.stream = RandomStream(self.params.rng_seed)
        self.clock = make_clock(self.params.clock, self.checker)
        self.step = self.params.step_size * self.space.extent

    def expired(self) -> bool:
        return self.clock.elapsed() > self.params.timeout

    def sample(self, goal_bias: float) -> tuple[np.ndarray, bool]:
        if goal_bias > 0 and self.stream.next() < goal_bias:
            return self.goal, True
        return self.space.sample(self.stream), False

    def motion(self, q0, q1) -> bool:
        ok, checks = self.checker.motion(q0, q1, self.params.resolution, check_start=False)
        self.clock.states(checks)
        return ok
