"""plan(), the repeated-trial runtime harness, and fastest-planner labels."""
from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Union

import numpy as np

from ..geometry import CollisionChecker
from .algorithms import lazy_rrt, rrt, rrt_connect, trrt
from .core import (TIE_ORDER, Outcome, PlannerId, PlannerParams, PlannerPreconditionError,
                   PlanResult, SearchContext, StateSpace)

_ALGORITHMS = {
    PlannerId.RRT: rrt,
    PlannerId.RRTConnect: rrt_connect,
    PlannerId.TRRT: trrt,
    PlannerId.LazyRRT: lazy_rrt,
}


def plan(problem, planner: Union[PlannerId, str], params: PlannerParams = PlannerParams()) -> PlanResult:
    planner = PlannerId.parse(planner) if isinstance(planner, str) else planner
    checker = CollisionChecker.for_problem(problem)
    start = np.array(problem.start, dtype=float)
    goal = np.array(problem.goal, dtype=float)
    if not checker.is_valid(start):
        raise PlannerPreconditionError(f"{problem.id}: start configuration is invalid")
    if not checker.is_valid(goal):
        raise PlannerPreconditionError(f"{problem.id}: goal configuration is invalid")
    ctx = SearchContext(checker, StateSpace(checker), params, start, goal)
    t0 = time.perf_counter()
    solved, path, iterations = _ALGORITHMS[planner](ctx)
    wall = time.perf_counter() - t0
    return PlanResult(
        outcome=Outcome.Solved if solved else Outcome.Timeout,
        time=ctx.clock.elapsed(),
        wall_time=wall,
        iterations=iterations,
        path=[tuple(float(v) for v in q) for q in path] if solved else None,
        work_units=ctx.clock.units,
        counts=dict(ctx.clock.counts),
    )


@dataclass
class RuntimeRecord:
    problem_id: str
    planner: PlannerId
    trials: list[tuple[str, float]]
    timeout: float
    clock: str = "work"
    wall_times: list[float] = field(default_factory=list)

    @property
    def timeout_count(self) -> int:
        return sum(1 for o, _ in self.trials if o == Outcome.Timeout.value)

    @property
    def expected_time(self) -> float:
        """Mean trial time; a timed-out trial counts as exactly the timeout."""
        vals = [self.timeout if o == Outcome.Timeout.value else t for o, t in self.trials]
        return float(np.mean(vals))

    def to_dict(self) -> dict:
        return {
            "problem_id": self.problem_id,
            "planner": self.planner.value,
            "trials": [[o, t] for o, t in self.trials],
            "expected_time": self.expected_time,
            "timeout_count": self.timeout_count,
            "timeout": self.timeout,
            "clock": self.clock,
            "wall_time": self.wall_times,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "RuntimeRecord":
        return cls(
            problem_id=d["problem_id"],
            planner=PlannerId.parse(d["planner"]),
            trials=[(o, float(t)) for o, t in d["trials"]],
            timeout=float(d["timeout"]),
            clock=d.get("clock", "work"),
            wall_times=list(d.get("wall_time", [])),
        )


def measure(problem, planner: Union[PlannerId, str], trials: int = 40,
            params: PlannerParams = PlannerParams()) -> RuntimeRecord:
    """Run `trials` independently seeded plans and summarize them."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    planner = PlannerId.parse(planner) if isinstance(planner, str) else planner
    out, walls = [], []
    for i in range(trials):
        res = plan(problem, planner, params.for_trial(i))
        t = params.timeout if res.outcome is Outcome.Timeout else res.time
        out.append((res.outcome.value, float(t)))
        walls.append(res.wall_time)
    return RuntimeRecord(problem.id, planner, out, params.timeout, params.clock, walls)


def label_fastest(records: Union[Mapping[PlannerId, RuntimeRecord], Iterable[RuntimeRecord]]) -> PlannerId:
    """argmin of expected time; ties resolved by TIE_ORDER."""
    if isinstance(records, Mapping):
        recs = {PlannerId(k): v for k, v in records.items()}
    else:
        recs = {r.planner: r for r in records}
    missing = [p.value for p in PlannerId if p not in recs]
    if missing:
        raise KeyError(f"missing planner records: {missing}")
    return min(TIE_ORDER, key=lambda p: (recs[p].expected_time, TIE_ORDER.index(p)))


def expected_times(records: Mapping[PlannerId, RuntimeRecord]) -> dict[PlannerId, float]:
    return {p: r.expected_time for p, r in records.items()}


def read_labels(path) -> list[RuntimeRecord]:
    out = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(RuntimeRecord.from_dict(json.loads(line)))
    return out


def index_labels(records: Iterable[RuntimeRecord]) -> dict[str, dict[PlannerId, RuntimeRecord]]:
    table: dict[str, dict[PlannerId, RuntimeRecord]] = {}
    for r in records:
        table.setdefault(r.problem_id, {})[r.planner] = r
    return table
