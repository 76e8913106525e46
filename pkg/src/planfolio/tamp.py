"""Chaining navigation problems under (x-segment, quadrant) matching rules.

A triple (p1, p2, p3) is valid for an instance when p1 starts in the
instance's initial cell, each element ends in the cell the next one starts
in, and p3 ends in the terminal cell.  Only x and the heading are matched;
y is free.
"""
from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .env_gen import make_rng
from .planners import PlannerId
from .predict import (ExperimentError, Predictor, PredictorReport, _choose, _expected,
                      _tie_rng)

N_SEGMENTS = 9
SEGMENT_WIDTH = 0.1
X_MAX = 0.9
MAX_REDRAWS = 1000


class TampError(RuntimeError):
    """No valid instance could be drawn within the retry budget."""


@dataclass(frozen=True, order=True)
class SegmentQuadrant:
    x_segment: int
    quadrant: int

    def __post_init__(self):
        if not (0 <= self.x_segment < N_SEGMENTS and 0 <= self.quadrant < 4):
            raise ValueError(f"out of range: {self}")


def classify_endpoint(config) -> SegmentQuadrant:
    """x in [0, 0.9] -> one of 9 segments (the last one closed); heading -> quadrant,
    with theta = pi folded into the top quadrant."""
    x, theta = float(config[0]), float(config[2])
    if not 0.0 <= x <= X_MAX:
        raise ValueError(f"x={x} outside [0, {X_MAX}]")
    # tolerate representation error right at a segment boundary (0.7 / 0.1 = 6.999...)
    seg = min(int(math.floor(x / SEGMENT_WIDTH + 1e-9)), N_SEGMENTS - 1)
    if not -math.pi < theta <= math.pi:
        raise ValueError(f"theta={theta} outside (-pi, pi]")
    quad = min(int(math.floor((theta + math.pi) / (0.5 * math.pi))), 3)
    return SegmentQuadrant(seg, quad)


@dataclass(frozen=True)
class Element:
    problem_id: str
    start: SegmentQuadrant
    goal: SegmentQuadrant


@dataclass(frozen=True)
class TampInstance:
    initial: SegmentQuadrant
    terminal: SegmentQuadrant


@dataclass(frozen=True)
class Triple:
    elements: tuple[Element, Element, Element]

    @property
    def ids(self) -> tuple[str, str, str]:
        return tuple(e.problem_id for e in self.elements)

    def satisfies(self, instance: TampInstance) -> bool:
        a, b, c = self.elements
        return (a.start == instance.initial and a.goal == b.start and b.goal == c.start
                and c.goal == instance.terminal)


def make_pool(problems) -> list[Element]:
    return [Element(p.id, classify_endpoint(p.start), classify_endpoint(p.goal))
            for p in problems]


def enumerate_triples(instance: TampInstance, pool: Sequence[Element],
                      distinct: bool = True) -> list[Triple]:
    """All ordered triples meeting the chaining rules, sorted by problem ids."""
    by_start = defaultdict(list)
    for e in pool:
        by_start[e.start].append(e)
    out = []
    for a in by_start.get(instance.initial, ()):
        for b in by_start.get(a.goal, ()):
            if distinct and b.problem_id == a.problem_id:
                continue
            for c in by_start.get(b.goal, ()):
                if c.goal != instance.terminal:
                    continue
                if distinct and c.problem_id in (a.problem_id, b.problem_id):
                    continue
                out.append(Triple((a, b, c)))
    out.sort(key=lambda t: t.ids)
    for t in out:
        assert t.satisfies(instance)
    return out


def draw_instance(pool: Sequence[Element], rng: np.random.Generator,
                  max_redraws: int = MAX_REDRAWS, distinct: bool = True):
    """Draw initial/terminal cells from those realized in the pool until at
    least one valid triple exists."""
    starts = sorted({e.start for e in pool})
    goals = sorted({e.goal for e in pool})
    for _ in range(max_redraws):
        inst = TampInstance(starts[rng.integers(len(starts))], goals[rng.integers(len(goals))])
        triples = enumerate_triples(inst, pool, distinct)
        if triples:
            return inst, triples
    raise TampError(f"no instance with a valid triple after {max_redraws} draws")


def _slot_greedy(triples: list[Triple], est: dict[str, float]) -> int:
    """Alternative policy: fix the cheapest first element, then the cheapest
    continuation, and so on."""
    remaining = list(range(len(triples)))
    for slot in range(3):
        best = min(est[triples[i].ids[slot]] for i in remaining)
        remaining = [i for i in remaining if est[triples[i].ids[slot]] == best]
    return remaining[0]


def tamp_experiment(problems, predictors: Sequence[Predictor], table, iterations: int = 100,
                    seed: int = 0, planner: PlannerId = PlannerId.RRTConnect,
                    policy: str = "triple", distinct: bool = True,
                    max_redraws: int = MAX_REDRAWS) -> PredictorReport:
    """Per iteration draw an instance, let every predictor pick a triple, and
    add up the recorded expected times of the picked triples."""
    if not problems:
        raise ExperimentError("empty pool")
    if policy not in ("triple", "slot"):
        raise ValueError(f"unknown policy {policy!r}")
    pool = make_pool(problems)
    truth = {p.id: _expected(table, p.id, planner) for p in problems}
    estimates = {}
    for pred in predictors:
        r = pred.runtimes(problems)
        estimates[pred.name] = None if r is None else {p.id: float(v) for p, v in zip(problems, r)}
    totals = {pred.name: 0.0 for pred in predictors}
    n_triples = []
    for it in range(iterations):
        inst, triples = draw_instance(pool, make_rng(seed, it), max_redraws, distinct)
        n_triples.append(len(triples))
        for pred in predictors:
            est = estimates[pred.name]
            rng = _tie_rng(seed, it, pred.name)
            if est is not None and policy == "slot":
                k = _slot_greedy(triples, est)
            else:
                scores = None if est is None else np.array([sum(est[i] for i in t.ids)
                                                            for t in triples])
                k = _choose(scores, len(triples), rng)
            totals[pred.name] += sum(truth[i] for i in triples[k].ids)
    return PredictorReport("tamp", [planner.value], {n: {planner.value: v} for n, v in totals.items()},
                           iterations=iterations, seed=seed, precision=2,
                           metadata={"policy": policy, "mean_triples": float(np.mean(n_triples)),
                                     "pool_size": len(pool)})
