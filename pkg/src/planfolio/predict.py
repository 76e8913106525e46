"""Predictors, occupancy rasterization and the two selection experiments.

A predictor turns a list of problems into per-problem numbers.  For
fastest-problem selection that number is an estimated runtime (lower wins);
for the portfolio experiment it is a chosen planner.  Learned predictors
only ever see problems, never runtime records.
"""
from __future__ import annotations

import enum
import json
import math
import zlib
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

from .env_gen import make_rng
from .gnn import GraphBatch, Model, ModelConfig, TrainConfig, TrainLog, train
from .graph_encode import encode
from .planners import PlannerId, RuntimeRecord, label_fastest

#: Class index -> planner for the portfolio classifier.
CLASS_ORDER: tuple[PlannerId, ...] = tuple(PlannerId)
GRID_RESOLUTION = 64


class ExperimentError(ValueError):
    """Experiment inputs are inconsistent (missing records, set too large, ...)."""


class UntrainedModelError(RuntimeError):
    pass


class PredictorKind(str, enum.Enum):
    Perfect = "Perfect"
    Gnn = "GNN"
    OccupancyFC = "Fully-connected"
    LeastObstacles = "Least obstacles"
    Random = "Random"
    FixedPlanner = "Fixed"


# ---------------------------------------------------------------------------
# occupancy grid


@dataclass
class OccupancyGrid:
    resolution: int
    cells: np.ndarray            # (resolution, resolution) uint8, row = y index
    start_goal: np.ndarray       # start ++ goal configuration

    def flat(self) -> np.ndarray:
        return self.cells.reshape(-1).astype(float)


def _box_cell_mask(box, xs, ys, half) -> np.ndarray:
    """Closed separating-axis test of one oriented box against a lattice of
    axis-aligned square cells centred at (xs[j], ys[i]) with half-size `half`."""
    cx, cy = box.center
    ex, ey = box.half_extents
    c, s = math.cos(box.angle), math.sin(box.angle)
    dx = xs[None, :] - cx
    dy = ys[:, None] - cy
    rx = abs(c) * ex + abs(s) * ey
    ry = abs(s) * ex + abs(c) * ey
    hit = (np.abs(dx) <= half + rx) & (np.abs(dy) <= half + ry)
    # box axes u = (c, s), v = (-s, c); the cell's radius on either is half * (|c| + |s|)
    r_cell = half * (abs(c) + abs(s))
    hit &= np.abs(dx * c + dy * s) <= ex + r_cell
    hit &= np.abs(-dx * s + dy * c) <= ey + r_cell
    return hit


def rasterize(problem, resolution: int = GRID_RESOLUTION) -> OccupancyGrid:
    """Mark every cell whose closed rectangle touches an obstacle."""
    lo, hi = problem.workspace.lo, problem.workspace.hi
    if abs((hi[0] - lo[0]) - (hi[1] - lo[1])) > 1e-12:
        raise ValueError("rasterize expects a square workspace")
    size = (hi[0] - lo[0]) / resolution
    centers_x = lo[0] + (np.arange(resolution) + 0.5) * size
    centers_y = lo[1] + (np.arange(resolution) + 0.5) * size
    cells = np.zeros((resolution, resolution), dtype=bool)
    for box in problem.obstacles:
        cells |= _box_cell_mask(box, centers_x, centers_y, 0.5 * size)
    sg = np.array([*problem.start, *problem.goal], dtype=float)
    return OccupancyGrid(resolution, cells.astype(np.uint8), sg)


def cell_box(problem, resolution: int, iy: int, ix: int):
    """The OrientedBox of grid cell (iy, ix); for cross-checks."""
    from .geometry import OrientedBox
    lo, hi = problem.workspace.lo, problem.workspace.hi
    size = (hi[0] - lo[0]) / resolution
    return OrientedBox((lo[0] + (ix + 0.5) * size, lo[1] + (iy + 0.5) * size),
                       (0.5 * size, 0.5 * size), 0.0)


# ---------------------------------------------------------------------------
# batches and targets


def graph_batch(problems, targets=None, symmetric: bool = False) -> GraphBatch:
    return GraphBatch.from_graphs([encode(p, symmetric=symmetric) for p in problems],
                                  targets=targets)


def grid_batch(problems, targets=None, resolution: int = GRID_RESOLUTION) -> GraphBatch:
    grids = [rasterize(p, resolution) for p in problems]
    return GraphBatch.grid_only([g.flat() for g in grids], [g.start_goal for g in grids],
                                targets)


def make_batch(model_config: ModelConfig, problems, targets=None) -> GraphBatch:
    if model_config.encoder == "grid":
        res = int(round(math.sqrt(model_config.grid_cells)))
        return grid_batch(problems, targets, res)
    return graph_batch(problems, targets)


def _records_for(table: Mapping, pid: str) -> Mapping[PlannerId, RuntimeRecord]:
    try:
        return table[pid]
    except KeyError:
        raise ExperimentError(f"no runtime records for problem {pid}") from None


def _expected(table: Mapping, pid: str, planner: PlannerId) -> float:
    recs = _records_for(table, pid)
    if planner not in recs:
        raise ExperimentError(f"no {planner.value} record for problem {pid}")
    return recs[planner].expected_time


def portfolio_targets(problems, table) -> np.ndarray:
    return np.array([CLASS_ORDER.index(label_fastest(_records_for(table, p.id)))
                     for p in problems], dtype=np.int64)


def runtime_targets(problems, table, planner: PlannerId) -> np.ndarray:
    return np.array([_expected(table, p.id, planner) for p in problems], dtype=float)


def fit(model_config: ModelConfig, problems, targets, train_config: TrainConfig = TrainConfig(),
        val_fraction: float = 0.1) -> tuple[Model, TrainLog]:
    """Train a fresh model; a seeded `val_fraction` of `problems` drives early stopping."""
    n = len(problems)
    order = make_rng(train_config.seed, 0x5A1).permutation(n)
    n_val = int(round(val_fraction * n)) if n >= 10 else 0
    val_idx, tr_idx = np.sort(order[:n_val]), np.sort(order[n_val:])
    targets = np.asarray(targets)
    full = make_batch(model_config, problems, targets)
    model = Model(model_config)
    log = train(model, full.subset(tr_idx), full.subset(val_idx) if n_val else None, train_config)
    return model, log


# ---------------------------------------------------------------------------
# predictors


class Predictor:
    """Base class.  `kind` and `name` label report rows."""

    kind: PredictorKind
    uses_labels = False

    def __init__(self, name: Optional[str] = None):
        self.name = name or self.kind.value

    def runtimes(self, problems) -> Optional[np.ndarray]:
        """Per-problem runtime estimates (lower is better); None means pick at random."""
        raise NotImplementedError

    def choose_planners(self, problems) -> list[PlannerId]:
        raise NotImplementedError(f"{self.name} cannot choose planners")


class PerfectPredictor(Predictor):
    kind = PredictorKind.Perfect
    uses_labels = True

    def __init__(self, table, planner: PlannerId = PlannerId.RRTConnect, name=None):
        super().__init__(name)
        self.table = table
        self.planner = planner

    def runtimes(self, problems):
        return np.array([_expected(self.table, p.id, self.planner) for p in problems])

    def choose_planners(self, problems):
        return [label_fastest(_records_for(self.table, p.id)) for p in problems]


class ModelPredictor(Predictor):
    """Wraps a trained classify4 or regress1 model (graph or grid encoder)."""

    def __init__(self, model: Optional[Model], name=None):
        self.kind = PredictorKind.OccupancyFC if (
            model is not None and model.config.encoder == "grid") else PredictorKind.Gnn
        super().__init__(name)
        self.model = model

    def _model(self, task: str) -> Model:
        if self.model is None:
            raise UntrainedModelError(f"{self.name}: no trained model")
        if self.model.config.task != task:
            raise UntrainedModelError(f"{self.name}: model task is {self.model.config.task}, "
                                      f"need {task}")
        return self.model

    def probabilities(self, problems) -> np.ndarray:
        m = self._model("classify4")
        return m.predict(make_batch(m.config, problems))

    def runtimes(self, problems):
        m = self._model("regress1")
        return np.maximum(m.predict(make_batch(m.config, problems)), 0.0)

    def choose_planners(self, problems):
        return [CLASS_ORDER[int(i)] for i in np.argmax(self.probabilities(problems), axis=1)]


class LeastObstaclesPredictor(Predictor):
    kind = PredictorKind.LeastObstacles

    def runtimes(self, problems):
        return np.array([float(p.n_obstacles) for p in problems])


class RandomPredictor(Predictor):
    kind = PredictorKind.Random

    def runtimes(self, problems):
        return None


class FixedPlannerPredictor(Predictor):
    kind = PredictorKind.FixedPlanner

    def __init__(self, planner: PlannerId, name=None):
        super().__init__(name or planner.value)
        self.planner = planner

    def choose_planners(self, problems):
        return [self.planner] * len(problems)


def select_algorithm(predictor: Predictor, problem) -> PlannerId:
    return predictor.choose_planners([problem])[0]


def predict_runtime(predictor: ModelPredictor, problem) -> float:
    return float(predictor.runtimes([problem])[0])


# ---------------------------------------------------------------------------
# reports


@dataclass
class PredictorReport:
    experiment: str
    columns: list[str]
    rows: dict[str, dict[str, float]]
    iterations: int
    seed: int
    precision: int = 0
    metadata: dict = field(default_factory=dict)

    def value(self, row: str, column: Optional[str] = None) -> float:
        return self.rows[row][column or self.columns[0]]

    def to_dict(self) -> dict:
        return {"experiment": self.experiment, "columns": self.columns, "rows": self.rows,
                "iterations": self.iterations, "seed": self.seed, "precision": self.precision,
                "metadata": self.metadata}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    @classmethod
    def from_dict(cls, d: dict) -> "PredictorReport":
        return cls(d["experiment"], list(d["columns"]), d["rows"], d["iterations"], d["seed"],
                   d.get("precision", 0), d.get("metadata", {}))

    def to_table(self) -> str:
        head = ["Predictor", *self.columns]
        body = []
        for name, vals in self.rows.items():
            body.append([name, *(f"{vals[c]:.{self.precision}f}" if c in vals else "-"
                                 for c in self.columns)])
        widths = [max(len(r[i]) for r in [head, *body]) for i in range(len(head))]
        lines = ["  ".join(h.ljust(w) if i == 0 else h.rjust(w)
                           for i, (h, w) in enumerate(zip(row, widths)))
                 for row in [head, *body]]
        lines.insert(1, "  ".join("-" * w for w in widths))
        return "\n".join(lines) + "\n"

    def merge(self, other: "PredictorReport") -> "PredictorReport":
        """Column-wise union (used to assemble one table from per-planner runs)."""
        rows = {k: dict(v) for k, v in self.rows.items()}
        for k, v in other.rows.items():
            rows.setdefault(k, {}).update(v)
        cols = self.columns + [c for c in other.columns if c not in self.columns]
        return PredictorReport(self.experiment, cols, rows, self.iterations, self.seed,
                               self.precision, {**self.metadata, **other.metadata})


# ---------------------------------------------------------------------------
# experiments


def portfolio_experiment(problems, predictors: Sequence[Predictor], table,
                         column: str = "Expected Total Runtime") -> PredictorReport:
    """Sum, over problems, of the recorded expected time of each predictor's planner."""
    if not problems:
        raise ExperimentError("empty test set")
    rows = {}
    for pred in predictors:
        picks = pred.choose_planners(problems)
        rows[pred.name] = {column: float(sum(_expected(table, p.id, pl)
                                             for p, pl in zip(problems, picks)))}
    return PredictorReport("portfolio", [column], rows, iterations=len(problems), seed=0,
                           precision=0, metadata={"n_problems": len(problems)})


def _tie_rng(seed: int, iteration: int, name: str) -> np.random.Generator:
    return make_rng(seed, iteration, zlib.crc32(name.encode()))


def pick_lowest(scores: np.ndarray, rng: np.random.Generator) -> int:
    """Index of the minimum score, uniform among exact ties."""
    best = np.flatnonzero(scores == scores.min())
    return int(best[0]) if len(best) == 1 else int(best[rng.integers(len(best))])


def _choose(scores: Optional[np.ndarray], n: int, rng: np.random.Generator) -> int:
    if scores is None:
        return int(rng.integers(n))
    return pick_lowest(scores, rng)


def fastest_problem_experiment(problems, predictors: Sequence[Predictor], table,
                               planner: PlannerId = PlannerId.RRTConnect,
                               set_size_range: tuple[int, int] = (2, 10),
                               iterations: int = 1000, seed: int = 0) -> PredictorReport:
    """Each iteration samples one set of problems shared by every predictor;
    each predictor picks the problem it expects to be fastest for `planner`."""
    lo, hi = set_size_range
    if not 1 <= lo <= hi:
        raise ExperimentError(f"bad set size range {set_size_range}")
    if hi > len(problems):
        raise ExperimentError(f"set size {hi} exceeds test set of {len(problems)}")
    truth = np.array([_expected(table, p.id, planner) for p in problems])
    scores = {pred.name: pred.runtimes(problems) for pred in predictors}
    totals = {pred.name: 0.0 for pred in predictors}
    for it in range(iterations):
        rng = make_rng(seed, it)
        size = int(rng.integers(lo, hi + 1))
        members = rng.choice(len(problems), size=size, replace=False)
        for pred in predictors:
            s = scores[pred.name]
            k = _choose(None if s is None else s[members], size, _tie_rng(seed, it, pred.name))
            totals[pred.name] += float(truth[members[k]])
    return PredictorReport("fastest", [planner.value],
                           {n: {planner.value: v} for n, v in totals.items()},
                           iterations=iterations, seed=seed, precision=0,
                           metadata={"set_size_range": [lo, hi], "n_problems": len(problems)})


def spearman(a, b) -> float:
    from scipy.stats import spearmanr
    return float(spearmanr(a, b).statistic)


def permutation_pvalue(a, b, n_perm: int = 2000, seed: int = 0,
                       stat: Callable = spearman) -> float:
    """One-sided p-value of `stat(a, b)` against shuffled `b`."""
    rng = make_rng(seed, 0x9E7)
    obs = stat(a, b)
    b = np.asarray(b)
    hits = sum(stat(a, rng.permutation(b)) >= obs for _ in range(n_perm))
    return (hits + 1) / (n_perm + 1)
