"""Seeded generation of narrow-gap navigation and planar-arm problems."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Optional

import numpy as np

from .geometry import (ArmSpec, BlockRobot, CollisionChecker, OrientedBox, Robot,
                       Workspace, normalize_angle, robot_from_dict)

GENERATOR_VERSION = "planfolio-gen/1"
RNG_ALGORITHM = "numpy.Philox"
SCHEMA_VERSION = 1


class GenerationError(RuntimeError):
    """Rejection sampling gave up; re-seed and try again."""


def make_rng(*key: int) -> np.random.Generator:
    """Counter-based generator keyed by a tuple of non-negative integers."""
    seed = np.random.SeedSequence([int(k) for k in key])
    return np.random.Generator(np.random.Philox(seed))


def derive_seed(*key: int) -> int:
    return int(np.random.SeedSequence([int(k) for k in key]).generate_state(1, np.uint64)[0])


@dataclass(frozen=True)
class Problem:
    id: str
    robot: Robot
    obstacles: tuple[OrientedBox, ...]
    start: tuple[float, ...]
    goal: tuple[float, ...]
    workspace: Workspace
    seed: int
    possibly_infeasible: bool = False

    @property
    def kind(self) -> str:
        return self.robot.kind

    @property
    def n_obstacles(self) -> int:
        return len(self.obstacles)

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "robot": self.robot.to_dict(),
            "obstacles": [b.to_dict() for b in self.obstacles],
            "start": list(self.start),
            "goal": list(self.goal),
            "workspace": self.workspace.to_dict(),
            "seed": self.seed,
            "possibly_infeasible": self.possibly_infeasible,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Problem":
        return cls(
            id=d["id"],
            robot=robot_from_dict(d["robot"]),
            obstacles=tuple(OrientedBox.from_dict(b) for b in d["obstacles"]),
            start=tuple(float(v) for v in d["start"]),
            goal=tuple(float(v) for v in d["goal"]),
            workspace=Workspace.from_dict(d["workspace"]),
            seed=int(d["seed"]),
            possibly_infeasible=bool(d.get("possibly_infeasible", False)),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


@dataclass(frozen=True)
class NavGenConfig:
    block_half_extents: tuple[float, float] = (0.025, 0.025)
    barrier_thickness: float = 0.05
    gap_scale: tuple[float, float] = (1.2, 3.0)      # multiples of the block diagonal
    spacing_scale: float = 2.0                        # min face-to-face barrier gap / diagonal
    uncontrolled_fraction: float = 0.05
    barrier_overhang: float = 0.1                     # barriers extend past the workspace

    @property
    def block_diagonal(self) -> float:
        hx, hy = self.block_half_extents
        return 2.0 * math.hypot(hx, hy)


@dataclass(frozen=True)
class ArmGenConfig:
    base: tuple[float, float] = (0.45, 0.45)
    reach: float = 0.38
    link_width: float = 0.03
    obstacle_count: tuple[int, int] = (6, 11)
    obstacle_radius: tuple[float, float] = (0.12, 0.42)
    obstacle_half_extent: tuple[float, float] = (0.015, 0.045)
    freeze_probability: float = 0.25
    max_attempts: int = 10_000


def _uniform_angle(rng: np.random.Generator) -> float:
    return normalize_angle(float(rng.uniform(-math.pi, math.pi)))


def _barrier_positions(rng, n, cfg: NavGenConfig, keep_clear, controlled, ws: Workspace):
    half_t = 0.5 * cfg.barrier_thickness
    clear = half_t + 0.5 * cfg.block_diagonal
    min_gap = cfg.barrier_thickness + cfg.spacing_scale * cfg.block_diagonal
    lo, hi = ws.lo[0] + cfg.barrier_thickness, ws.hi[0] - cfg.barrier_thickness
    for _ in range(1000):
        xs = np.sort(rng.uniform(lo, hi, size=n))
        if any(abs(x - k) <= clear for x in xs for k in keep_clear):
            continue
        if controlled and n > 1 and np.min(np.diff(xs)) < min_gap:
            continue
        return [float(x) for x in xs]
    return None


def generate_nav_problem(seed: int, config: NavGenConfig = NavGenConfig(),
                         problem_id: Optional[str] = None) -> Problem:
    """Block navigation through 1-3 full-height barriers, each with one gap."""
    rng = make_rng(seed)
    ws = Workspace()
    hx, hy = config.block_half_extents
    start = (float(rng.uniform(ws.lo[0], ws.hi[0])), ws.lo[1], _uniform_angle(rng))
    goal = (float(rng.uniform(ws.lo[0], ws.hi[0])), ws.hi[1], _uniform_angle(rng))
    n_barriers = int(rng.integers(1, 4))
    controlled = bool(rng.random() >= config.uncontrolled_fraction)
    xs = None
    while xs is None:
        xs = _barrier_positions(rng, n_barriers, config, (start[0], goal[0]), controlled, ws)
        if xs is None:
            n_barriers -= 1  # unreachable for n=1 with the default geometry
            if n_barriers == 0:
                raise GenerationError(f"cannot place barriers for seed {seed}")
    diag = config.block_diagonal
    bottom, top = ws.lo[1] - config.barrier_overhang, ws.hi[1] + config.barrier_overhang
    obstacles = []
    for x in xs:
        width = float(rng.uniform(*config.gap_scale)) * diag
        margin = 0.5 * width + 0.05
        center = float(rng.uniform(ws.lo[1] + margin, ws.hi[1] - margin))
        g_lo, g_hi = center - 0.5 * width, center + 0.5 * width
        half_t = 0.5 * config.barrier_thickness
        obstacles.append(OrientedBox((x, 0.5 * (bottom + g_lo)), (half_t, 0.5 * (g_lo - bottom)), 0.0))
        obstacles.append(OrientedBox((x, 0.5 * (g_hi + top)), (half_t, 0.5 * (top - g_hi)), 0.0))
    return Problem(
        id=problem_id or f"nav2d-{seed}",
        robot=BlockRobot((hx, hy)),
        obstacles=tuple(obstacles),
        start=start,
        goal=goal,
        workspace=ws,
        seed=int(seed),
        possibly_infeasible=not controlled,
    )


def default_arm(n_links: int, config: ArmGenConfig = ArmGenConfig()) -> ArmSpec:
    # link lengths shrink geometrically toward the tip
    weights = np.array([0.8 ** i for i in range(n_links)])
    lengths = config.reach * weights / weights.sum()
    return ArmSpec(config.base, tuple(float(v) for v in lengths),
                   tuple(config.link_width for _ in range(n_links)))


def generate_arm_problem(seed: int, n_links: int = 3, config: ArmGenConfig = ArmGenConfig(),
                         problem_id: Optional[str] = None) -> Problem:
    """Planar arm among 6-11 boxes placed in its reachable annulus."""
    if n_links < 2:
        raise ValueError("n_links must be >= 2")
    rng = make_rng(seed)
    arm = default_arm(n_links, config)
    ws = Workspace((0.0, 0.0), (0.9, 0.9))
    n_obs = int(rng.integers(config.obstacle_count[0], config.obstacle_count[1] + 1))
    obstacles = []
    for _ in range(n_obs):
        r = float(rng.uniform(*config.obstacle_radius))
        phi = float(rng.uniform(-math.pi, math.pi))
        center = (config.base[0] + r * math.cos(phi), config.base[1] + r * math.sin(phi))
        half = tuple(float(v) for v in rng.uniform(*config.obstacle_half_extent, size=2))
        obstacles.append(OrientedBox(center, half, _uniform_angle(rng)))
    checker = CollisionChecker(arm, obstacles, ws)
    frozen = rng.random(n_links) < config.freeze_probability
    if frozen.all():
        frozen[int(rng.integers(n_links))] = False

    attempts = 0
    def sample_valid(template=None):
        nonlocal attempts
        while attempts < config.max_attempts:
            attempts += 1
            q = np.array([_uniform_angle(rng) for _ in range(n_links)])
            if template is not None:
                q[frozen] = template[frozen]
            if checker.is_valid(q):
                return q
        raise GenerationError(f"no valid arm configuration after {attempts} attempts (seed {seed})")

    start = sample_valid()
    goal = sample_valid(start)
    return Problem(
        id=problem_id or f"arm-{seed}",
        robot=arm,
        obstacles=tuple(obstacles),
        start=tuple(float(v) for v in start),
        goal=tuple(float(v) for v in goal),
        workspace=ws,
        seed=int(seed),
    )


@dataclass
class DatasetManifest:
    problems: int
    robot_type: str
    global_seed: int
    split: dict[str, str]
    generator_version: str = GENERATOR_VERSION
    rng_algorithm: str = RNG_ALGORITHM
    schema_version: int = SCHEMA_VERSION
    n_links: Optional[int] = None
    generator_config: dict = field(default_factory=dict)

    def ids(self, tag: str) -> list[str]:
        return [pid for pid, t in self.split.items() if t == tag]

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=1)

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetManifest":
        return cls(**d)


def split_assignment(global_seed: int, ids: list[str], train_fraction: float = 0.8) -> dict[str, str]:
    """Seeded index shuffle; independent of problem content."""
    n = len(ids)
    order = make_rng(global_seed, 0x5B11).permutation(n)
    n_train = int(round(train_fraction * n))
    tags = ["test"] * n
    for i in order[:n_train]:
        tags[i] = "train"
    return dict(zip(ids, tags))


def iter_problems(global_seed: int, n: int, robot_type: str, n_links: int = 3) -> Iterator[Problem]:
    for i in range(n):
        pid = f"{robot_type}-{global_seed}-{i:06d}"
        if robot_type == "nav2d":
            yield generate_nav_problem(derive_seed(global_seed, i), problem_id=pid)
        elif robot_type == "arm":
            for attempt in range(100):
                try:
                    yield generate_arm_problem(derive_seed(global_seed, i, attempt), n_links,
                                               problem_id=pid)
                    break
                except GenerationError:
                    continue
            else:
                raise GenerationError(f"problem {pid}: 100 re-seeds failed")
        else:
            raise ValueError(f"unknown robot type {robot_type!r}")


def generate_dataset(global_seed: int, n: int, robot_type: str, out_dir: Optional[Path] = None,
                     n_links: int = 3, train_fraction: float = 0.8):
    """Generate `n` problems; write problems.jsonl + manifest.json when out_dir is given.

    Returns (manifest, problems).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    problems = []
    fh = None
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        fh = open(out_dir / "problems.jsonl", "w")
    try:
        for p in iter_problems(global_seed, n, robot_type, n_links):
            problems.append(p)
            if fh is not None:
                fh.write(p.to_json() + "\n")
    finally:
        if fh is not None:
            fh.close()
    gen_cfg = asdict(NavGenConfig()) if robot_type == "nav2d" else asdict(ArmGenConfig())
    manifest = DatasetManifest(
        problems=n,
        robot_type=robot_type,
        global_seed=global_seed,
        split=split_assignment(global_seed, [p.id for p in problems], train_fraction),
        n_links=n_links if robot_type == "arm" else None,
        generator_config=json.loads(json.dumps(gen_cfg)),
    )
    if out_dir is not None:
        (out_dir / "manifest.json").write_text(manifest.to_json() + "\n")
    return manifest, problems


def read_problems(path: Path) -> list[Problem]:
    with open(path) as fh:
        return [Problem.from_dict(json.loads(line)) for line in fh if line.strip()]


def load_dataset(directory: Path) -> tuple[DatasetManifest, list[Problem]]:
    directory = Path(directory)
    manifest = DatasetManifest.from_dict(json.loads((directory / "manifest.json").read_text()))
    return manifest, read_problems(directory / "problems.jsonl")


def write_problems(problems: Iterable[Problem], path: Path) -> None:
    with open(path, "w") as fh:
        for p in problems:
            fh.write(p.to_json() + "\n")
