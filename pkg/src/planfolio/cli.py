"""Command-line entry point: gen, solve, train, eval, tamp.

Every command resolves its flags (plus an optional ``--config`` key=value
file) into one dict, writes it as ``config.json`` next to its outputs, and
by default places those outputs in ``$PLANFOLIO_RUN_DIR/<command>-<hash>``
where the hash covers the resolved config.

Exit codes: 0 ok, 2 bad arguments, 3 missing input artifact, 4 runtime error
(including training divergence).
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import multiprocessing as mp
import os
import sys
from pathlib import Path
from typing import Optional

from . import __version__

CONFIG_SCHEMA = 1
EXIT_OK, EXIT_ARGS, EXIT_MISSING, EXIT_RUNTIME = 0, 2, 3, 4
LABELS_FILE = "labels.jsonl"
NAV_TIMEOUT, ARM_TIMEOUT = 3.0, 10.0
# keys that never change results and so stay out of the run hash
_UNHASHED = {"workers", "out", "config", "command", "verbose"}

log = logging.getLogger("planfolio")


class MissingArtifact(Exception):
    pass


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# config handling


def read_config_file(path) -> dict[str, str]:
    """``key = value`` per line; ``#`` starts a comment; keys use - or _."""
    out = {}
    for n, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{n}: expected key = value")
        k, v = (s.strip() for s in line.split("=", 1))
        out[k.replace("-", "_")] = v
    return out


def _apply_config(parser: argparse.ArgumentParser, args: argparse.Namespace, argv) -> None:
    """Fill values from the config file for flags not given on the command line."""
    if not getattr(args, "config", None):
        return
    path = Path(args.config)
    if not path.exists():
        raise MissingArtifact(f"config file {path} not found")
    given = {a.split("=", 1)[0].lstrip("-").replace("-", "_") for a in argv if a.startswith("--")}
    actions = {a.dest: a for a in parser._actions}
    for key, raw in read_config_file(path).items():
        if key not in actions:
            raise UsageError(f"unknown config key {key!r}")
        if key in given:
            continue
        act = actions[key]
        conv = act.type or str
        if act.nargs in ("+", "*"):
            value = [conv(v) for v in raw.replace(",", " ").split()]
        elif isinstance(act, argparse._StoreTrueAction):
            value = raw.lower() in ("1", "true", "yes", "on")
        else:
            value = conv(raw)
        if act.choices is not None and value not in act.choices:
            raise UsageError(f"config key {key}: {value!r} not in {list(act.choices)}")
        setattr(args, key, value)


def resolved(args: argparse.Namespace) -> dict:
    d = {k: v for k, v in vars(args).items() if k not in ("func",)}
    d["schema_version"] = CONFIG_SCHEMA
    d["planfolio_version"] = __version__
    return d


def config_hash(cfg: dict) -> str:
    key = {k: v for k, v in cfg.items() if k not in _UNHASHED}
    return hashlib.sha256(json.dumps(key, sort_keys=True, default=str).encode()).hexdigest()[:12]


def run_root() -> Path:
    return Path(os.environ.get("PLANFOLIO_RUN_DIR", "runs"))


def output_dir(args, cfg: dict) -> Path:
    out = Path(args.out) if args.out else run_root() / f"{args.command}-{config_hash(cfg)}"
    out.mkdir(parents=True, exist_ok=True)
    return out


def write_config(out: Path, cfg: dict) -> None:
    (out / "config.json").write_text(json.dumps(cfg, sort_keys=True, indent=1, default=str) + "\n")


def _require(path: Optional[str], what: str) -> Path:
    if not path:
        raise UsageError(f"--{what} is required")
    p = Path(path)
    if not p.exists():
        raise MissingArtifact(f"{what} {p} not found")
    return p


def _load_dataset(path):
    from .env_gen import load_dataset
    d = _require(path, "dataset")
    if not (d / "manifest.json").exists() or not (d / "problems.jsonl").exists():
        raise MissingArtifact(f"{d} does not contain manifest.json and problems.jsonl")
    return load_dataset(d)


def _load_labels(path):
    from .planners import index_labels, read_labels
    return index_labels(read_labels(_require(path, "labels")))


# ---------------------------------------------------------------------------
# gen


def cmd_gen(args) -> int:
    from .env_gen import generate_dataset
    if args.n < 1:
        raise UsageError("--n must be >= 1")
    if args.type == "arm" and args.links < 2:
        raise UsageError("--links must be >= 2")
    cfg = resolved(args)
    out = output_dir(args, cfg)
    manifest, _ = generate_dataset(args.seed, args.n, args.type, out, n_links=args.links,
                                   train_fraction=args.train_fraction)
    write_config(out, cfg)
    n_train = len(manifest.ids("train"))
    print(f"{manifest.problems} {manifest.robot_type} problems -> {out} "
          f"(train {n_train}, test {manifest.problems - n_train}, seed {manifest.global_seed})")
    return EXIT_OK


# ---------------------------------------------------------------------------
# solve


def _solve_task(task):
    from .env_gen import Problem
    from .planners import PlannerParams, measure
    problem_dict, planner, trials, params = task
    rec = measure(Problem.from_dict(problem_dict), planner, trials, PlannerParams(**params))
    return rec.to_json()


def _existing_keys(path: Path) -> list[str]:
    """Complete lines already in a labels file; a torn last line is dropped."""
    if not path.exists():
        return []
    text = path.read_text()
    lines = text.split("\n")
    complete = lines[:-1]           # text after the final newline is partial (or empty)
    good = []
    for line in complete:
        if not line.strip():
            continue
        try:
            json.loads(line)
        except json.JSONDecodeError:
            break
        good.append(line)
    if len(good) != len([l for l in lines if l.strip()]):
        path.write_text("".join(l + "\n" for l in good))
    return good


def cmd_solve(args) -> int:
    from .planners import PlannerId
    manifest, problems = _load_dataset(args.dataset)
    if args.split != "all":
        keep = set(manifest.ids(args.split))
        problems = [p for p in problems if p.id in keep]
    if args.limit:
        problems = problems[: args.limit]
    try:
        planners = [PlannerId.parse(p) for p in args.planners]
    except ValueError as e:
        raise UsageError(str(e)) from e
    if args.trials < 1:
        raise UsageError("--trials must be >= 1")
    if args.timeout is None:
        args.timeout = ARM_TIMEOUT if manifest.robot_type == "arm" else NAV_TIMEOUT
    args.planners = [p.value for p in planners]
    args.dataset = str(Path(args.dataset))
    cfg = resolved(args)
    out = output_dir(args, cfg)
    write_config(out, cfg)
    labels = out / LABELS_FILE
    done = set()
    for line in _existing_keys(labels):
        d = json.loads(line)
        done.add((d["problem_id"], d["planner"]))
    params = {"timeout": args.timeout, "rng_seed": args.seed, "clock": args.clock,
              "step_size": args.step_size, "goal_bias": args.goal_bias}
    tasks = [(p.to_dict(), pl.value, args.trials, params)
             for p in problems for pl in planners if (p.id, pl.value) not in done]
    print(f"{len(tasks)} (problem, planner) pairs to measure, {len(done)} already done")
    workers = max(1, args.workers or os.cpu_count() or 1)
    with open(labels, "a") as fh:
        if workers == 1 or len(tasks) <= 1:
            results = map(_solve_task, tasks)
            pool = None
        else:
            pool = mp.get_context("spawn").Pool(workers)
            results = pool.imap(_solve_task, tasks, chunksize=1)
        try:
            for i, line in enumerate(results, 1):
                fh.write(line + "\n")
                fh.flush()
                if i % 50 == 0:
                    log.info("solved %d/%d", i, len(tasks))
        finally:
            if pool is not None:
                pool.terminate()
    print(f"labels -> {labels}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# train


def _parse_task(task: str):
    from .planners import PlannerId
    base, _, planner = task.partition(":")
    if base not in ("portfolio", "runtime", "occupancy-portfolio", "occupancy-runtime"):
        raise UsageError(f"unknown task {task!r}")
    regress = base.endswith("runtime")
    if regress and not planner:
        raise UsageError(f"task {task!r} needs a planner, e.g. runtime:rrtconnect")
    if not regress and planner:
        raise UsageError(f"task {task!r} takes no planner")
    try:
        pid = PlannerId.parse(planner) if planner else None
    except ValueError as e:
        raise UsageError(str(e)) from e
    encoder = "grid" if base.startswith("occupancy") else "gnn"
    return encoder, ("regress1" if regress else "classify4"), pid


def model_config_for(manifest, encoder: str, task: str, seed: int):
    from .gnn import ModelConfig
    if manifest.robot_type == "arm":
        if encoder == "grid":
            raise UsageError("occupancy models are only defined for nav2d datasets")
        return ModelConfig.arm(manifest.n_links, task=task, seed=seed)
    return ModelConfig.nav(task=task, seed=seed, encoder=encoder)


def cmd_train(args) -> int:
    from .gnn import TrainConfig, TrainingDivergedError, save
    from .predict import fit, portfolio_targets, runtime_targets
    encoder, task, planner = _parse_task(args.task)
    manifest, problems = _load_dataset(args.dataset)
    table = _load_labels(args.labels)
    train_ids = set(manifest.ids("train"))
    problems = [p for p in problems if p.id in train_ids]
    if args.limit:
        problems = problems[: args.limit]
    if not problems:
        raise MissingArtifact("dataset has no training problems")
    from .predict import ExperimentError
    try:
        targets = (portfolio_targets(problems, table) if planner is None
                   else runtime_targets(problems, table, planner))
    except (ExperimentError, KeyError) as e:
        raise MissingArtifact(f"labels incomplete: {e}") from e
    args.dataset, args.labels = str(Path(args.dataset)), str(Path(args.labels))
    cfg = resolved(args)
    out = output_dir(args, cfg)
    write_config(out, cfg)
    mcfg = model_config_for(manifest, encoder, task, args.seed)
    tcfg = TrainConfig(lr=args.lr, batch_size=args.batch_size, max_epochs=args.epochs,
                       patience=args.patience, seed=args.seed)
    try:
        model, train_log = fit(mcfg, problems, targets, tcfg, val_fraction=args.val_fraction)
    except TrainingDivergedError as e:
        print(f"training diverged: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    meta = {"task": args.task, "planner": None if planner is None else planner.value,
            "robot_type": manifest.robot_type, "n_train": len(problems),
            "train": tcfg.to_dict()}
    save(model, out / "model.ckpt", meta)
    (out / "train_log.json").write_text(json.dumps(train_log.to_dict(), sort_keys=True,
                                                   indent=1) + "\n")
    print(f"{args.task}: best epoch {train_log.best_epoch} loss {train_log.best_loss:.5f} "
          f"-> {out / 'model.ckpt'}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# eval / tamp


def _checkpoints(specs) -> dict[str, Path]:
    out = {}
    for s in specs or []:
        if "=" not in s:
            raise UsageError(f"--checkpoint expects NAME=PATH, got {s!r}")
        name, path = s.split("=", 1)
        out[name.strip().lower()] = _require(path, f"checkpoint {name}")
    return out


def _model_predictor(ckpts, key: str, name: str):
    from .gnn import load
    from .predict import ModelPredictor
    if key not in ckpts:
        raise MissingArtifact(f"predictor {name} needs --checkpoint {key}=PATH")
    model, _ = load(ckpts[key])
    return ModelPredictor(model, name=name)


def _test_problems(args):
    manifest, problems = _load_dataset(args.dataset)
    test_ids = set(manifest.ids(args.split)) if args.split != "all" else {p.id for p in problems}
    return manifest, [p for p in problems if p.id in test_ids]


def _emit(report, out: Path) -> None:
    (out / "report.json").write_text(report.to_json() + "\n")
    table = report.to_table()
    (out / "report.txt").write_text(table)
    print(table, end="")


def _normalize_predictors(names) -> list[str]:
    return [n.strip().lower() for n in names]


def cmd_eval(args) -> int:
    from .planners import PlannerId
    from .predict import (FixedPlannerPredictor, LeastObstaclesPredictor, PerfectPredictor,
                          RandomPredictor, fastest_problem_experiment, portfolio_experiment)
    _, problems = _test_problems(args)
    table = _load_labels(args.labels)
    ckpts = _checkpoints(args.checkpoint)
    names = _normalize_predictors(args.predictors)
    args.dataset, args.labels = str(Path(args.dataset)), str(Path(args.labels))
    args.checkpoint = sorted(f"{k}={v}" for k, v in ckpts.items())
    cfg = resolved(args)
    if args.experiment == "portfolio":
        preds = []
        for n in names:
            if n == "perfect":
                preds.append(PerfectPredictor(table))
            elif n == "gnn":
                preds.append(_model_predictor(ckpts, "gnn", "GNN"))
            elif n == "fc":
                preds.append(_model_predictor(ckpts, "fc", "Fully-connected"))
            elif n == "fixed":
                preds.extend(FixedPlannerPredictor(p) for p in PlannerId)
            else:
                try:
                    preds.append(FixedPlannerPredictor(PlannerId.parse(n)))
                except ValueError:
                    raise UsageError(f"predictor {n!r} not available for portfolio") from None
        report = portfolio_experiment(problems, preds, table)
    else:
        try:
            planners = [PlannerId.parse(p) for p in args.planners]
        except ValueError as e:
            raise UsageError(str(e)) from e
        report = None
        for pl in planners:
            preds = []
            for n in names:
                if n == "perfect":
                    preds.append(PerfectPredictor(table, pl))
                elif n in ("gnn", "fc"):
                    key = f"{n}:{pl.value.lower()}"
                    preds.append(_model_predictor(ckpts, key, "GNN" if n == "gnn" else
                                                  "Fully-connected"))
                elif n in ("least-obstacles", "leastobstacles"):
                    preds.append(LeastObstaclesPredictor())
                elif n == "random":
                    preds.append(RandomPredictor())
                else:
                    raise UsageError(f"predictor {n!r} not available for fastest")
            r = fastest_problem_experiment(problems, preds, table, pl,
                                           (args.min_set, args.max_set), args.iterations,
                                           args.seed)
            report = r if report is None else report.merge(r)
    out = output_dir(args, cfg)
    write_config(out, cfg)
    _emit(report, out)
    return EXIT_OK


def cmd_tamp(args) -> int:
    from .planners import PlannerId
    from .predict import LeastObstaclesPredictor, PerfectPredictor, RandomPredictor
    from .tamp import tamp_experiment
    _, problems = _test_problems(args)
    table = _load_labels(args.labels)
    ckpts = _checkpoints(args.checkpoint)
    names = _normalize_predictors(args.predictors)
    args.dataset, args.labels = str(Path(args.dataset)), str(Path(args.labels))
    args.checkpoint = sorted(f"{k}={v}" for k, v in ckpts.items())
    if args.iterations < 1:
        raise UsageError("--iterations must be >= 1")
    cfg = resolved(args)
    preds = []
    for n in names:
        if n == "perfect":
            preds.append(PerfectPredictor(table, PlannerId.RRTConnect))
        elif n == "gnn":
            preds.append(_model_predictor(ckpts, "gnn", "GNN"))
        elif n == "fc":
            preds.append(_model_predictor(ckpts, "fc", "Fully-connected"))
        elif n in ("least-obstacles", "leastobstacles"):
            preds.append(LeastObstaclesPredictor())
        elif n == "random":
            preds.append(RandomPredictor())
        else:
            raise UsageError(f"predictor {n!r} not available for tamp")
    report = tamp_experiment(problems, preds, table, args.iterations, args.seed,
                             policy=args.policy)
    out = output_dir(args, cfg)
    write_config(out, cfg)
    _emit(report, out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="planfolio", description=__doc__.split("\n")[0])
    p.add_argument("--version", action="version", version=f"planfolio {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="key = value file with defaults for any flag")
        sp.add_argument("--out", help="output directory (default: run dir named by config hash)")
        sp.add_argument("-v", "--verbose", action="store_true")

    g = sub.add_parser("gen", help="generate a problem dataset")
    g.add_argument("--type", choices=["nav2d", "arm"], default="nav2d")
    g.add_argument("--n", type=int, default=5000)
    g.add_argument("--seed", type=int, default=7)
    g.add_argument("--links", type=int, default=3)
    g.add_argument("--train-fraction", type=float, default=0.8)
    common(g)
    g.set_defaults(func=cmd_gen)

    s = sub.add_parser("solve", help="measure planner runtimes into labels.jsonl")
    s.add_argument("--dataset")
    s.add_argument("--planners", nargs="+", default=["RRT", "RRTConnect", "TRRT", "LazyRRT"])
    s.add_argument("--trials", type=int, default=40)
    s.add_argument("--timeout", type=float, default=None,
                   help=f"seconds (default {NAV_TIMEOUT} nav2d, {ARM_TIMEOUT} arm)")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--clock", choices=["work", "wall"], default="work")
    s.add_argument("--step-size", type=float, default=0.05)
    s.add_argument("--goal-bias", type=float, default=0.05)
    s.add_argument("--split", choices=["all", "train", "test"], default="all")
    s.add_argument("--limit", type=int, default=0, help="only the first N problems")
    s.add_argument("--workers", type=int, default=0, help="0 = all cores")
    common(s)
    s.set_defaults(func=cmd_solve)

    t = sub.add_parser("train", help="train a predictor")
    t.add_argument("--task", default="portfolio",
                   help="portfolio | runtime:PLANNER | occupancy-portfolio | "
                        "occupancy-runtime:PLANNER")
    t.add_argument("--dataset")
    t.add_argument("--labels")
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--lr", type=float, default=1e-3)
    t.add_argument("--batch-size", type=int, default=32)
    t.add_argument("--epochs", type=int, default=200)
    t.add_argument("--patience", type=int, default=10)
    t.add_argument("--val-fraction", type=float, default=0.1)
    t.add_argument("--limit", type=int, default=0)
    common(t)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="portfolio or fastest-problem experiment")
    e.add_argument("--experiment", choices=["portfolio", "fastest"], default="portfolio")
    e.add_argument("--dataset")
    e.add_argument("--labels")
    e.add_argument("--checkpoint", action="append",
                   help="NAME=PATH; names gnn, fc (portfolio) or gnn:PLANNER, fc:PLANNER")
    e.add_argument("--predictors", nargs="+", default=None)
    e.add_argument("--planners", nargs="+", default=["RRTConnect"])
    e.add_argument("--iterations", type=int, default=1000)
    e.add_argument("--min-set", type=int, default=2)
    e.add_argument("--max-set", type=int, default=10)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--split", choices=["all", "train", "test"], default="test")
    common(e)
    e.set_defaults(func=cmd_eval)

    m = sub.add_parser("tamp", help="segment/quadrant triple-chaining experiment")
    m.add_argument("--dataset")
    m.add_argument("--labels")
    m.add_argument("--checkpoint", action="append", help="NAME=PATH; names gnn, fc")
    m.add_argument("--predictors", nargs="+", default=None)
    m.add_argument("--iterations", type=int, default=100)
    m.add_argument("--seed", type=int, default=0)
    m.add_argument("--policy", choices=["triple", "slot"], default="triple")
    m.add_argument("--split", choices=["all", "train", "test"], default="test")
    common(m)
    m.set_defaults(func=cmd_tamp)
    return p


_DEFAULT_PREDICTORS = {
    "portfolio": ["perfect", "gnn", "fc", "fixed"],
    "fastest": ["perfect", "gnn", "fc", "least-obstacles", "random"],
    "tamp": ["perfect", "gnn", "fc", "least-obstacles"],
}


def _default_predictors(args) -> None:
    if getattr(args, "predictors", "unset") is None:
        key = args.experiment if args.command == "eval" else "tamp"
        names = _DEFAULT_PREDICTORS[key]
        ckpts = {s.split("=", 1)[0].split(":")[0].strip().lower() for s in (args.checkpoint or [])}
        args.predictors = [n for n in names if n not in ("gnn", "fc") or n in ckpts]


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    sub = parser._subparsers._group_actions[0].choices[args.command]
    try:
        _apply_config(sub, args, argv)
        _default_predictors(args)
        return args.func(args)
    except UsageError as e:
        print(f"planfolio {args.command}: error: {e}", file=sys.stderr)
        return EXIT_ARGS
    except MissingArtifact as e:
        print(f"planfolio {args.command}: missing artifact: {e}", file=sys.stderr)
        return EXIT_MISSING
    except Exception as e:  # noqa: BLE001 - every other failure maps to one exit code
        log.debug("failure", exc_info=True)
        print(f"planfolio {args.command}: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
