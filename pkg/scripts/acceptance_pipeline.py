"""Build every artifact the desk-scale acceptance checks read.

Each step runs through the CLI and is skipped when its output already
exists, so an interrupted run picks up where it stopped (solve resumes
inside its labels file).

    python scripts/acceptance_pipeline.py            # nav2d then arm
    python scripts/acceptance_pipeline.py --only arm
"""
from __future__ import annotations

import argparse
import time
from pathlib import Path

from planfolio.cli import main as cli

ROOT = Path(__file__).resolve().parents[1] / "artifacts" / "acceptance"
NAV, ARM = ROOT / "nav", ROOT / "arm"
# picked by held-out (train-split) loss over lr in {1e-3, 3e-4, 1e-4}; patience 10 and 30 tied
TRAIN = ["--lr", "3e-4"]


def nav_steps(workers: int):
    ds, labels = NAV / "dataset", NAV / "solve" / "labels.jsonl"
    ckpt = {k: NAV / f"train-{k}" / "model.ckpt"
            for k in ("portfolio-gnn", "portfolio-fc", "runtime-gnn", "runtime-fc")}
    common = ["--dataset", str(ds), "--labels", str(labels)]
    return [
        ("gen", ds / "manifest.json",
         ["gen", "--type", "nav2d", "--n", "600", "--seed", "7", "--out", str(ds)]),
        ("solve", None,
         ["solve", "--dataset", str(ds), "--trials", "20", "--timeout", "3", "--seed", "0",
          "--workers", str(workers), "--out", str(NAV / "solve"), "-v"]),
        ("train portfolio gnn", ckpt["portfolio-gnn"],
         ["train", "--task", "portfolio", *common, *TRAIN, "--out", str(ckpt["portfolio-gnn"].parent)]),
        ("train portfolio fc", ckpt["portfolio-fc"],
         ["train", "--task", "occupancy-portfolio", *common, *TRAIN,
          "--out", str(ckpt["portfolio-fc"].parent)]),
        ("train runtime gnn", ckpt["runtime-gnn"],
         ["train", "--task", "runtime:rrtconnect", *common, *TRAIN,
          "--out", str(ckpt["runtime-gnn"].parent)]),
        ("train runtime fc", ckpt["runtime-fc"],
         ["train", "--task", "occupancy-runtime:rrtconnect", *common, *TRAIN,
          "--out", str(ckpt["runtime-fc"].parent)]),
        ("eval portfolio", NAV / "eval-portfolio" / "report.json",
         ["eval", "--experiment", "portfolio", *common,
          "--checkpoint", f"gnn={ckpt['portfolio-gnn']}",
          "--checkpoint", f"fc={ckpt['portfolio-fc']}",
          "--out", str(NAV / "eval-portfolio")]),
        ("eval fastest", NAV / "eval-fastest" / "report.json",
         ["eval", "--experiment", "fastest", *common, "--iterations", "1000",
          "--checkpoint", f"gnn:rrtconnect={ckpt['runtime-gnn']}",
          "--checkpoint", f"fc:rrtconnect={ckpt['runtime-fc']}",
          "--out", str(NAV / "eval-fastest")]),
        ("tamp", NAV / "tamp" / "report.json",
         ["tamp", *common, "--iterations", "100",
          "--checkpoint", f"gnn={ckpt['runtime-gnn']}",
          "--checkpoint", f"fc={ckpt['runtime-fc']}",
          "--out", str(NAV / "tamp")]),
    ]


def arm_steps(workers: int):
    ds, labels = ARM / "dataset", ARM / "solve" / "labels.jsonl"
    ckpt = ARM / "train-runtime-gnn" / "model.ckpt"
    common = ["--dataset", str(ds), "--labels", str(labels)]
    return [
        ("gen", ds / "manifest.json",
         ["gen", "--type", "arm", "--links", "3", "--n", "800", "--seed", "11", "--out", str(ds)]),
        ("solve", None,
         ["solve", "--dataset", str(ds), "--planners", "rrtconnect", "--trials", "20",
          "--timeout", "10", "--seed", "0", "--workers", str(workers),
          "--out", str(ARM / "solve"), "-v"]),
        ("train runtime gnn", ckpt,
         ["train", "--task", "runtime:rrtconnect", *common, *TRAIN, "--out", str(ckpt.parent)]),
        ("eval fastest", ARM / "eval-fastest" / "report.json",
         ["eval", "--experiment", "fastest", *common, "--iterations", "1000",
          "--predictors", "perfect", "gnn", "least-obstacles", "random",
          "--checkpoint", f"gnn:rrtconnect={ckpt}", "--out", str(ARM / "eval-fastest")]),
    ]


def run(steps, label: str) -> None:
    for name, marker, argv in steps:
        if marker is not None and marker.exists():
            print(f"[{label}] {name}: cached")
            continue
        t0 = time.perf_counter()
        rc = cli(argv)
        if rc != 0:
            raise SystemExit(f"[{label}] {name} failed with exit code {rc}")
        print(f"[{label}] {name}: {time.perf_counter() - t0:.0f}s")


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--only", choices=["nav", "arm"])
    ap.add_argument("--workers", type=int, default=0, help="solve workers, 0 = all cores")
    args = ap.parse_args()
    if args.only in (None, "nav"):
        run(nav_steps(args.workers), "nav")
    if args.only in (None, "arm"):
        run(arm_steps(args.workers), "arm")


if __name__ == "__main__":
    main()
