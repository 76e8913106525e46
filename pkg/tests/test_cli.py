import hashlib
import json
import subprocess
import sys

import pytest

from planfolio.cli import main, read_config_file

SOLVE = ["--trials", "2", "--timeout", "0.3", "--workers", "1"]


def digest(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


def strip_wall(path):
    rows = [json.loads(l) for l in path.read_text().splitlines()]
    for r in rows:
        r.pop("wall_time")
    return rows


@pytest.fixture(scope="module")
def small(tmp_path_factory):
    """A 12-problem dataset with labels for every planner."""
    root = tmp_path_factory.mktemp("cli")
    assert main(["gen", "--n", "12", "--seed", "3", "--out", str(root / "ds")]) == 0
    assert main(["solve", "--dataset", str(root / "ds"), *SOLVE, "--out", str(root / "lab")]) == 0
    return root


def test_version_and_help():
    out = subprocess.run([sys.executable, "-m", "planfolio.cli", "--help"], capture_output=True,
                         text=True)
    assert out.returncode == 0 and "solve" in out.stdout


def test_gen_rejects_empty(run_dir):
    assert main(["gen", "--n", "0"]) == 2


def test_unknown_flag_is_usage_error(run_dir):
    assert main(["gen", "--bogus"]) == 2


def test_gen_is_deterministic_and_hashed(run_dir):
    assert main(["gen", "--n", "5", "--seed", "11"]) == 0
    dirs = list((run_dir / "runs").iterdir())
    assert len(dirs) == 1 and dirs[0].name.startswith("gen-")
    first = digest(dirs[0] / "problems.jsonl")
    assert main(["gen", "--n", "5", "--seed", "11", "--out", str(run_dir / "again")]) == 0
    assert digest(run_dir / "again" / "problems.jsonl") == first
    cfg = json.loads((dirs[0] / "config.json").read_text())
    assert cfg["seed"] == 11 and cfg["n"] == 5


def test_labels_cover_every_pair(small):
    rows = [json.loads(l) for l in (small / "lab" / "labels.jsonl").read_text().splitlines()]
    assert len(rows) == 12 * 4
    for r in rows:
        assert len(r["trials"]) == 2 and r["timeout"] == 0.3
        assert 0 <= r["expected_time"] <= 0.3 and 0 <= r["timeout_count"] <= 2


def test_solve_resumes_after_torn_line(small, tmp_path):
    ds = str(small / "ds")
    full = tmp_path / "full"
    assert main(["solve", "--dataset", ds, *SOLVE, "--limit", "3", "--out", str(full)]) == 0
    part = tmp_path / "part"
    part.mkdir()
    text = (full / "labels.jsonl").read_text()
    lines = text.splitlines(keepends=True)
    (part / "labels.jsonl").write_text("".join(lines[:5]) + lines[5][:40])
    assert main(["solve", "--dataset", ds, *SOLVE, "--limit", "3", "--out", str(part)]) == 0
    assert strip_wall(part / "labels.jsonl") == strip_wall(full / "labels.jsonl")


def test_solve_planner_filter_and_workers(small, tmp_path):
    ds = str(small / "ds")
    a, b = tmp_path / "a", tmp_path / "b"
    base = ["solve", "--dataset", ds, "--trials", "2", "--timeout", "0.3", "--limit", "4",
            "--planners", "rrtconnect", "trrt"]
    assert main([*base, "--workers", "1", "--out", str(a)]) == 0
    assert main([*base, "--workers", "2", "--out", str(b)]) == 0
    rows = strip_wall(a / "labels.jsonl")
    assert {r["planner"] for r in rows} == {"RRTConnect", "TRRT"} and len(rows) == 8
    assert rows == strip_wall(b / "labels.jsonl")


def test_unknown_planner(small, tmp_path):
    assert main(["solve", "--dataset", str(small / "ds"), "--planners", "PRM",
                 "--out", str(tmp_path / "x")]) == 2


def test_missing_dataset_is_exit_3(run_dir):
    assert main(["solve", "--dataset", str(run_dir / "nope")]) == 3
    assert main(["eval", "--dataset", str(run_dir / "nope"), "--labels", "x"]) == 3


def _train(small, out, task="runtime:rrtconnect", extra=()):
    return main(["train", "--task", task, "--dataset", str(small / "ds"),
                 "--labels", str(small / "lab" / "labels.jsonl"), "--epochs", "2",
                 "--out", str(out), *extra])


def test_train_is_reproducible(small, tmp_path):
    assert _train(small, tmp_path / "t1") == 0
    assert _train(small, tmp_path / "t2") == 0
    assert digest(tmp_path / "t1" / "model.ckpt") == digest(tmp_path / "t2" / "model.ckpt")
    log = json.loads((tmp_path / "t1" / "train_log.json").read_text())
    assert len(log["epochs"]) == 2


def test_train_task_errors(small, tmp_path):
    assert _train(small, tmp_path / "e1", task="runtime") == 2
    assert _train(small, tmp_path / "e2", task="portfolio:rrt") == 2
    assert _train(small, tmp_path / "e3", task="classify") == 2


def test_eval_perfect_only(small, tmp_path):
    out = tmp_path / "ev"
    assert main(["eval", "--dataset", str(small / "ds"), "--labels",
                 str(small / "lab" / "labels.jsonl"), "--predictors", "perfect",
                 "--split", "all", "--out", str(out)]) == 0
    rep = json.loads((out / "report.json").read_text())
    assert list(rep["rows"]) == ["Perfect"] and rep["experiment"] == "portfolio"
    assert len((out / "report.txt").read_text().splitlines()) == 3


def test_eval_fastest_with_checkpoint(small, tmp_path):
    assert _train(small, tmp_path / "m") == 0
    out = tmp_path / "ev"
    assert main(["eval", "--experiment", "fastest", "--dataset", str(small / "ds"),
                 "--labels", str(small / "lab" / "labels.jsonl"), "--split", "all",
                 "--checkpoint", f"gnn:rrtconnect={tmp_path / 'm' / 'model.ckpt'}",
                 "--iterations", "20", "--max-set", "5", "--out", str(out)]) == 0
    rows = json.loads((out / "report.json").read_text())["rows"]
    assert set(rows) == {"Perfect", "GNN", "Least obstacles", "Random"}
    assert rows["Perfect"]["RRTConnect"] <= min(v["RRTConnect"] for v in rows.values())


def test_eval_named_model_without_checkpoint(small, tmp_path):
    assert main(["eval", "--dataset", str(small / "ds"), "--labels",
                 str(small / "lab" / "labels.jsonl"), "--predictors", "gnn",
                 "--out", str(tmp_path / "x")]) == 3


def test_tamp_single_iteration(tmp_path):
    ds, lab, out = tmp_path / "ds", tmp_path / "lab", tmp_path / "tp"
    assert main(["gen", "--n", "150", "--seed", "3", "--out", str(ds)]) == 0
    assert main(["solve", "--dataset", str(ds), "--planners", "rrtconnect", *SOLVE,
                 "--out", str(lab)]) == 0
    assert main(["tamp", "--dataset", str(ds), "--labels", str(lab / "labels.jsonl"),
                 "--split", "all", "--iterations", "1", "--out", str(out)]) == 0
    rep = json.loads((out / "report.json").read_text())
    assert rep["iterations"] == 1 and set(rep["rows"]) == {"Perfect", "Least obstacles"}
    assert rep["rows"]["Perfect"]["RRTConnect"] <= rep["rows"]["Least obstacles"]["RRTConnect"]


def test_tamp_without_any_chain_is_runtime_error(small, tmp_path):
    # 12 problems realize too few cells to chain three of them
    rc = main(["tamp", "--dataset", str(small / "ds"), "--labels",
               str(small / "lab" / "labels.jsonl"), "--split", "all", "--iterations", "1",
               "--out", str(tmp_path / "tp")])
    assert rc == 4


def test_config_file_supplies_defaults(run_dir):
    cfg = run_dir / "gen.cfg"
    cfg.write_text("# small run\nn = 4\nseed = 5\ntrain-fraction = 0.5\n")
    assert read_config_file(cfg) == {"n": "4", "seed": "5", "train_fraction": "0.5"}
    assert main(["gen", "--config", str(cfg), "--seed", "6", "--out", str(run_dir / "g")]) == 0
    resolved = json.loads((run_dir / "g" / "config.json").read_text())
    assert resolved["n"] == 4 and resolved["seed"] == 6 and resolved["train_fraction"] == 0.5
    bad = run_dir / "bad.cfg"
    bad.write_text("colour = red\n")
    assert main(["gen", "--config", str(bad)]) == 2
    assert main(["gen", "--config", str(run_dir / "missing.cfg")]) == 3
