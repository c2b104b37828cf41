import json
import subprocess
import sys

import numpy as np
import pytest

from semtree import cli
from semtree.tree import load_tree


@pytest.fixture(scope="module")
def csvs(tmp_path_factory):
    root = tmp_path_factory.mktemp("data")
    assert cli.main(["gen", "teacher", "--seed", "1", "--height", "3", "--samples", "1200",
                     "--out", str(root / "teacher.csv"), "--teacher-out", str(root / "teacher.json")]) == 0
    assert cli.main(["gen", "blobs", "--seed", "1", "--out", str(root / "blobs.csv")]) == 0
    return root


def _train(csvs, out, *extra):
    return cli.main(["train", "--task", "regress", "--data", str(csvs / "teacher.csv"), "--label", "y",
                     "--height", "2", "--epochs", "6", "--out", str(out), *extra])


def test_train_then_eval_reproduces_report(csvs, tmp_path, capsys):
    rep = tmp_path / "r.json"
    assert _train(csvs, tmp_path / "t.json", "--report", str(rep), "--epochs-csv", str(tmp_path / "e.csv")) == 0
    final = json.loads(rep.read_text())["final"]
    capsys.readouterr()
    for split in ("train", "test"):
        assert cli.main(["eval", "--model", str(tmp_path / "t.json"), "--data", str(csvs / "teacher.csv"),
                         "--label", "y", "--split", split]) == 0
        got = json.loads(capsys.readouterr().out)
        assert got[f"{split}_rmse"] == final[f"{split}_rmse"]
    assert (tmp_path / "e.csv").read_text().splitlines()[0] == "epoch,k,loss"


def test_reruns_are_byte_identical(csvs, tmp_path):
    for name in ("a", "b"):
        assert _train(csvs, tmp_path / f"{name}.json", "--report", str(tmp_path / f"{name}_r.json")) == 0
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
    assert (tmp_path / "a_r.json").read_bytes() == (tmp_path / "b_r.json").read_bytes()


@pytest.mark.parametrize("selector", ["ste", "topk-reg1"])
def test_selectors_run(csvs, tmp_path, selector):
    assert _train(csvs, tmp_path / "t.json", "--selector", selector) == 0


def test_classification_and_cart(csvs, tmp_path, capsys):
    data = ["--data", str(csvs / "blobs.csv"), "--label", "y", "--task", "classify"]
    assert cli.main(["train", *data, "--height", "1", "--epochs", "60", "--out", str(tmp_path / "c.json")]) == 0
    assert json.loads(capsys.readouterr().out)["test_accuracy"] == 1.0
    assert cli.main(["cart", *data, "--max-depth", "3", "--out", str(tmp_path / "cart.json")]) == 0
    capsys.readouterr()
    assert cli.main(["eval", "--model", str(tmp_path / "cart.json"), "--data", str(csvs / "blobs.csv"),
                     "--label", "y"]) == 0
    assert "test_accuracy" in json.loads(capsys.readouterr().out)


def test_export_round_trip(csvs, tmp_path):
    src = csvs / "teacher.json"
    assert cli.main(["export", "--model", str(src), "--format", "json", "--out", str(tmp_path / "x.json")]) == 0
    assert cli.main(["export", "--model", str(src), "--format", "dot", "--out", str(tmp_path / "x.dot")]) == 0
    a, b = load_tree(src), load_tree(tmp_path / "x.json")
    X = np.random.default_rng(0).uniform(-1, 1, size=(500, 2))
    assert np.array_equal(a.predict_reg(X), b.predict_reg(X))
    assert (tmp_path / "x.dot").read_text().startswith("digraph")


def test_ablate_root_outputs(tmp_path):
    assert cli.main(["ablate", "root", "--seeds", "0", "--epochs", "1", "--out-dir", str(tmp_path)]) == 0
    for name in ("ste", "topk"):
        assert (tmp_path / f"root_seed0_{name}.csv").read_text().startswith("step,wx,wy,loss\n")
    summary = (tmp_path / "root_summary.csv").read_text().splitlines()
    assert summary[0] == "seed,ste_distance,topk_distance" and len(summary) == 2


@pytest.mark.parametrize(
    "argv",
    [
        ["train", "--task", "regress", "--label", "y", "--height", "2", "--out", "x"],  # no --data
        ["train", "--task", "regress", "--data", "{csv}", "--label", "nope", "--height", "2", "--out", "{out}"],
        ["train", "--task", "regress", "--data", "{csv}", "--label", "y", "--height", "2", "--out", "{out}",
         "--k-schedule", "2:0,4:3,1:5"],
        ["train", "--task", "regress", "--data", "{csv}", "--label", "y", "--height", "-1", "--out", "{out}"],
        ["train", "--task", "regress", "--data", "{csv}", "--label", "y", "--height", "2",
         "--out", "/no/such/dir/t.json"],
        ["eval", "--model", "{missing}", "--data", "{csv}", "--label", "y"],
        ["ablate", "root", "--seeds", "a-b", "--out-dir", "{dir}"],
    ],
)
def test_config_errors_exit_two(csvs, tmp_path, argv, capsys):
    fill = {"csv": str(csvs / "teacher.csv"), "out": str(tmp_path / "t.json"),
            "missing": str(tmp_path / "none.json"), "dir": str(tmp_path)}
    argv = [a.format(**fill) for a in argv]
    try:
        code = cli.main(argv)
    except SystemExit as exc:  # argparse rejects missing required flags itself
        code = exc.code
    assert code == 2
    assert not (tmp_path / "t.json").exists()
    assert "error" in capsys.readouterr().err


def test_runtime_failure_exits_one_without_partial_output(csvs, tmp_path, monkeypatch):
    def boom(*args, **kwargs):
        raise FloatingPointError("diverged")

    monkeypatch.setattr(cli, "train_regression", boom)
    assert _train(csvs, tmp_path / "t.json", "--report", str(tmp_path / "r.json")) == 1
    assert list(tmp_path.iterdir()) == []


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "semtree", "--help"], capture_output=True, text=True)
    assert out.returncode == 0 and "train" in out.stdout
