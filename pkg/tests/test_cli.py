import csv
import subprocess
import sys
from pathlib import Path

import pytest

from cocomilp.cli import ABLATION_GRID, main

TINY = """
[data]
n_train = 4
n_valid = 2
n_test = 3
sc_rows = 8
sc_cols = 16
sc_density = 0.25

[train]
epochs = 2
pool_size = 3

[gnn]
embed_size = 6

[bnb]
node_limit = 10

[search]
k0 = 4
delta = 2
"""

STAGES = ["generate", "label", "train", "search", "eval", "analyze"]


@pytest.fixture
def cfg_path(tmp_path):
    path = tmp_path / "tiny.toml"
    path.write_text(TINY)
    return path


def _run(cmd, cfg_path, out, *extra):
    return main([cmd, "--config", str(cfg_path), "--out", str(out), *extra])


def _snapshot(root):
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(Path(root).rglob("*")) if p.is_file()}


def test_full_pipeline_is_byte_deterministic(cfg_path, tmp_path):
    out = tmp_path / "run"
    for stage in STAGES:
        assert _run(stage, cfg_path, out) == 0, stage
    first = _snapshot(out)
    for name in ("manifest.json", "pools/sc_test_000.pool.json", "model.json", "train_log.csv",
                 "search_results.json", "results.csv", "analysis/variance.csv",
                 "config.train.toml"):
        assert name in first
    for stage in STAGES:
        assert _run(stage, cfg_path, out) == 0, stage
    assert _snapshot(out) == first


def test_train_twice_gives_identical_checkpoints(cfg_path, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        for stage in ("generate", "label", "train"):
            assert _run(stage, cfg_path, out) == 0
    assert (a / "model.json").read_bytes() == (b / "model.json").read_bytes()


def test_seed_flag_changes_data(cfg_path, tmp_path):
    _run("generate", cfg_path, tmp_path / "s0")
    _run("generate", cfg_path, tmp_path / "s1", "--seed", "1")
    a = (tmp_path / "s0/instances/sc_train_000.milp.json").read_bytes()
    b = (tmp_path / "s1/instances/sc_train_000.milp.json").read_bytes()
    assert a != b


def test_config_errors_exit_1_and_name_the_field(cfg_path, tmp_path, capsys):
    assert _run("generate", cfg_path, tmp_path, "--gnn.embed_sz", "4") == 1
    assert "gnn.embed_sz" in capsys.readouterr().err
    assert _run("generate", cfg_path, tmp_path, "--loss.tau=-1") == 1
    assert "[loss]" in capsys.readouterr().err
    with pytest.raises(SystemExit) as exc:
        main(["bogus"])
    assert exc.value.code == 1


def test_search_with_oversized_region_names_search_config(cfg_path, tmp_path, capsys):
    out = tmp_path / "r"
    for stage in ("generate", "label", "train"):
        assert _run(stage, cfg_path, out) == 0
    assert _run("search", cfg_path, out, "--search.k0", "10", "--search.k1", "10") == 1
    assert "SearchConfig" in capsys.readouterr().err


def test_missing_inputs_exit_1(cfg_path, tmp_path, capsys):
    assert _run("label", cfg_path, tmp_path / "empty") == 1
    assert "manifest" in capsys.readouterr().err


def test_bad_log_level(cfg_path, tmp_path, monkeypatch):
    monkeypatch.setenv("COCO_LOG", "chatty")
    assert _run("generate", cfg_path, tmp_path) == 1


def test_malformed_instance_exits_1(cfg_path, tmp_path, capsys):
    out = tmp_path / "r"
    assert _run("generate", cfg_path, out) == 0
    (out / "instances" / "sc_train_000.milp.json").write_text("{}")
    assert _run("label", cfg_path, out) == 1
    assert "sc_train_000" in capsys.readouterr().err


def test_runtime_failure_exits_2(cfg_path, tmp_path, monkeypatch, capsys):
    import cocomilp.cli as cli
    from cocomilp.pipeline import TrainingDivergence

    out = tmp_path / "r"
    for stage in ("generate", "label"):
        assert _run(stage, cfg_path, out) == 0

    def diverge(*args, **kwargs):
        raise TrainingDivergence("non-finite loss")

    monkeypatch.setattr(cli, "train_model", diverge)
    assert _run("train", cfg_path, out) == 2
    assert "TrainingDivergence" in capsys.readouterr().err


def test_ablate_table_rows(cfg_path, tmp_path):
    out = tmp_path / "r"
    for stage in ("generate", "label"):
        assert _run(stage, cfg_path, out) == 0
    assert _run("ablate", cfg_path, out, "--train.epochs", "1") == 0
    rows = list(csv.DictReader((out / "ablation" / "ablation.csv").open()))
    assert len(rows) == 8
    names = [r["variant"] for r in rows]
    assert {"BCE", "no-rank", "no-MSCL", "no-ICC", "full"} <= set(names)
    assert names == [v for v, _, _ in ABLATION_GRID]


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "cocomilp", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "ablate" in res.stdout
