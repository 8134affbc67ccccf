import hashlib
import json
import shutil
from importlib.resources import files

import pytest

from gasalpha.cli import main
from gasalpha.config import PROFILES, load_config
from gasalpha.errors import ConfigurationError
from gasalpha.pipeline import STAGES

FIXTURE = str(files("gasalpha") / "data" / "fixture.yaml")


def digest_tree(root):
    return {p.relative_to(root).as_posix(): hashlib.sha256(p.read_bytes()).hexdigest()
            for p in sorted(root.rglob("*")) if p.is_file()}


@pytest.fixture(scope="module")
def run_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("run") / "out"
    assert main(["all", "--config", FIXTURE, "--out", str(out)]) == 0
    return out


def test_all_writes_every_stage(run_dir):
    manifest = json.loads((run_dir / "manifest.json").read_text())
    assert sorted(manifest["stages"]) == sorted(STAGES)
    for stage in STAGES:
        m = json.loads((run_dir / stage / "manifest.json").read_text())
        assert m["seed"] == 7 and m["outputs"] and "numpy" in m["versions"]
        assert m["config"]["gp"]["population_size"] == 120
    for name in ("ingest/labels.csv", "features/features.csv", "mine/pool.txt", "select/report.json",
                 "train/predictions.csv", "train/metrics.csv", "backtest/curves.csv"):
        assert (run_dir / name).exists(), name


def test_manifest_hashes_match_files(run_dir):
    manifest = json.loads((run_dir / "manifest.json").read_text())
    for stage, rec in manifest["stages"].items():
        for rel, h in rec["outputs"].items():
            assert hashlib.sha256((run_dir / rel).read_bytes()).hexdigest() == h


def test_rerunning_a_stage_is_byte_identical(run_dir, tmp_path):
    copy = tmp_path / "copy"
    shutil.copytree(run_dir, copy)
    for stage in ("train", "backtest"):
        shutil.rmtree(copy / stage)
    before = {k: v for k, v in digest_tree(copy).items() if k.startswith("select/")}
    assert main(["select", "--config", FIXTURE, "--out", str(copy)]) == 0
    after = {k: v for k, v in digest_tree(copy).items() if k.startswith("select/")}
    assert before == after


def test_train_without_select(tmp_path, capsys):
    assert main(["train", "--config", FIXTURE, "--out", str(tmp_path / "empty")]) == 4
    assert "run the `select` stage first" in capsys.readouterr().err


def test_invalid_config_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text("data: {ohlcv: x.csv}\nselection:\n  boruta: {n_estimatorz: 3}\n")
    assert main(["all", "--config", str(bad), "--out", str(tmp_path / "o")]) == 2
    assert "selection.boruta.n_estimatorz" in capsys.readouterr().err


def test_missing_data_exit_code(tmp_path):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("data: {ohlcv: nowhere.csv}\n")
    assert main(["ingest", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 3


def test_profile_and_override_precedence(tmp_path):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("data: {ohlcv: x.csv}\ngp: {generations: 2}\nseed: 3\n")
    c, base, out = load_config(cfg, "paper", seed=11, out=str(tmp_path / "o"))
    assert c.gp.population_size == PROFILES["paper"]["gp"]["population_size"]
    assert c.gp.generations == 2 and c.seed == 11 and out == (tmp_path / "o").resolve()
    assert c.ensemble.base[0].params["n_estimators"] == PROFILES["paper"]["learners"]["forest"]["n_estimators"]
    desk, _, _ = load_config(cfg)
    assert desk.gp.population_size == 500 and desk.seed == 3
    with pytest.raises(ConfigurationError):
        load_config(tmp_path / "absent.yaml")
