import json
import os
import shutil
import subprocess
import sys

import pytest

from tdmrec.cli import load_config, main
from tdmrec.errors import ConfigError

STAGES = ["gen-synthetic", "ingest", "od", "assign", "fit-pref", "recommend", "simulate", "sweep"]
CONFIG = {
    "synthetic": {"n_nodes": 5, "n_travelers": 120, "n_residents": 60, "days": 3,
                  "spoke_capacity": 40.0, "ring_capacity": 30.0},
    "preference": {"k": 3, "epochs": 30},
    "rnn": {"epochs": 3},
    "scenario": {"rho_grid": [0.0, 0.5, 1.0], "theta_grid": [0.0, 0.5, 1.0]},
}


def write_config(path, doc=CONFIG):
    path.write_text(json.dumps(doc))
    return str(path)


def run_all(out, config, seed=7):
    for stage in STAGES:
        assert main([stage, "--config", config, "--seed", str(seed), "--out", str(out)]) == 0, stage


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    config = write_config(root / "config.json")
    run_all(root / "a", config)
    return root, config


def test_pipeline_outputs(pipeline):
    root, _ = pipeline
    out = root / "a"
    for name in ("trajectories.csv", "od.csv", "flows.csv", "background.csv", "model.json", "plan.json",
                 "baseline.json", "scenario.csv", "results.csv", "link_profile.csv", "theta.csv"):
        assert (out / name).exists(), name
    lines = (out / "results.csv").read_text().splitlines()
    assert lines[0] == "rho,theta,avg_delay_min,idealized_count,idealized_score"
    assert len(lines) - 1 == len(CONFIG["scenario"]["rho_grid"])
    manifest = json.loads((out / "sweep.manifest.json").read_text())
    assert manifest["command"] == "sweep" and manifest["seed"] == 7 and manifest["tool"] == "tdmrec"
    assert set(manifest["outputs"]) == {"results.csv", "link_profile.csv", "theta.csv"}
    assert "plan.json" in manifest["inputs"]


def test_rerun_is_byte_identical(pipeline):
    root, config = pipeline
    run_all(root / "b", config)
    for name in ("results.csv", "plan.json", "link_profile.csv", "theta.csv", "model.json"):
        assert (root / "a" / name).read_bytes() == (root / "b" / name).read_bytes(), name


def test_predict(pipeline, capsys):
    root, config = pipeline
    out = root / "a"
    assert main(["predict", "--config", config, "--seed", "7", "--out", str(out),
                 "--resolution", "merged", "--model", "markov"]) == 0
    text = (out / "accuracy_merged_markov.csv").read_text().splitlines()
    assert text[0] == "resolution,model,accuracy,improvement,n_users" and len(text) == 3
    assert "markov" in capsys.readouterr().out


def test_recommend_before_fit_pref_names_producer(pipeline, tmp_path, capsys):
    root, config = pipeline
    for stage in ("gen-synthetic", "ingest", "od", "assign"):
        assert main([stage, "--config", config, "--seed", "7", "--out", str(tmp_path)]) == 0
    capsys.readouterr()
    assert main(["recommend", "--config", config, "--seed", "7", "--out", str(tmp_path)]) == 1
    assert "fit-pref" in capsys.readouterr().err


def test_tampered_artifact_detected(pipeline, tmp_path, capsys):
    root, config = pipeline
    out = tmp_path / "t"
    shutil.copytree(root / "a", out)
    with open(out / "plan.json", "a") as fh:
        fh.write(" ")
    capsys.readouterr()
    assert main(["sweep", "--config", config, "--seed", "7", "--out", str(out)]) == 1
    assert "recommend" in capsys.readouterr().err


def test_invalid_config_lists_field_paths(tmp_path, capsys):
    bad = write_config(tmp_path / "bad.json", {"scenario": {"rho_grid": [0.0, 1.5]}, "optimizer": {"nope": 1}})
    assert main(["sweep", "--config", bad, "--seed", "1", "--out", str(tmp_path)]) == 1
    err = capsys.readouterr().err
    assert "scenario.rho_grid[1]" in err and "optimizer.nope" in err
    with pytest.raises(ConfigError) as exc:
        load_config(None, None)
    assert any(p.startswith("seed:") for p in exc.value.problems)


def test_missing_raw_input_exits_1(tmp_path, capsys):
    assert main(["ingest", "--seed", "1", "--out", str(tmp_path)]) == 1
    assert "paths.cdr" in capsys.readouterr().err


def test_runtime_failure_exits_2(pipeline, tmp_path, capsys):
    root, config = pipeline
    out = tmp_path / "r"
    shutil.copytree(root / "a", out)
    (out / "counts.csv").write_text("link_id,time_bin,vehicles_per_hour\n")
    capsys.readouterr()
    assert main(["assign", "--config", config, "--seed", "7", "--out", str(out)]) == 2
    assert "runtime error" in capsys.readouterr().err


def test_module_entry_point(tmp_path):
    env = {**os.environ, "PYTHONPATH": os.pathsep.join(sys.path)}
    proc = subprocess.run([sys.executable, "-m", "tdmrec", "--version"], capture_output=True, text=True, env=env)
    assert proc.returncode == 0 and "tdmrec" in proc.stdout
