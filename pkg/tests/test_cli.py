import json
import subprocess
import sys

import pytest

from stablerps.cli import main


def test_map_stats_json(tmp_path, capsys):
    out = tmp_path / "s.json"
    assert main(["map-stats", "--n", "1000", "--m", "64", "--trials", "50", "--out", str(out)]) == 0
    d = json.loads(out.read_text())
    assert d["passed"] and d["stats"]["max_load"] == 16 and d["stats"]["optimal_max_load"] == 16


def test_verify_stability_exit_code(tmp_path):
    out = tmp_path / "s.json"
    assert main(["verify-stability", "--seed", "1", "--out", str(out)]) == 0
    assert all(c["passed"] for c in json.loads(out.read_text())["checks"])


def test_verify_variance_small_config(tmp_path):
    cfg = tmp_path / "v.json"
    cfg.write_text(json.dumps({"n": 6, "ms": [2, 3], "vectors": 1, "trials": 20000}))
    assert main(["verify-variance", "--config", str(cfg), "--out", str(tmp_path / "o.json")]) == 0


def test_verify_residual_failure_exit_code(tmp_path):
    # a tolerance no finite sample can meet must produce a non-zero exit
    cfg = tmp_path / "r.json"
    cfg.write_text(json.dumps({"count": 1, "samples": 2000, "tol": 1e-9}))
    assert main(["verify-residual", "--config", str(cfg), "--out", str(tmp_path / "o.json")]) == 1


def test_train_and_sweep_csv(tmp_path):
    base = {"hidden": [8], "steps": 20, "seeds": [0, 1],
            "dataset": {"kind": "classification", "classes": 3, "dim": 4, "n_train": 100, "n_test": 50}}
    (tmp_path / "t.json").write_text(json.dumps(base | {"compression": 4}))
    assert main(["train", "--config", str(tmp_path / "t.json"), "--seed", "5", "--out", str(tmp_path / "t.csv")]) == 0
    rows = (tmp_path / "t.csv").read_text().splitlines()
    assert len(rows) == 2 and rows[1].split(",")[4] == "5"
    sweep_cfg = {"base": base, "methods": [{"name": "rps"}, {"name": "prune", "rounds": 2}], "compressions": [2, 4]}
    (tmp_path / "s.json").write_text(json.dumps(sweep_cfg))
    args = ["sweep", "--config", str(tmp_path / "s.json"), "--threads", "2", "--out"]
    assert main(args + [str(tmp_path / "a.csv")]) == 0
    assert main(args + [str(tmp_path / "b.csv")]) == 0
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    assert len((tmp_path / "a.csv").read_text().splitlines()) == 9


def test_bad_input_exit_codes(tmp_path):
    assert main(["map-stats", "--n", "10", "--m", "0"]) == 2
    assert main(["verify-stability", "--threads", "0"]) == 2
    with pytest.raises(SystemExit):
        main(["unknown"])


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "stablerps", "map-stats", "--n", "12", "--m", "4", "--trials", "0"],
                       capture_output=True, text=True)
    assert r.returncode == 0 and json.loads(r.stdout)["stats"]["max_load"] == 3
