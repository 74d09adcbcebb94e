import csv
import json
import os
import subprocess
from pathlib import Path

import jsonschema
import pytest

BIN = os.environ["GMSDE_BIN"]
ROOT = Path(__file__).resolve().parents[2]
SCHEMA = json.loads((ROOT / "schemas" / "benchmark_report.schema.json").read_text())


def run(*args, cwd=None):
    return subprocess.run([BIN, *map(str, args)], capture_output=True, text=True, cwd=cwd)


def rows(path):
    with open(path) as f:
        return list(csv.reader(f))


def write_cfg(path, text):
    path.write_text(text)
    return path


TINY = """[experiment]
system = ou
realizations = 2
[observations]
n_obs = 20
[gpfit]
iterations = 40
restarts = 1
[mars]
iterations = {iters}
batch_size = 16
[ares]
iterations = {iters}
batch_size = 16
hidden1 = 16
hidden2 = 8
"""


@pytest.fixture
def ou_data(tmp_path):
    out = tmp_path / "ou"
    assert run("simulate", "--system", "ou", "--seed", 3, "--out", out).returncode == 0
    return out


def test_simulate_is_byte_identical(tmp_path):
    for d in ("a", "b"):
        assert run("simulate", "--system", "dw", "--seed", 9, "--out", tmp_path / d).returncode == 0
    for name in ("trajectory.csv", "observations.csv", "meta.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_simulate_ou_shape(ou_data):
    r = rows(ou_data / "observations.csv")
    header, body = r[0], r[1:]
    assert len(body) == 50
    assert len(header) == 2  # time plus one state
    meta = json.loads((ou_data / "meta.json").read_text())
    assert meta["system"] == "ou"
    assert meta["theta_true"] == [0.5, 1.0]
    assert meta["seed"] == 3


def test_simulate_lv_is_noise_free(tmp_path):
    out = tmp_path / "lv"
    assert run("simulate", "--system", "lv", "--out", out).returncode == 0
    obs = rows(out / "observations.csv")[1:]
    assert len(obs) == 50 and len(obs[0]) == 3
    traj = {r[0]: r[1:] for r in rows(out / "trajectory.csv")[1:]}
    # every observation sits on a trajectory row with identical values
    hits = [r for r in obs if r[0] in traj]
    assert hits
    for r in hits:
        assert traj[r[0]] == r[1:]


def test_missing_observation_file(tmp_path):
    p = run("fit", "--system", "ou", "--obs", tmp_path / "nope.csv", "--out", tmp_path)
    assert p.returncode == 2
    assert "nope.csv" in p.stderr


def test_malformed_csv_reports_line(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("t,x1\n0.0,1.0\n0.5,abc\n1.0,2.0\n")
    p = run("fit", "--system", "ou", "--obs", bad, "--out", tmp_path)
    assert p.returncode == 2
    assert "bad.csv: line 3" in p.stderr


def test_usage_errors(tmp_path):
    assert run("simulate", "--out", tmp_path).returncode == 2
    assert run("simulate", "--system", "vdp", "--out", tmp_path).returncode == 2
    assert run("frobnicate").returncode == 2
    cfg = write_cfg(tmp_path / "c.ini", "[experiment]\nsystem = ou\ntypo = 1\n")
    assert run("simulate", "--config", cfg, "--out", tmp_path).returncode == 2


def test_lorenz_needs_experimental(tmp_path):
    p = run("simulate", "--system", "lorenz63", "--out", tmp_path / "l")
    assert p.returncode == 2
    assert "experimental" in p.stderr
    assert run("simulate", "--system", "lorenz63", "--experimental", "--out", tmp_path / "l").returncode == 0


@pytest.mark.parametrize("method,key", [("mars", "mmd2"), ("ares", "critic_objective")])
def test_infer_trace_length(tmp_path, ou_data, method, key):
    cfg = write_cfg(tmp_path / "c.ini", TINY.format(iters=7))
    assert run("fit", "--config", cfg, "--obs", ou_data / "observations.csv", "--out", tmp_path).returncode == 0
    fit = json.loads((tmp_path / "fit.json").read_text())
    for k in ("kernel", "phi", "sigma", "G", "H", "log_evidence", "seed"):
        assert k in fit
    p = run("infer", "--config", cfg, "--method", method, "--obs", ou_data / "observations.csv",
            "--fit", tmp_path / "fit.json", "--out", tmp_path / method)
    assert p.returncode == 0, p.stderr
    lines = (tmp_path / method / "trace.jsonl").read_text().splitlines()
    assert len(lines) == 7
    first = json.loads(lines[0])
    assert first["iter"] == 0 and key in first and len(first["theta"]) == 2
    res = json.loads((tmp_path / method / "result.json").read_text())
    assert res["method"] == method and len(res["theta"]) == 2


def test_divergence_exit_code_keeps_trace(tmp_path, ou_data):
    cfg = write_cfg(tmp_path / "c.ini", TINY.format(iters=200))
    text = cfg.read_text().replace("[mars]\n", "[mars]\nlearning_rate = 1e7\n")
    cfg.write_text(text)
    assert run("fit", "--config", cfg, "--obs", ou_data / "observations.csv", "--out", tmp_path).returncode == 0
    p = run("infer", "--config", cfg, "--obs", ou_data / "observations.csv", "--fit", tmp_path / "fit.json",
            "--out", tmp_path / "div")
    assert p.returncode == 1
    lines = (tmp_path / "div" / "trace.jsonl").read_text().splitlines()
    assert 0 < len(lines) < 200


def test_benchmark_report(tmp_path):
    cfg = write_cfg(tmp_path / "c.ini", TINY.format(iters=5))
    p = run("benchmark", "--config", cfg, "--out", tmp_path / "b", "--threads", 2)
    assert p.returncode == 0, p.stderr
    report = json.loads((tmp_path / "b" / "report.json").read_text())
    jsonschema.validate(report, SCHEMA)
    assert report["realizations"] == 2 and report["successful"] == 2
    assert [e["name"] for e in report["parameters"]] == ["theta0", "theta1"]
    first = json.loads((tmp_path / "b" / "runs" / "realization_000" / "trace.jsonl").read_text().splitlines()[0])
    assert set(first) == {"iter", "theta", "mmd2"}
    again = run("report", tmp_path / "b" / "report.json")
    assert again.returncode == 0
    assert again.stdout == (tmp_path / "b" / "report.txt").read_text()


def test_single_realization_std_is_zero(tmp_path):
    cfg = write_cfg(tmp_path / "c.ini", TINY.format(iters=3))
    p = run("benchmark", "--config", cfg, "--realizations", 1, "--out", tmp_path / "b")
    assert p.returncode == 0, p.stderr
    report = json.loads((tmp_path / "b" / "report.json").read_text())
    jsonschema.validate(report, SCHEMA)
    assert all(e["std"] == 0 for e in report["parameters"] + report["H"])
