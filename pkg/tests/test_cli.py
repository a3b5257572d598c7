import json
import logging
import subprocess
import sys
from pathlib import Path

import pytest

from adareg.cli import main
from adareg.output import csv_header, write_csv

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

BLOWUP = """
schema_version: 1
name: blowup
model:
  n: 1
  m: 1
  d: 1
  f: [[[1.0, [3]]]]
  Gu: [[1.0]]
  Phi: [[[[1.0, [1]]]]]
  phi_lipschitz: [1.0]
  u0: [[]]
  psi: {family: polynomial, terms: [[1.0, [1]]]}
  kappa: {family: constant, value: 1.0}
  beta_min: 0.5
drift: {S: [[0.0]], H: [[1.0]], theta_box: [[-10.0, 10.0]]}
initial: {x0: [10.0], theta0: [1.0], xi0: [10.0]}
integration: {t_end: 1.0, h: 0.001}
"""


@pytest.fixture(scope="module")
def scalar_out(tmp_path_factory):
    out = tmp_path_factory.mktemp("scalar")
    code = main(["run", str(CONFIGS / "scalar.yaml"), "--out", str(out), "--plot"])
    return code, out


def test_run_scalar_defaults(scalar_out):
    code, out = scalar_out
    assert code == 0
    raw = (out / "trajectory.csv").read_bytes()
    assert b"\r" not in raw
    lines = raw.decode().split("\n")
    assert lines[0] == "t,x_1,theta_1,theta_hat_1,xi_1,nu_1,eps0,eps1,eps2,u_1,psi,varphi_psi"
    assert lines[0].split(",") == csv_header(1, 1, 1)
    assert len(lines) == 1001 + 2  # header, samples, trailing newline
    doc = json.loads((out / "verdict.json").read_text())
    assert doc["schema_version"] == 1 and doc["exit_code"] == 0 and doc["ok"]
    for c in doc["checks"] + doc["assumptions"]:
        assert {"name", "passed", "measured", "threshold"} <= set(c)
    assert (out / "summary.svg").read_text().lstrip().startswith("<?xml")


def test_csv_round_trips_doubles(scalar_out):
    _, out = scalar_out
    row = (out / "trajectory.csv").read_text().split("\n")[7].split(",")
    for v in row:
        assert float(repr(float(v))) == float(v)


def test_report_round_trip_is_byte_identical(scalar_out, tmp_path):
    _, out = scalar_out
    target = tmp_path / "again.json"
    code = main(["report", str(out / "trajectory.csv"), str(CONFIGS / "scalar.yaml"), "--out", str(target)])
    assert code == 0
    assert target.read_bytes() == (out / "verdict.json").read_bytes()


def test_report_truncated_csv(scalar_out, tmp_path, caplog):
    _, out = scalar_out
    lines = (out / "trajectory.csv").read_text().split("\n")
    bad = tmp_path / "bad.csv"
    bad.write_text("\n".join(lines[:40]) + "\n" + lines[40][:15] + "\n")
    with caplog.at_level(logging.ERROR):
        code = main(["report", str(bad), str(CONFIGS / "scalar.yaml"), "--out", str(tmp_path / "v.json")])
    assert code == 2
    assert "row 41" in caplog.text


def test_report_wrong_header(scalar_out, tmp_path, caplog):
    _, out = scalar_out
    bad = tmp_path / "bad.csv"
    bad.write_text((out / "trajectory.csv").read_text().replace("theta_hat_1", "th", 1))
    with caplog.at_level(logging.ERROR):
        assert main(["report", str(bad), str(CONFIGS / "scalar.yaml")]) == 2
    assert "row 1" in caplog.text


def test_report_stride_subsampled(scalar_out, tmp_path):
    _, out = scalar_out
    lines = (out / "trajectory.csv").read_text().rstrip("\n").split("\n")
    sub = [lines[0]] + lines[1::5]
    if sub[-1] != lines[-1]:
        sub.append(lines[-1])
    p = tmp_path / "sub.csv"
    p.write_text("\n".join(sub) + "\n")
    target = tmp_path / "sub.json"
    main(["report", str(p), str(CONFIGS / "scalar.yaml"), "--slack-scale", "5", "--out", str(target)])
    checks = {c["name"]: c for c in json.loads(target.read_text())["checks"]}
    assert checks["v_theta_monotone"]["passed"] and checks["v_xi_monotone"]["passed"]


def test_report_on_drift_run(builtin_runs, tmp_path):
    _, tr = builtin_runs("hopf-circle-drift")
    csv_path = tmp_path / "trajectory.csv"
    write_csv(csv_path, tr)
    target = tmp_path / "verdict.json"
    code = main(["report", str(csv_path), str(CONFIGS / "hopf_circle_drift.yaml"), "--out", str(target)])
    doc = json.loads(target.read_text())
    rate = next(c for c in doc["checks"] if c["name"] == "exp_rate")
    assert code == 0 and doc["ok"]
    assert rate["passed"] and rate["measured"] > 0


def test_run_t_end_before_t0(tmp_path, caplog):
    with caplog.at_level(logging.ERROR):
        code = main(["run", str(CONFIGS / "invalid" / "t_end_before_t0.yaml"), "--out", str(tmp_path)])
    assert code == 2
    assert "integration.t_end" in caplog.text


def test_run_unknown_key(tmp_path, caplog):
    with caplog.at_level(logging.ERROR):
        code = main(["run", str(CONFIGS / "invalid" / "unknown_key.yaml"), "--out", str(tmp_path)])
    assert code == 2
    assert "integraton" in caplog.text and "diagnostics.pe_window_T" in caplog.text


def test_run_missing_file(tmp_path):
    assert main(["run", str(tmp_path / "nope.yaml"), "--out", str(tmp_path)]) == 2


def test_run_blowup_exit_3(tmp_path):
    cfg = tmp_path / "blowup.yaml"
    cfg.write_text(BLOWUP)
    with pytest.warns(RuntimeWarning):
        code = main(["run", str(cfg), "--out", str(tmp_path / "o")])
    assert code == 3
    doc = json.loads((tmp_path / "o" / "verdict.json").read_text())
    assert doc["failure"]["kind"] == "NonFiniteState"
    assert {c["status"] for c in doc["checks"][1:]} == {"not_evaluated"}
    assert (tmp_path / "o" / "trajectory.csv").exists()


def test_run_flags_override(tmp_path):
    out = tmp_path / "o"
    code = main(["run", str(CONFIGS / "scalar.yaml"), "--t-end", "2", "--h", "0.002", "--mode", "theorem2",
                 "--out", str(out)])
    doc = json.loads((out / "verdict.json").read_text())
    assert doc["mode"] == "theorem2"
    lines = (out / "trajectory.csv").read_text().rstrip("\n").split("\n")
    assert float(lines[-1].split(",")[0]) == 2.0
    assert float(lines[2].split(",")[0]) == pytest.approx(0.02)
    assert code in (0, 1)


def test_run_jobs_worst_code_wins(tmp_path):
    code = main(["run", str(CONFIGS / "scalar.yaml"), str(CONFIGS / "invalid" / "t_end_before_t0.yaml"),
                 "--t-end", "1", "--jobs", "2", "--out", str(tmp_path)])
    assert code == 2
    assert (tmp_path / "scalar" / "verdict.json").exists()


def test_run_deterministic(tmp_path):
    for k in (1, 2):
        main(["run", str(CONFIGS / "scalar.yaml"), "--t-end", "1", "--out", str(tmp_path / str(k))])
    for name in ("trajectory.csv", "verdict.json"):
        assert (tmp_path / "1" / name).read_bytes() == (tmp_path / "2" / name).read_bytes()


@pytest.mark.parametrize("config, code", [
    ("scalar.yaml", 0),
    ("hopf_circle.yaml", 0),
    ("hopf_indefinite_H.yaml", 1),
    ("hopf_origin_region.yaml", 1),
])
def test_verify(config, code, tmp_path):
    assert main(["verify", str(CONFIGS / config), "--out", str(tmp_path)]) == code
    doc = json.loads((tmp_path / "verify.json").read_text())
    assert doc["exit_code"] == code


def test_verify_reports_origin_violator(tmp_path):
    main(["verify", str(CONFIGS / "hopf_origin_region.yaml"), "--out", str(tmp_path)])
    doc = json.loads((tmp_path / "verify.json").read_text())
    c = next(c for c in doc["checks"] if c["name"] == "manifold_inequality")
    assert not c["passed"]
    x = c["location"]["x"]
    assert len(x) == 2 and (x[0] ** 2 + x[1] ** 2) ** 0.5 < 0.5
    failing = [c["name"] for c in doc["checks"] if c["hard"] and not c["passed"]]
    assert failing == ["manifold_inequality"]


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "adareg", "--help"], capture_output=True, text=True)
    assert r.returncode == 0
    assert "run" in r.stdout and "verify" in r.stdout and "report" in r.stdout
