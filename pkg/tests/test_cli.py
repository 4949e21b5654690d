import csv
import io
import json
import os
import subprocess
import sys

import pytest

from bridgelab.cli import main, parse_pairs, parse_range, UsageError

SMALL = ["--paths", "512", "--grid", "128", "--seed", "1"]


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_verify_beta0_exact(capsys):
    code, out, _ = run(capsys, "verify", "--identity", "dmmy", "--beta", "0", "--paths", "2")
    report = json.loads(out)
    assert code == 0
    assert report["estimate"]["mean"] == 1.0
    assert report["verdict"] == "pass"
    assert report["config"]["paths"] == 2 and report["config"]["identity"] == "dmmy"


def test_verify_small_run(capsys):
    code, out, _ = run(capsys, "verify", "--identity", "link-a", "--alpha", "0.75", *SMALL)
    report = json.loads(out)
    assert code == 0 and report["kind"] == "link-a" and report["target"] == 0.5


@pytest.mark.parametrize("argv", [
    ["verify", "--identity", "link-a", "--alpha", "0.4"],
    ["verify", "--identity", "link-a"],
    ["verify", "--alpha", "0.7"],
    ["verify", "--identity", "nope", "--alpha", "0.7"],
    ["verify", "--identity", "dmmy", "--paths", "3"],
    ["verify", "--identity", "dmmy", "--bogus"],
    ["verify", "--identity", "dmmy", "--alpha", "-1"],
    ["power"],
    ["frobnicate"],
])
def test_usage_and_domain_errors_exit_1(capsys, argv):
    code, out, err = run(capsys, *argv)
    assert code == 1
    assert out == "" and "error" in err


def test_statistical_failure_exits_2(capsys):
    # at tiny t, sinh(B_t) and sqrt(t) Z are indistinguishable, so the negative
    # control cannot reject and reports a failure
    code, out, _ = run(capsys, "ks", "--t", "1e-6", "--control", "--paths", "2000", "--grid", "16")
    report = json.loads(out)
    assert report["verdict"] == "fail" and report["p_value"] > 0.01
    assert code == 2


def test_scan_rows(capsys):
    code, out, _ = run(capsys, "scan", "--identity", "link-a", "--alpha-range", "0.55:1.0:0.05",
                       "--paths", "64", "--grid", "64")
    rows = list(csv.reader(io.StringIO(out)))
    assert rows[0] == ["kind", "alpha", "beta", "n", "eps", "estimate", "stderr", "target", "z", "verdict"]
    assert len(rows) == 11
    assert [float(r[1]) for r in rows[1:]] == pytest.approx([0.55 + 0.05 * i for i in range(10)])
    assert code in (0, 2)
    code, out, _ = run(capsys, "scan", "--identity", "link-b", "--alpha-range", "0:0.4:0.1",
                       "--paths", "64", "--grid", "64")
    assert len(out.strip().splitlines()) == 6


def test_scan_errors(capsys):
    assert run(capsys, "scan", "--identity", "link-a", "--alpha-range", "0.9:0.6:0.1")[0] == 1
    assert run(capsys, "scan", "--identity", "link-a", "--alpha-range", "0.4:0.6:0.1")[0] == 1
    assert run(capsys, "scan", "--identity", "link-a")[0] == 1


def test_parse_helpers():
    assert parse_range("0:1:0.25") == [0, 0.25, 0.5, 0.75, 1.0]
    assert parse_range("0.6:0.9:0.1") == [0.6, 0.7, 0.8, 0.9]
    for bad in ("1:0:0.1", "0:1:0", "a:b:c", "0:1"):
        with pytest.raises(UsageError):
            parse_range(bad)
    assert parse_pairs("0.1,0.2;0.3,0.4") == [(0.1, 0.2), (0.3, 0.4)]
    with pytest.raises(UsageError):
        parse_pairs("0.1,0.2,0.3")


def test_config_file_and_override(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# small run\nidentity = link-b\nalpha = 0.25\npaths = 128\ngrid = 64\nseed = 5\n")
    code, out, _ = run(capsys, "verify", "--config", str(cfg), "--seed", "6")
    report = json.loads(out)
    assert report["config"]["seed"] == 6 and report["config"]["alpha"] == 0.25
    assert report["provenance"]["seed"] == 6 and report["provenance"]["n_paths"] == 128
    bad = tmp_path / "bad.cfg"
    bad.write_text("colour = blue\n")
    assert run(capsys, "verify", "--config", str(bad))[0] == 1
    bad.write_text("just words\n")
    assert run(capsys, "verify", "--config", str(bad))[0] == 1


def test_json_report_replays_bit_identically(tmp_path, capsys):
    first = tmp_path / "a.json"
    second = tmp_path / "b.json"
    assert run(capsys, "verify", "--identity", "link12-log", *SMALL, "--beta", "1.5",
               "--out", str(first))[0] == 0
    assert run(capsys, "verify", "--config", str(first), "--out", str(second))[0] == 0
    assert first.read_bytes() == second.read_bytes()


def test_out_is_atomic_and_leaves_no_temp(tmp_path, capsys):
    out = tmp_path / "r.json"
    out.write_text("old")
    run(capsys, "density", "--t", "1", "--x", "0", *SMALL, "--out", str(out))
    assert json.loads(out.read_text())["t"] == 1.0
    assert [p.name for p in tmp_path.iterdir()] == ["r.json"]


def test_power_density_ks_covcheck(capsys):
    code, out, _ = run(capsys, "power", "--alpha", "0", "--paths", "2048", "--grid", "256")
    power = json.loads(out)
    assert code == 0 and power["status"] == "root" and -0.6 < power["p_hat"] < -0.4
    code, out, _ = run(capsys, "density", "--t", "4", "--x", "2", "--paths", "4096", "--grid", "256")
    assert code == 0 and json.loads(out)["verdict"] == "pass"
    code, out, _ = run(capsys, "ks", "--t", "1", "--paths", "2000", "--grid", "256")
    assert code == 0 and json.loads(out)["control"] is False
    code, out, _ = run(capsys, "ks", "--t", "1", "--control", "--paths", "4000", "--grid", "64")
    assert code == 0 and json.loads(out)["control"] is True
    code, out, _ = run(capsys, "covcheck", "--alpha", "0.75", "--paths", "8000",
                       "--pairs", "0,0.5;0.25,0.75")
    rows = json.loads(out)["rows"]
    assert code == 0 and len(rows) == 2 and rows[0]["empirical"] == 0.0


def test_no_antithetic_flag(capsys):
    _, out, _ = run(capsys, "verify", "--identity", "dmmy", "--no-antithetic", *SMALL)
    report = json.loads(out)
    assert report["config"]["antithetic"] is False and report["estimate"]["n"] == 512


def test_sample_dump(tmp_path, capsys):
    out = tmp_path / "paths.csv"
    code, _, _ = run(capsys, "sample", "--alpha", "0.5", "--paths", "3", "--grid", "5",
                     "--sampler", "time-change", "--out", str(out))
    lines = out.read_text().splitlines()
    assert code == 0 and lines[0] == "path_id,t,value" and len(lines) == 16
    assert run(capsys, "sample", "--alpha", "0.5")[0] == 1


def test_console_script_entry_point():
    env = dict(os.environ, BRIDGELAB_THREADS="1")
    proc = subprocess.run([sys.executable, "-m", "bridgelab.cli", "verify", "--identity", "dmmy",
                           "--beta", "0", "--paths", "2", "--grid", "16"],
                          capture_output=True, text=True, env=env)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["estimate"]["mean"] == 1.0


@pytest.mark.slow
def test_documented_full_size_verify(capsys):
    code, out, _ = run(capsys, "verify", "--identity", "link-a", "--alpha", "0.75", "--beta", "1",
                       "--paths", "200000", "--grid", "4096", "--eps", "1e-6", "--seed", "42")
    report = json.loads(out)
    assert code == 0 and report["target"] == 0.5 and report["verdict"] == "pass"
