import csv
import hashlib
import json

import pytest

from mpqcc import cli


def digest(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


def run(tmp_path, name, *argv):
    out = tmp_path / name
    code = cli.main([argv[0], "--out", str(out), *argv[1:]])
    return code, out


def test_simulate_is_deterministic(tmp_path):
    args = ("simulate", "--seed", "5", "--frames", "40", "--total-loss", "30")
    c1, a = run(tmp_path, "a", *args)
    c2, b = run(tmp_path, "b", *args)
    assert c1 == c2 == 0
    for name in ("sifted.csv", "phase_log.csv", "clicks.bin", "gains.csv", "manifest.json"):
        assert digest(a / name) == digest(b / name), name


def test_seed_changes_output(tmp_path):
    _, a = run(tmp_path, "a", "simulate", "--seed", "1", "--frames", "20", "--total-loss", "30")
    _, b = run(tmp_path, "b", "simulate", "--seed", "2", "--frames", "20", "--total-loss", "30")
    assert digest(a / "clicks.bin") != digest(b / "clicks.bin")


def test_csv_trailer_matches_manifest(tmp_path):
    code, out = run(tmp_path, "s", "simulate", "--seed", "3", "--frames", "20", "--total-loss", "30")
    assert code == 0
    last = (out / "sifted.csv").read_text().rstrip("\n").splitlines()[-1]
    assert last.startswith("# manifest_sha256=")
    m = json.loads((out / "manifest.json").read_text())
    blob = json.dumps(m, sort_keys=True, separators=(",", ":"))
    assert last.split("=", 1)[1] == hashlib.sha256(blob.encode()).hexdigest()


def test_analyze_roundtrip(tmp_path):
    code, out = run(tmp_path, "s", "simulate", "--seed", "3", "--frames", "40", "--total-loss", "30")
    assert code == 0
    assert cli.main(["analyze", "--out", str(out)]) == 0
    assert (out / "analysis.csv").exists()


def test_invalid_config_exit_code(tmp_path, capsys):
    code, _ = run(tmp_path, "bad", "simulate", "--frames", "5", "--nu=0.5")
    assert code == cli.EXIT_CONFIG
    assert "nu < mu violated" in capsys.readouterr().err


def test_bad_flips_exit_code(tmp_path):
    code, _ = run(tmp_path, "bad", "simulate", "--frames", "5", "--flips", "+x+")
    assert code == cli.EXIT_CONFIG


def test_missing_config_file(tmp_path):
    code, _ = run(tmp_path, "x", "simulate", "--config", str(tmp_path / "nope.cfg"))
    assert code == cli.EXIT_IO


def test_calibration_failure_exit_code(tmp_path):
    code, _ = run(tmp_path, "c", "calibrate-signs", "--frames", "2", "--total-loss", "30")
    assert code == cli.EXIT_LP


def test_sweep_writes_rows(tmp_path):
    code, out = run(tmp_path, "w", "sweep", "--loss-min", "40", "--loss-max", "50", "--loss-step", "5")
    assert code == 0
    rows = [r for r in csv.reader((out / "sweep.csv").open()) if r and not r[0].startswith("#")]
    assert rows[0][0] == "total_loss_db" and len(rows) == 4


def test_pairing_demo_monotone_in_window(tmp_path):
    code, out = run(tmp_path, "d", "pairing-demo", "--slots", "200000", "--p-click", "1e-3",
                    "--windows", "10", "100", "1000", "10000")
    assert code == 0
    rows = [r for r in csv.DictReader(l for l in (out / "pairing_demo.csv").open() if not l.startswith("#"))]
    paired = [int(r["paired_clicks"]) for r in rows]
    assert paired == sorted(paired)
    assert all(p >= int(r["coincidence_clicks"]) for p, r in zip(paired, rows))
    assert paired[-1] <= int(rows[-1]["total_clicks"])


def test_unknown_argument(tmp_path):
    code, _ = run(tmp_path, "u", "simulate", "--frames", "5", "bogus")
    assert code == cli.EXIT_CONFIG


def test_module_entry_point():
    import subprocess
    import sys
    r = subprocess.run([sys.executable, "-m", "mpqcc", "--help"], capture_output=True, text=True)
    assert r.returncode == 0 and "simulate" in r.stdout
