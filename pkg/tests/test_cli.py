import csv
import io
import json
import math
import subprocess
import sys
from pathlib import Path

import pytest

from covering_lab.cli import EXIT_FAIL, EXIT_INCONCLUSIVE, EXIT_OK, exit_code, main
from covering_lab.sweeps import SUMMARY_COLUMNS, grid_points, parse_range

SCENARIOS = Path(__file__).resolve().parents[1] / "scenarios"
EX1 = str(SCENARIOS / "example1.yaml")
EX3 = str(SCENARIOS / "example3.yaml")


def read_csv(text):
    return list(csv.DictReader(io.StringIO(text)))


def test_exit_code_rule():
    assert exit_code(["holds", "holds"]) == EXIT_OK
    assert exit_code(["holds", "inconclusive"]) == EXIT_INCONCLUSIVE
    assert exit_code(["inconclusive", "violated"]) == EXIT_FAIL
    assert exit_code(["error"]) == EXIT_FAIL


def test_verify_holds(capsys):
    assert main(["verify", EX1]) == EXIT_OK
    data = json.loads(capsys.readouterr().out)
    assert data["verdict"] == "holds" and data["kind"] == "covering-lambda"


def test_verify_inconclusive(tmp_path):
    f = tmp_path / "e3.yaml"
    f.write_text(Path(EX3).read_text().replace("h: 0.9,", "h: 0.999,"))
    assert main(["verify", str(f), "--grid", "64", "--out", str(tmp_path)]) == EXIT_INCONCLUSIVE
    data = json.loads((tmp_path / "example-3.json").read_text())
    assert data["verdict"] == "inconclusive"


def test_verify_malformed(tmp_path, capsys):
    f = tmp_path / "bad.yaml"
    f.write_text("schema_version: 1\nkind: covering-lambda\ndomain0: {shape: disk, radius: 0.6}\n"
                 "u1: 0\nu2: 1\n")
    assert main(["verify", str(f)]) == EXIT_FAIL
    err = capsys.readouterr().err
    assert "schema error" in err and "'lam'" in err and ":2:" in err


def test_verify_missing_file(capsys):
    assert main(["verify", "/nonexistent.yaml"]) == EXIT_FAIL


def test_bad_grid_flag():
    assert main(["verify", EX1, "--grid", "4"]) == EXIT_FAIL


def test_csv_format(capsys):
    assert main(["verify", EX1, "--format", "csv", "--grid", "128"]) == EXIT_OK
    rows = read_csv(capsys.readouterr().out)
    assert len(rows) == 1
    assert tuple(rows[0]) == SUMMARY_COLUMNS
    assert rows[0]["verdict"] == "holds" and rows[0]["n"] == "128"


def test_reports_bit_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    main(["verify", EX1, "--format", "both", "--out", str(a)])
    main(["verify", EX1, "--format", "both", "--out", str(b)])
    for name in ("example-1.json", "example-1.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    meta = json.loads((a / "example-1.meta.json").read_text())
    assert meta["command"] == "verify" and "timestamp" in meta


class TestSweep:
    def test_parse_range(self):
        key, vals = parse_range("h=0.9:0.99:3")
        assert key == "h" and vals == pytest.approx([0.9, 0.945, 0.99], abs=1e-15)
        assert parse_range("h=0.9,0.99") == ("h", [0.9, 0.99])
        assert parse_range("n=64,128") == ("n", [64, 128])
        with pytest.raises(ValueError):
            parse_range("h")

    def test_grid_points_order(self):
        pts = grid_points([("a", [1, 2]), ("b", [3, 4])])
        assert pts == [{"a": 1, "b": 3}, {"a": 1, "b": 4}, {"a": 2, "b": 3}, {"a": 2, "b": 4}]

    def test_single_point(self, capsys):
        assert main(["sweep", EX1, "--range", "R=1.25,1.25", "--grid", "64"]) == EXIT_OK
        rows = read_csv(capsys.readouterr().out)
        assert len(rows) == 2 and rows[0]["margin"] == rows[1]["margin"]

    def test_sharpness_sweep(self, tmp_path):
        code = main(["sweep", EX3, "--range", "h=0.9,0.99,0.999", "--out", str(tmp_path)])
        assert code == EXIT_OK
        rows = read_csv((tmp_path / "example3-sweep.csv").read_text())
        q = [float(r["mass_lhs"]) for r in rows]
        assert all(x > 4 * math.pi for x in q)
        assert q[0] > q[1] > q[2]

    def test_grid_convergence(self, capsys):
        assert main(["sweep", EX1, "--range", "n=64,128,256,512", "--jobs", "2"]) == EXIT_OK
        m = [float(r["margin"]) for r in read_csv(capsys.readouterr().out)]
        d = [abs(b - a) for a, b in zip(m, m[1:])]
        assert d[0] / d[1] >= 3 and d[1] / d[2] >= 3

    def test_grid_conflicts_with_n_range(self):
        assert main(["sweep", EX1, "--range", "n=64,128", "--grid", "64"]) == EXIT_FAIL


class TestSuite:
    def test_suite_passes(self, tmp_path, capsys):
        assert main(["suite", "--out", str(tmp_path), "--format", "both"]) == EXIT_OK
        out = capsys.readouterr().out
        assert "FAIL" not in out and "built-in checks passed" in out
        data = json.loads((tmp_path / "suite.json").read_text())
        assert {"checks", "reports"} <= set(data)
        assert all(c["pass"] for c in data["checks"])
        rows = read_csv((tmp_path / "suite.csv").read_text())
        assert {r["name"] for r in rows} >= {"example-1", "example-2", "equal-mass-pair"}

    def test_coarse_suite_has_no_violations(self, capsys):
        main(["suite", "--grid", "64"])
        out = capsys.readouterr().out
        assert " violated " not in out


def test_profile_csv(tmp_path, capsys):
    assert main(["profile", EX1, "--out", str(tmp_path)]) == EXIT_OK
    rows = read_csv((tmp_path / "example-1-profile.csv").read_text())
    assert len(rows) >= 201
    assert list(rows[0]) == ["t", "alpha", "beta", "s", "G", "err"]
    G = [float(r["G"]) for r in rows]
    err = [float(r["err"]) for r in rows]
    assert all(b - a >= -4 * (ea + eb) for a, b, ea, eb in zip(G, G[1:], err, err[1:]))
    assert "nondecreasing" in capsys.readouterr().err


@pytest.mark.parametrize("name", ["unit_square", "cap_circles"])
def test_isoperimetric(tmp_path, name):
    assert main(["isoperimetric", str(SCENARIOS / f"{name}.yaml"), "--out", str(tmp_path),
                 "--format", "both"]) == EXIT_OK
    stem = "flat-sets" if name == "unit_square" else "cap-circles"
    data = json.loads((tmp_path / f"{stem}-isoperimetric.json").read_text())
    assert data["passed"]
    if name == "unit_square":
        assert data["members"][1]["deficit"] == pytest.approx(16 - 4 * math.pi, abs=1e-6)


def test_properties_small(capsys):
    assert main(["properties", "--kind", "dual", "--count", "3", "--grid", "64"]) == EXIT_OK
    assert "PASS" in capsys.readouterr().out


def test_console_script():
    r = subprocess.run([sys.executable, "-m", "covering_lab.cli", "--version"],
                       capture_output=True, text=True)
    assert r.returncode == 0 and "covering-lab" in r.stdout
