import json
import pathlib

import pytest

from treemvs import cli

DATA = pathlib.Path(__file__).resolve().parents[1] / "src" / "treemvs" / "data"


def run(*argv):
    return cli.main([str(a) for a in argv])


def read_values(path):
    lines = path.read_text().splitlines()
    assert lines[0] == "component,node,level,psi,value"
    return [float(line.split(",")[-1]) for line in lines[1:]]


@pytest.mark.parametrize("name,code", [("demo", 0), ("harmonic", 2), ("explicit", 3)])
def test_check_exit_codes(name, code, capsys):
    assert run("check", "--config", DATA / f"{name}.json") == code
    out = capsys.readouterr().out
    if name == "demo":
        assert out.count("Converges") == 4


def test_schema_error_exit(tmp_path, capsys):
    doc = json.loads((DATA / "demo.json").read_text())
    doc["components"][1]["beta"]["c"] = "large"
    p = tmp_path / "bad.json"
    p.write_text(json.dumps(doc))
    assert run("check", "--config", p) == 1
    assert "/components/1/beta/c" in capsys.readouterr().err


def test_solve_constant_and_manifest(tmp_path):
    out = tmp_path / "u.csv"
    assert run("solve", "--config", DATA / "constant.json", "--out", out, "--depth", 6) == 0
    assert set(read_values(out)) == {0.3}
    manifest = json.loads((tmp_path / "u.csv.manifest.json").read_text())
    assert manifest["command"] == "solve" and manifest["outputs"] == [str(out)]
    assert manifest["parameters"]["depth"] == 6


def test_solve_demo_residual(tmp_path):
    out = tmp_path / "u.csv"
    assert run("solve", "--config", DATA / "demo.json", "--out", out) == 0
    manifest = json.loads((tmp_path / "u.csv.manifest.json").read_text())
    assert manifest["residual"] <= 2e-12 and manifest["parameters"]["depth"] == 12


def test_exact_vs_fixed_point(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    cfg = DATA / "game.json"
    assert run("solve", "--config", cfg, "--out", a, "--method", "exact") == 0
    assert run("solve", "--config", cfg, "--out", b, "--method", "fixed-point", "--tol", 1e-12) == 0
    assert max(abs(x - y) for x, y in zip(read_values(a), read_values(b))) <= 1e-11


def test_outputs_byte_identical(tmp_path):
    for name in ("one", "two"):
        assert run("simulate", "--config", DATA / "game.json", "--out", tmp_path / f"{name}.csv",
                   "--episodes", 2000, "--seed", 3, "--trace-out", tmp_path / f"{name}.trace.csv") == 0
    assert (tmp_path / "one.csv").read_bytes() == (tmp_path / "two.csv").read_bytes()
    assert (tmp_path / "one.trace.csv").read_bytes() == (tmp_path / "two.trace.csv").read_bytes()


def test_override_notice(tmp_path, capsys):
    assert run("solve", "--config", DATA / "demo.json", "--out", tmp_path / "u.csv", "--depth", 5) == 0
    assert "overrides config depth=12" in capsys.readouterr().err


def test_study(tmp_path):
    out = tmp_path / "s.csv"
    assert run("study", "--config", DATA / "demo.json", "--out", out, "--depths", "4,6") == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "L,component,root_value,delta,component_gap"
    assert len(lines) == 5 and lines[1].split(",")[3] == "nan"


def test_simulate_board_two(tmp_path):
    out = tmp_path / "e.csv"
    assert run("simulate", "--config", DATA / "game.json", "--out", out, "--episodes", 5000, "--board", 2,
               "--depth", 6) == 0
    row = out.read_text().splitlines()[1].split(",")
    assert row[:4] == ["@", "2", "6", "5000"]
    assert abs(float(row[-1])) < 4


def test_error_exit_codes(tmp_path, capsys):
    cfg = DATA / "demo.json"
    assert run("solve", "--config", cfg, "--out", tmp_path / "u.csv", "--max-sweeps", 2) == 4
    assert run("solve", "--config", cfg, "--out", tmp_path / "u.csv", "--depth", 30) == 5
    assert run("solve", "--config", tmp_path / "missing.json", "--out", tmp_path / "u.csv") == 1
    assert run("simulate", "--config", cfg, "--out", tmp_path / "e.csv", "--board", 3) == 1
    assert run("solve", "--config", DATA / "harmonic.json", "--out", tmp_path / "u.csv") == 1  # no depth
    capsys.readouterr()
