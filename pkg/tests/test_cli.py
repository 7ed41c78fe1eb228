import json
import subprocess
import sys
from pathlib import Path

import jsonschema
import pytest

from reachkit.cli import REPORT_SCHEMA, RunConfig, main
from reachkit.formats import load_network
from reachkit.reductions import generate, load_dimacs, load_generated

SAMPLE = Path(__file__).resolve().parent.parent / "samples" / "psi.cnf"


@pytest.fixture
def psi(tmp_path):
    prefix = tmp_path / "psi"
    assert main(["gen", str(SAMPLE), "-o", str(prefix)]) == 0
    return prefix


def _files(prefix):
    return [f"{prefix}.net.json", f"{prefix}.in.spec", f"{prefix}.out.spec", "--names", f"{prefix}.names.json"]


def test_gen_files_match_memory(psi, capsys):
    assert load_generated(psi) == generate(load_dimacs(SAMPLE), "general")


def test_gen_prints_structure(tmp_path, capsys):
    assert main(["gen", str(SAMPLE), "--reduction", "weights", "-c", "3/2", "-d", "2",
                 "-o", str(tmp_path / "w")]) == 0
    out = capsys.readouterr().out
    assert "layers: 8 (stored 7)" in out
    assert "weight alphabet: {-3/2, 0, 2}" in out


def test_gen_parameter_errors(tmp_path, capsys):
    assert main(["gen", str(SAMPLE), "--reduction", "weights", "-c", "2", "-o", str(tmp_path / "w")]) == 2
    assert main(["gen", str(SAMPLE), "--reduction", "nozero", "-o", str(tmp_path / "n")]) == 2
    assert "needs -c" in capsys.readouterr().err


def test_solve_report(psi, tmp_path, capsys):
    report = tmp_path / "r.json"
    assert main(["solve", *_files(psi), "--json", str(report), "--seed", "7"]) == 0
    out = capsys.readouterr().out
    assert out.startswith("REACHABLE")
    data = json.loads(report.read_text())
    jsonschema.validate(data, REPORT_SCHEMA)
    assert data["seed"] == 7 and data["verdict"] == "reachable"
    assert data["witness_bits"] > 0 and data["layers"] == 5


def test_solve_unreachable(tmp_path, capsys):
    cnf = tmp_path / "u.cnf"
    cnf.write_text("p cnf 1 2\n1 0\n-1 0\n")
    prefix = tmp_path / "u"
    assert main(["gen", str(cnf), "-o", str(prefix)]) == 0
    assert main(["solve", *_files(prefix)]) == 1
    assert "UNREACHABLE" in capsys.readouterr().out


def test_env_budget(psi, monkeypatch, capsys):
    monkeypatch.setenv("REACHKIT_BUDGET_MS", "1")
    report = psi.with_suffix(".json")
    assert main(["solve", *_files(psi), "--json", str(report)]) == 2
    data = json.loads(report.read_text())
    jsonschema.validate(data, REPORT_SCHEMA)
    assert data["verdict"] == "unknown"


def test_encode_milp(tmp_path, capsys):
    prefix = tmp_path / "f"
    assert main(["gen", str(SAMPLE), "--reduction", "fanin1", "-o", str(prefix)]) == 0
    lp = tmp_path / "f.lp"
    assert main(["encode-milp", *_files(prefix), "-o", str(lp)]) == 0
    assert "Binary" in lp.read_text()
    general = tmp_path / "g"
    main(["gen", str(SAMPLE), "-o", str(general)])
    assert main(["encode-milp", *_files(general), "-o", str(tmp_path / "g.lp")]) == 2
    assert "input dimension 0 is unbounded" in capsys.readouterr().err


def test_eval_and_transform(psi, tmp_path, capsys):
    assert main(["eval", f"{psi}.net.json", "--input", "1, 1, 1, 0"]) == 0
    assert capsys.readouterr().out.strip() == "0, 0, 0, 0, 3"
    out = tmp_path / "r.net.json"
    assert main(["transform", f"{psi}.net.json", "-o", str(out)]) == 0
    assert load_network(out).depth == load_network(f"{psi}.net.json").depth


def test_oracle_modes(psi, capsys):
    assert main(["oracle", "--mode", "sat", str(SAMPLE)]) == 0
    assert main(["oracle", "--mode", "grid", str(SAMPLE), "--reduction", "single-layer"]) == 0
    assert main(["oracle", "--mode", "reach", "--network", f"{psi}.net.json", "--phi-in",
                 f"{psi}.in.spec", "--phi-out", f"{psi}.out.spec", "--names", f"{psi}.names.json"]) == 0
    assert main(["oracle", "--mode", "sat"]) == 2


def test_parse_errors(tmp_path, capsys):
    bad = tmp_path / "bad.cnf"
    bad.write_text("p cnf 1 1\n1 2 0\n")
    assert main(["gen", str(bad), "-o", str(tmp_path / "x")]) == 2
    assert "error:" in capsys.readouterr().err


def test_run_config_validation():
    with pytest.raises(ValueError):
        RunConfig("solve", node_budget=0)
    with pytest.raises(ValueError):
        RunConfig("solve", workers=0)


def test_module_entry_point(psi):
    proc = subprocess.run([sys.executable, "-m", "reachkit", "solve", *_files(psi)],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and "REACHABLE" in proc.stdout
