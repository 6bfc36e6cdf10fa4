import io
import json
import subprocess
import sys

import pytest

from critneumann.cli import EXIT_FAILED, EXIT_OK, EXIT_USAGE, OUTPUT_ENV, SCHEMA_VERSION, main


def _run(argv):
    buf = io.StringIO()
    sys_stdout, sys.stdout = sys.stdout, buf
    try:
        code = main(argv)
    finally:
        sys.stdout = sys_stdout
    return code, buf.getvalue()


def test_constants_schema():
    code, text = _run(["constants", "--dim", "4"])
    assert code == EXIT_OK
    doc = json.loads(text)
    assert doc["schema_version"] == SCHEMA_VERSION
    assert doc["subcommand"] == "constants" and doc["passed"] and doc["exit_code"] == 0
    assert doc["config"]["dim"] == 4
    assert doc["result"]["A"] == pytest.approx(2.4148082, rel=1e-6)


@pytest.mark.parametrize("argv", [
    [],
    ["constants", "--dim", "2"],
    ["threshold", "--dim", "3", "--p", "7"],
    ["nonsense"],
    ["constants", "--dim", "four"],
    ["pohozaev", "--dim", "4", "--field", "/nonexistent/u.txt"],
])
def test_usage_errors(argv, capsys):
    assert main(argv) == EXIT_USAGE
    assert "error" in capsys.readouterr().err


def test_deterministic_output():
    argv = ["threshold", "--dim", "3", "--p", "5", "--ladder", "0.01,0.005,0.0025"]
    a = _run(argv)
    b = _run(argv)
    assert a == b
    assert json.loads(a[1])["config"]["eps_ladder"] == [0.01, 0.005, 0.0025]


def test_output_env(tmp_path, monkeypatch):
    monkeypatch.setenv(OUTPUT_ENV, str(tmp_path / "out"))
    code, text = _run(["constants", "--dim", "5"])
    assert code == EXIT_OK
    assert (tmp_path / "out" / "constants.json").read_text() == text


def test_explicit_output_wins(tmp_path, monkeypatch):
    monkeypatch.setenv(OUTPUT_ENV, str(tmp_path / "env"))
    target = tmp_path / "mine.json"
    _run(["constants", "--dim", "3", "--output", str(target)])
    assert target.exists() and not (tmp_path / "env").exists()


def test_csv_tables(tmp_path):
    target = tmp_path / "exp.csv"
    code, _ = _run(["expansions", "--dim", "5", "--format", "csv", "--output", str(target)])
    assert code == EXIT_OK
    written = sorted(p.name for p in tmp_path.iterdir())
    assert len(written) > 1 and all(n.startswith("exp.") and n.endswith(".csv") for n in written)
    header = (tmp_path / written[0]).read_text().splitlines()[0]
    assert "," in header


def test_csv_key_value(tmp_path):
    code, text = _run(["constants", "--dim", "4", "--format", "csv"])
    assert code == EXIT_OK
    lines = text.splitlines()
    assert lines[0] == "key,value"
    assert any(line.startswith("result.A,") for line in lines)


def test_hardy_and_eigen_pass():
    code, text = _run(["hardy", "--dim", "3", "--trials", "5", "--n", "32"])
    assert code == EXIT_OK and json.loads(text)["passed"]
    code, _ = _run(["eigen", "--dim", "4"])
    assert code == EXIT_OK
    # too coarse to meet the eigenvalue tolerance
    code, _ = _run(["eigen", "--dim", "4", "--n", "32"])
    assert code == EXIT_FAILED


def test_solve_negative_mu_exits_failed():
    code, text = _run(["solve", "--dim", "4", "--p", "3", "--mu", "-0.5", "--n", "64", "--max-outer", "100"])
    assert code == EXIT_FAILED
    doc = json.loads(text)
    assert doc["exit_code"] == EXIT_FAILED and not doc["passed"]


def test_solve_save_then_pohozaev(tmp_path):
    field = tmp_path / "u.txt"
    code, _ = _run(["solve", "--dim", "4", "--p", "3", "--n", "64", "--save", str(field)])
    assert code in (EXIT_OK, EXIT_FAILED)
    code, text = _run(["pohozaev", "--field", str(field), "--tol", "0.05"])
    assert code == EXIT_OK
    assert json.loads(text)["result"]["N"] == 4


def test_python_module_entry():
    proc = subprocess.run([sys.executable, "-m", "critneumann", "constants", "--dim", "6"],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["subcommand"] == "constants"
