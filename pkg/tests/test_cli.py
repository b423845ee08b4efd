import json
import subprocess
import sys

import pytest

from itermem.cli import EXIT_FAIL, EXIT_OK, EXIT_USAGE, main


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_compute_exact(capsys):
    code, out, _ = run(capsys, "compute", "example-compute")
    assert code == EXIT_OK
    assert "example-compute: 2/3" in out
    assert "decimal: 0.666666" in out


def test_compute_montecarlo_is_reproducible(capsys):
    args = ("compute", "example-compute", "--engine", "montecarlo", "--seed", "42", "--mc-samples", "100000",
            "--report", "json")
    code, first, _ = run(capsys, *args)
    assert code == EXIT_OK
    _, second, _ = run(capsys, *args)
    assert first == second
    rec = json.loads(first)["results"][0]
    assert abs(rec["value"] - 2 / 3) <= 3 * rec["error_estimate"]
    assert rec["engine"]["seed"] == 42


def test_compute_json_exact_value(capsys):
    code, out, _ = run(capsys, "compute", "example-compute", "--report", "json")
    rec = json.loads(out)["results"][0]
    assert rec["value"] == "2/3" and rec["error_estimate"] == 0


def test_malformed_rho_exit_2(tmp_path, capsys):
    data = json.loads(open_builtin("example-compute"))
    data["compute"]["rho"] = [[1, 1]]
    p = tmp_path / "bad.json"
    p.write_text(json.dumps(data))
    code, _, err = run(capsys, "compute", str(p))
    assert code == EXIT_USAGE
    assert "rho[0]" in err


def open_builtin(name):
    from itermem.scenario import load_text
    return load_text(name)


def test_verify_paper_identities(capsys):
    code, out, _ = run(capsys, "verify", "paper-identities")
    assert code == EXIT_OK
    assert out.rstrip().splitlines()[-1].endswith("0 failed, 0 errors")


def test_verify_negative_controls_exit_1(capsys):
    code, out, _ = run(capsys, "verify", "negative-controls", "--report", "json")
    assert code == EXIT_FAIL
    records = json.loads(out)["scenarios"]
    assert records and all(r["verdict"] == "fail" for r in records)


def test_exact_on_nonpolynomial_gives_error_records(capsys):
    code, out, _ = run(capsys, "verify", "example-nonpolynomial", "--engine", "exact", "--report", "json")
    assert code == EXIT_FAIL
    assert {r["verdict"] for r in json.loads(out)["scenarios"]} == {"error"}


def test_json_report_is_deterministic(capsys):
    args = ("verify", "example-shuffle", "--engine", "montecarlo", "--seed", "7", "--mc-samples", "20000",
            "--report", "json")
    _, a, _ = run(capsys, *args)
    _, b, _ = run(capsys, *args)
    assert a == b
    schema = json.loads(a)
    assert set(schema) == {"suite", "scenarios"}
    assert {"id", "check", "lhs", "rhs", "deviation", "tolerance", "verdict", "engine"} <= set(schema["scenarios"][0])


def test_out_file(tmp_path, capsys):
    target = tmp_path / "report.json"
    code, out, _ = run(capsys, "verify", "example-vanishing", "--report", "json", "--out", str(target))
    assert code == EXIT_OK
    assert "checks: 2 passed" in out
    assert json.loads(target.read_text())["suite"] == "example-vanishing"


@pytest.mark.parametrize("argv", [
    ("frobnicate",),
    ("verify",),
    ("verify", "no-such-suite"),
    ("verify", "example-shuffle", "--engine", "montecarlo"),
    ("compute", "example-compute", "--quad-order", "0"),
    ("compute", "example-homotopy"),
])
def test_usage_errors_exit_2(argv, capsys):
    assert main(list(argv)) == EXIT_USAGE


def test_tolerance_flag_loosens_numeric_checks(capsys):
    code, out, _ = run(capsys, "verify", "negative-controls", "--engine", "quadrature", "--tolerance", "10",
                       "--report", "json")
    # a relative tolerance of 10 accepts even a flipped sign
    assert all(r["verdict"] in ("pass", "error") for r in json.loads(out)["scenarios"])


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "itermem", "compute", "example-compute"],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0 and "2/3" in proc.stdout
