import json
import textwrap
from pathlib import Path

import numpy as np
import pytest

from herglotz.cli import ProblemFileError, load_problem, main, read_csv, recompute_residuals

PROBLEMS = Path(__file__).resolve().parent.parent / "problems"

OSCILLATOR = """
[problem]
kind = {kind}
n = 1
t0 = 0
t1 = 2

[expressions]
L = v1^2/2 - w^2*q1^2/2 - g*z

[params]
w = 1
g = 0.1

[boundary]
q0 = 1
v0 = 0
"""


def write(tmp_path, text, name="p.ini"):
    f = tmp_path / name
    f.write_text(textwrap.dedent(text))
    return f


def test_load_damped_oscillator():
    pf = load_problem(PROBLEMS / "damped_oscillator.ini")
    assert pf.kind == "herglotz_ivp"
    assert (pf.n, pf.k) == (1, 0)
    assert pf.t_span == (0.0, 10.0)
    assert pf.params == {"w": 1.0, "g": 0.1}


def test_all_shipped_problems_validate():
    for f in sorted(PROBLEMS.glob("*.ini")):
        assert main(["check", str(f)]) == 0


def test_undeclared_variable_names_field(tmp_path):
    f = write(tmp_path, OSCILLATOR.format(kind="herglotz_ivp").replace("[params]\nw = 1\n", "[params]\n"))
    with pytest.raises(Exception) as info:
        load_problem(f)
    assert "'w'" in str(info.value) and "expressions.L" in str(info.value)
    assert main(["check", str(f)]) == 2


def test_hocp_missing_endpoint(tmp_path):
    f = write(tmp_path, """
        [problem]
        kind = hocp
        n = 1
        m = 1
        [expressions]
        X1 = u1
        F = -u1^2/2
        [boundary]
        x_a = 0
        """)
    with pytest.raises(ProblemFileError, match="boundary.x_b required for kind=hocp"):
        load_problem(f)


@pytest.mark.parametrize("edit,fragment", [
    (("kind = herglotz_ivp", "kind = magic"), "problem.kind"),
    (("n = 1", "n = zero"), "problem.n"),
    (("q0 = 1", "q0 = 1, 2"), "boundary.q0"),
    (("t1 = 2", "t1 = 0"), "problem.t1"),
    (("L = v1^2/2", "L = (v1^2/2"), "expressions.L"),
    (("[boundary]", "[boundary]\nspeed = 3"), "boundary.speed"),
])
def test_schema_errors_name_the_field(tmp_path, edit, fragment):
    f = write(tmp_path, OSCILLATOR.format(kind="herglotz_ivp").replace(*edit))
    with pytest.raises(Exception) as info:
        load_problem(f)
    assert fragment in str(info.value)


def test_missing_file_is_validation_error(tmp_path):
    assert main(["check", str(tmp_path / "absent.ini")]) == 2


def test_run_oscillator_csv_and_report(tmp_path):
    out = tmp_path / "osc.csv"
    assert main(["run", str(PROBLEMS / "damped_oscillator.ini"), "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "t,q1,v1,z"
    assert len(lines) == 10002
    report = json.loads(out.with_suffix(".report.json").read_text())
    assert report["passed"]
    assert report["residuals"]["z_rate_max"] <= 1e-6


def test_report_residuals_recomputable_from_csv(tmp_path):
    out = tmp_path / "osc.csv"
    main(["run", str(PROBLEMS / "damped_oscillator.ini"), "--out", str(out)])
    report = json.loads(out.with_suffix(".report.json").read_text())
    again = recompute_residuals(load_problem(PROBLEMS / "damped_oscillator.ini"), read_csv(out))
    assert again == report["residuals"]


def test_run_hocp_quadratic(tmp_path):
    out = tmp_path / "hocp.csv"
    assert main(["run", str(PROBLEMS / "hocp_quadratic.ini"), "--out", str(out)]) == 0
    assert out.read_text().splitlines()[0] == "t,x1,mu1,u1,z"
    cols = read_csv(out)
    assert cols["x1"][-1] == pytest.approx(1.0, abs=1e-8)
    assert cols["z"][-1] == pytest.approx(-0.5, abs=1e-6)
    assert np.max(np.abs(cols["u1"] - 1.0)) <= 1e-6


def test_run_vakonomic_reports_constraint(tmp_path):
    out = tmp_path / "vak.csv"
    assert main(["run", str(PROBLEMS / "vakonomic_classic.ini"), "--out", str(out), "--dt", "5e-3"]) == 0
    assert out.read_text().splitlines()[0] == "t,q1,q2,v1,v2,mu1,z"
    report = json.loads(out.with_suffix(".report.json").read_text())
    assert report["residuals"]["constraint_max"] <= 1e-6
    assert report["dt"] == 5e-3


def test_k0_vakonomic_matches_herglotz_byte_for_byte(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["run", str(write(tmp_path, OSCILLATOR.format(kind="herglotz_ivp"), "a.ini")), "--out", str(a)]) == 0
    assert main(["run", str(write(tmp_path, OSCILLATOR.format(kind="vakonomic"), "b.ini")), "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_csv_is_deterministic(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    f = str(PROBLEMS / "oscillator_bvp.ini")
    assert main(["run", f, "--out", str(a)]) == 0
    assert main(["run", f, "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_seventeen_digit_round_trip(tmp_path):
    out = tmp_path / "osc.csv"
    main(["run", str(write(tmp_path, OSCILLATOR.format(kind="herglotz_ivp"))), "--out", str(out)])
    row = out.read_text().splitlines()[7].split(",")
    assert all(repr(float(x)) == repr(float(f"{float(x):.17g}")) for x in row)


def test_invariant_failure_exit_code(tmp_path):
    f = write(tmp_path, OSCILLATOR.format(kind="herglotz_ivp"))
    assert main(["run", str(f), "--out", str(tmp_path / "o.csv"), "--tol", "1e-15"]) == 4


def test_solver_failure_exit_code(tmp_path):
    f = write(tmp_path, OSCILLATOR.format(kind="herglotz_ivp")
              .replace("L = v1^2/2 - w^2*q1^2/2 - g*z", "L = v1^2/2 - w*g*log(1 - q1)")
              .replace("q0 = 1", "q0 = 0").replace("v0 = 0", "v0 = 2"))
    assert main(["run", str(f), "--out", str(tmp_path / "o.csv")]) == 3


def test_bad_flag_values(tmp_path):
    f = str(write(tmp_path, OSCILLATOR.format(kind="herglotz_ivp")))
    assert main(["run", f, "--dt", "-1"]) == 2
    assert main(["run", f, "--tol", "0"]) == 2


def test_variation_subcommand(tmp_path, capsys):
    f = str(write(tmp_path, OSCILLATOR.format(kind="herglotz_ivp")))
    assert main(["variation", f, "--seed", "3"]) == 0
    text = capsys.readouterr().out
    assert text.count("variation ") == 20 and "PASS" in text


def test_variation_rejects_constrained_kind():
    assert main(["variation", str(PROBLEMS / "hocp_quadratic.ini")]) == 2
