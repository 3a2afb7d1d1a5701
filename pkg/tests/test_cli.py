import json
import math

import numpy as np
import pytest

from dyson_ode.cli import main
from dyson_ode.library import builtin_spec
from dyson_ode.pipeline import EXIT_BUDGET, EXIT_ERROR, EXIT_OK, EXIT_PARSE, EXIT_PATHOLOGICAL
from dyson_ode.serialize import from_pairs


def run(tmp_path, *args):
    return main([*args, "--out", str(tmp_path)])


def report(tmp_path):
    return json.loads((tmp_path / "report.json").read_text())


def test_solve_decay(tmp_path):
    assert run(tmp_path, "solve", "decay1d", "--epsilon", "1e-4") == EXIT_OK
    data = report(tmp_path)
    final = from_pairs(data["final_state"])
    assert abs(final[0] - math.exp(-1)) <= 1e-4
    for name in ("history.csv", "bounds.csv", "timings.json"):
        assert (tmp_path / name).exists()
    assert "seconds" not in (tmp_path / "report.json").read_text()


def test_solve_oscillator_budget(tmp_path):
    assert run(tmp_path, "solve", "oscillator", "--epsilon", "1e-6") == EXIT_OK
    data = report(tmp_path)
    assert data["checks"]["budget"]
    assert data["d_bw"] <= data["checks"]["accuracy_target"]


def test_solve_zero_problem_exact(tmp_path):
    assert run(tmp_path, "solve", "builtin:zero", "--epsilon", "1e-9") == EXIT_OK
    data = report(tmp_path)
    assert np.array_equal(from_pairs(data["final_state"]), builtin_spec("zero").x0)
    assert data["d_bw"] == 0.0


def test_solve_spec_file(tmp_path):
    spec = tmp_path / "spec.json"
    spec.write_text('{"a0": [[-0.5]], "b0": [1], "x0": [1], "horizon": 1}')
    out = tmp_path / "out"
    assert run(out, "solve", str(spec), "--epsilon", "1e-6") == EXIT_OK
    final = from_pairs(report(out)["final_state"])[0]
    assert final == pytest.approx(2 - math.exp(-0.5), abs=1e-6)


def test_encode_layout_and_dense(tmp_path):
    assert run(tmp_path, "encode", "decay1d", "--r", "3", "--k", "4", "--m", "1",
               "--dense") == EXIT_OK
    doc = json.loads((tmp_path / "system.json").read_text())
    matrix = from_pairs(doc["matrix"])
    assert matrix.shape == (7, 7)
    v = sum((-1 / 3) ** k / math.factorial(k) for k in range(5))
    expected = np.eye(7) - np.diag([v, v, v, 1, 1, 1], -1)
    np.testing.assert_allclose(matrix, expected, atol=1e-15)
    np.testing.assert_allclose(from_pairs(doc["inverse"]) @ matrix, np.eye(7), atol=1e-12)


def test_estimate_time_independent_cost_model(tmp_path, capsys):
    assert run(tmp_path, "estimate", "heat8", "--epsilon", "1e-4") == EXIT_OK
    lines = capsys.readouterr().out.splitlines()
    assert lines[0].split() == ["theorem", "2"]
    assert not any(line.split()[0] == "D" for line in lines if line.strip())
    assert report(tmp_path)["resources"]["d_factor"] is None


def test_estimate_driven_reports_drive_factor(tmp_path, capsys):
    assert run(tmp_path, "estimate", "driven-oscillator", "--epsilon", "1e-3") == EXIT_OK
    lines = capsys.readouterr().out.splitlines()
    assert lines[0].split() == ["theorem", "1"]
    assert any(line.split()[0] == "D" for line in lines if line.strip())


def test_epsilon_sweep_order_growth(tmp_path):
    orders = []
    for eps in ("1e-2", "1e-4", "1e-6", "1e-8"):
        out = tmp_path / eps
        assert run(out, "estimate", "oscillator", "--epsilon", eps) == EXIT_OK
        orders.append(report(out)["resources"]["k_order"])
    assert orders == sorted(orders)
    assert orders[-1] - orders[0] <= 8


@pytest.mark.parametrize("suite", ["stability", "inverse", "mscaling"])
def test_verify_suites(tmp_path, suite):
    assert run(tmp_path, "verify", suite) == EXIT_OK
    assert (tmp_path / "bounds.csv").read_text().startswith("suite,")


@pytest.mark.parametrize("args,code", [
    (("verify", "bogus"), EXIT_ERROR),
    (("solve", "unstable1d"), EXIT_ERROR),
    (("solve", "no-such-problem"), EXIT_PARSE),
    (("solve", "oscillator", "--epsilon", "1e-8", "--k", "2"), EXIT_BUDGET),
    (("solve", "drive-cancel", "--epsilon", "1e-3"), EXIT_PATHOLOGICAL),
])
def test_exit_codes(tmp_path, args, code):
    assert run(tmp_path, *args) == code


def test_unstable_allowed(tmp_path):
    assert run(tmp_path, "solve", "unstable1d", "--allow-unstable", "--epsilon", "1e-3") == EXIT_OK
    assert not report(tmp_path)["stability"]["stable"]


def test_parse_error_exit(tmp_path, capsys):
    spec = tmp_path / "bad.json"
    spec.write_text('{"a0": [[-1]],\n "x0": [1, 2], "horizon": 1}')
    assert run(tmp_path, "solve", str(spec)) == EXIT_PARSE
    assert "line 1, column 2" in capsys.readouterr().err


def test_solve_deterministic(tmp_path):
    run(tmp_path / "a", "solve", "driven-oscillator", "--epsilon", "1e-3")
    run(tmp_path / "b", "solve", "driven-oscillator", "--epsilon", "1e-3")
    for name in ("report.json", "history.csv", "bounds.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
