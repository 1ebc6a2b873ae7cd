import csv
import hashlib
import io
import json
import math

import pytest

from memcost import cli
from memcost.cost_engine import (
    NoiseLevel,
    memorization_threshold,
    ols_gap,
    ols_threshold,
    solve_rho,
    solve_rho_ols,
)
from memcost.errors import DomainError


def run_cli(capsys, *argv):
    code = cli.main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def parse_csv(text):
    lines = [l for l in text.splitlines() if not l.startswith("#")]
    reader = csv.reader(io.StringIO("\n".join(lines)))
    rows = list(reader)
    return rows[0], rows[1:]


def test_parse_grid_inclusive_stop():
    assert cli.parse_grid("0:0.5:2") == [0.0, 0.5, 1.0, 1.5, 2.0]
    # stop within half a step still included
    got = cli.parse_grid("0:0.3:1.0")
    assert got[-1] == pytest.approx(0.9)
    assert cli.parse_grid("0:0.25:1.1")[-1] == pytest.approx(1.0)


def test_parse_grid_empty_and_errors():
    assert cli.parse_grid("2:1:1") == []
    with pytest.raises(DomainError):
        cli.parse_grid("0:0:1")
    with pytest.raises(DomainError):
        cli.parse_grid("0:1")
    with pytest.raises(DomainError):
        cli.parse_grid("a:b:c")


def test_threshold_command_values(capsys):
    code, out, _ = run_cli(capsys, "threshold", "--gamma", "2", "--sigma2", "0.1")
    assert code == 0
    header, rows = parse_csv(out)
    row = dict(zip(header, rows[0]))
    assert float(row["eps_sigma2"]) == pytest.approx(
        memorization_threshold(2.0, NoiseLevel(0.1)), abs=1e-15
    )
    assert float(row["eps_ols2"]) == pytest.approx(
        ols_threshold(2.0, NoiseLevel(0.1)), rel=1e-12
    )
    assert float(row["rho_ols"]) == pytest.approx(
        solve_rho_ols(2.0, NoiseLevel(0.1)).rho, rel=1e-12
    )


def test_threshold_with_degenerate_population(tmp_path, capsys):
    pop = tmp_path / "identity.spec"
    pop.write_text("1.0 1.0\n")
    code, out, _ = run_cli(
        capsys, "threshold", "--gamma", "2", "--sigma2", "0.1", "--pop", str(pop)
    )
    assert code == 0
    header, rows = parse_csv(out)
    row = dict(zip(header, rows[0]))
    assert float(row["eps_def2"]) == pytest.approx(float(row["eps_sigma2"]), abs=1e-10)


def test_threshold_missing_gamma_is_usage_error(capsys):
    with pytest.raises(SystemExit) as info:
        cli.main(["threshold", "--sigma2", "0.1"])
    assert info.value.code == 2


def test_malformed_population_file(tmp_path, capsys):
    pop = tmp_path / "bad.spec"
    pop.write_text("1.0 0.5\nnot numbers\n")
    code, out, err = run_cli(
        capsys, "threshold", "--gamma", "2", "--sigma2", "0.1", "--pop", str(pop)
    )
    assert code == 2
    assert "2" in err  # line number surfaced


def test_rho_command_single_point(capsys):
    th = memorization_threshold(2.0, NoiseLevel(0.1))
    code, out, _ = run_cli(
        capsys, "rho", "--gamma", "2", "--sigma2", "0.1", "--eps2", str(2 * th)
    )
    assert code == 0
    header, rows = parse_csv(out)
    row = dict(zip(header, rows[0]))
    assert float(row["rho"]) == pytest.approx(solve_rho(2.0, NoiseLevel(0.1), 2 * th).rho)
    assert row["regime"] == "above_threshold"


def test_rho_command_eps_flag_squares(capsys):
    th = memorization_threshold(2.0, NoiseLevel(0.1))
    eps = math.sqrt(2 * th)
    code, out, _ = run_cli(capsys, "rho", "--gamma", "2", "--sigma2", "0.1", "--eps", str(eps))
    header, rows = parse_csv(out)
    assert float(rows[0][0]) == pytest.approx(2 * th, rel=1e-12)


def test_cost_curve_regime_structure(capsys):
    th = memorization_threshold(2.0, NoiseLevel(0.1))
    grid = f"{0.25 * th}:{0.5 * th}:{4 * th}"
    code, out, _ = run_cli(capsys, "cost-curve", "--gamma", "2", "--sigma2", "0.1", "--grid", grid)
    assert code == 0
    header, rows = parse_csv(out)
    costs, regimes = [], []
    for r in rows:
        row = dict(zip(header, r))
        costs.append(float(row["cost"]))
        regimes.append(row["regime"])
    assert regimes[0] == "below_threshold"
    assert regimes[-1] == "above_threshold"
    assert all(b >= a for a, b in zip(costs, costs[1:]))
    assert costs[0] == 0.0 and costs[-1] > 0


def test_cost_curve_costbar_sign_change(capsys):
    eo2 = ols_threshold(2.0, NoiseLevel(0.1))
    grid = f"{0.8 * eo2}:{0.2 * eo2}:{1.2 * eo2}"
    code, out, _ = run_cli(capsys, "cost-curve", "--gamma", "2", "--sigma2", "0.1", "--grid", grid)
    header, rows = parse_csv(out)
    bars = [float(dict(zip(header, r))["costbar"]) for r in rows]
    assert bars[0] < 0 < bars[-1]


def test_cost_curve_row_level_error_markers(capsys):
    code, out, _ = run_cli(
        capsys, "cost-curve", "--gamma", "2", "--sigma2", "0.1", "--grid", "0.01:100:201"
    )
    assert code == 0
    header, rows = parse_csv(out)
    assert dict(zip(header, rows[-1]))["regime"] == "error"
    assert math.isnan(float(dict(zip(header, rows[-1]))["rho"]))


def test_cost_curve_empty_grid(capsys):
    code, out, _ = run_cli(
        capsys, "cost-curve", "--gamma", "2", "--sigma2", "0.1", "--grid", "2:1:1"
    )
    assert code == 0
    header, rows = parse_csv(out)
    assert rows == []


def test_ols_command(capsys):
    code, out, _ = run_cli(capsys, "ols", "--gamma", "2", "--sigma2", "0.1")
    assert code == 0
    header, rows = parse_csv(out)
    row = dict(zip(header, rows[0]))
    assert float(row["ols_gap"]) == pytest.approx(ols_gap(2.0, NoiseLevel(0.1)), rel=1e-12)
    assert float(row["residual"]) <= 1e-10


def test_csv_and_json_contain_identical_values(capsys, tmp_path):
    out_json = tmp_path / "t.json"
    code, csv_text, _ = run_cli(capsys, "threshold", "--gamma", "2", "--sigma2", "0.1")
    code2, json_text, _ = run_cli(
        capsys, "threshold", "--gamma", "2", "--sigma2", "0.1",
        "--format", "json", "--out", str(out_json),
    )
    assert code == 0 and code2 == 0
    header, rows = parse_csv(csv_text)
    payload = json.loads(out_json.read_text())
    assert payload["columns"] == header
    for a, b in zip(rows[0], payload["rows"][0]):
        assert float(a) == float(b)


def test_simulate_reproducible_outputs(tmp_path, capsys):
    args = [
        "simulate", "--n", "60", "--d", "120", "--sigma2", "0.1",
        "--rho", "0", "--trials", "3", "--seed", "7",
    ]
    code1, _, _ = run_cli(capsys, *args, "--out", str(tmp_path / "a"))
    code2, _, _ = run_cli(capsys, *args, "--out", str(tmp_path / "b"))
    assert code1 == 0 and code2 == 0
    for name in ("trials.csv", "summary.json"):
        h1 = hashlib.sha256((tmp_path / "a" / name).read_bytes()).hexdigest()
        h2 = hashlib.sha256((tmp_path / "b" / name).read_bytes()).hexdigest()
        assert h1 == h2


def test_simulate_summary_contents(tmp_path, capsys):
    code, _, _ = run_cli(
        capsys, "simulate", "--n", "60", "--d", "120", "--sigma2", "0.1",
        "--rho", "0", "--trials", "3", "--seed", "7", "--out", str(tmp_path / "s"),
    )
    summary = json.loads((tmp_path / "s" / "summary.json").read_text())
    m = summary["metrics"]["train_ridge"]
    assert m["target"] == pytest.approx(memorization_threshold(2.0, NoiseLevel(0.1)))
    assert "rel_dev" in m and "se" in m
    assert summary["config"]["seed"] == 7


def test_simulate_underparameterized_is_regime_error(capsys):
    code, out, err = run_cli(
        capsys, "simulate", "--n", "400", "--d", "300", "--sigma2", "0.1",
        "--rho", "0", "--trials", "1", "--seed", "7",
    )
    assert code == 2
    assert "d > n" in err


def test_simulate_requires_exactly_one_constraint(capsys):
    code, out, err = run_cli(
        capsys, "simulate", "--n", "40", "--d", "80", "--sigma2", "0.1",
        "--trials", "1", "--seed", "7",
    )
    assert code == 2


def test_verify_quick_passes(capsys):
    code, out, _ = run_cli(capsys, "verify", "--quick")
    assert code == 0
    assert "[FAIL]" not in out
    assert out.count("[PASS]") >= 8


def test_verify_perturbation_negative_control(capsys):
    code, out, _ = run_cli(capsys, "verify", "--quick", "--perturb")
    assert code == 1
    assert "[FAIL] stationarity-residual" in out


def test_spectrum_command(capsys):
    code, out, _ = run_cli(
        capsys, "spectrum", "--n", "50", "--d", "100", "--seed", "3", "--format", "json"
    )
    assert code == 0
    payload = json.loads(out)
    assert len(payload["rows"]) == 50
    vals = [r[1] for r in payload["rows"]]
    assert all(a >= b for a, b in zip(vals, vals[1:]))
    assert "kolmogorov_distance" in payload["metadata"]


def test_output_table_is_rectangular():
    with pytest.raises(DomainError):
        cli.OutputTable(header=["a", "b"], rows=[(1.0,)])


def test_seventeen_digit_round_trip():
    x = 0.014833147735478839
    assert float(f"{x:.17g}") == x


def test_cost_curve_gnuplot_companion(tmp_path, capsys):
    csv_path = tmp_path / "curve.csv"
    gp_path = tmp_path / "curve.gp"
    code, _, _ = run_cli(
        capsys, "cost-curve", "--gamma", "2", "--sigma2", "0.1",
        "--grid", "0.01:0.01:0.05", "--out", str(csv_path), "--gnuplot", str(gp_path),
    )
    assert code == 0
    script = gp_path.read_text()
    assert str(csv_path) in script and "plot" in script
    # script without a data file is a usage error
    code, _, err = run_cli(
        capsys, "cost-curve", "--gamma", "2", "--sigma2", "0.1",
        "--grid", "0.01:0.01:0.05", "--gnuplot", str(gp_path),
    )
    assert code == 2
