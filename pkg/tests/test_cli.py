import json

import pytest

from conftest import counterexample_discrete
from vrpsd.cli import EXIT_ERROR, EXIT_INFEASIBLE, EXIT_OK, EXIT_USAGE, SCHEMA, GapRow, main
from vrpsd.instance import generate_jabali, load, make_instance, save
from vrpsd.stochastic import Poisson


@pytest.fixture
def small(tmp_path):
    p = tmp_path / "small.json"
    save(generate_jabali(8, 2, 0.9, 1.0, seed=1), p)
    return p


def _records(path):
    return [json.loads(line) for line in path.read_text().splitlines() if line.strip()]


def test_solve_records(small, tmp_path):
    out = tmp_path / "solve.jsonl"
    assert main(["solve", str(small), "--format", "records", "--out", str(out), "--time-limit", "60"]) == EXIT_OK
    (rec,) = _records(out)
    assert rec["schema"] == SCHEMA and rec["kind"] == "solve"
    assert rec["status"] == "Optimal"
    assert rec["objective"] == pytest.approx(rec["travel_cost"] + rec["recourse_cost"])
    assert sorted(i for r in rec["routes"] for i in r) == list(range(1, 9))


def test_solve_table_output(small, capsys):
    assert main(["solve", str(small), "--time-limit", "60"]) == EXIT_OK
    assert "Optimal" in capsys.readouterr().out


def test_bounds_records(small, tmp_path):
    out = tmp_path / "bounds.jsonl"
    assert main(["bounds", str(small), "--format", "records", "--out", str(out), "--time-limit", "60"]) == EXIT_OK
    recs = _records(out)
    assert recs[-1]["kind"] == "bounds-average"
    row = recs[0]
    for name in ("LSG18", "L1", "L2", "L3"):
        assert row["gaps"][name] is None or 0.0 <= row["gaps"][name] <= 100.0 + 1e-9


def test_gap_row_zero_recourse():
    row = GapRow("x", 0.0, {"L1": 0.0}, 0.0, 1)
    assert row.gap("L1") is None


def test_check_mono(tmp_path, capsys):
    p = tmp_path / "ce.json"
    save(counterexample_discrete(), p)
    assert main(["check-mono", str(p), "--format", "records"]) == EXIT_OK
    rec = json.loads(capsys.readouterr().out.splitlines()[0])
    assert rec["verdict"] == "Violated"
    assert main(["check-mono", "--grid-capacity", "40", "--grid-dispersion", "0.111"]) == EXIT_OK
    assert main(["check-mono"]) == EXIT_USAGE


def test_path_cuts_refused_on_non_monotone(tmp_path):
    p = tmp_path / "ce.json"
    save(counterexample_discrete(), p)
    assert main(["solve", str(p)]) == EXIT_USAGE
    assert main(["solve", str(p), "--cuts", "r"]) == EXIT_OK


def test_infeasible_exit_code(tmp_path):
    p = tmp_path / "inf.json"
    save(make_instance([Poisson(4)] * 3, 5, fleet_sizes=[1]), p)
    assert main(["solve", str(p)]) == EXIT_INFEASIBLE


def test_usage_errors(small, tmp_path):
    assert main(["solve", str(small), "--cuts", "q"]) == EXIT_USAGE
    assert main(["solve", str(small), "--time-limit", "0"]) == EXIT_USAGE
    assert main(["generate", "--n", "5", "--vehicles", "1", "--fill", "0"]) == EXIT_USAGE
    assert main([]) == EXIT_USAGE
    assert main(["solve", str(tmp_path / "missing.json")]) == EXIT_ERROR


def test_generate_counts_and_determinism(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    args = ["--n", "6", "8", "--vehicles", "2", "--fill", "0.85", "0.9", "--replicates", "3", "--seed", "5"]
    assert main(["generate", *args, "--out", str(a)]) == EXIT_OK
    assert main(["generate", *args, "--out", str(b)]) == EXIT_OK
    files = sorted(p.name for p in a.glob("*.json"))
    assert len(files) == 2 * 2 * 3
    assert "n6_m2_f0.85_r0_s5.json" in files
    for name in files:
        assert (a / name).read_text() == (b / name).read_text()
    assert load(a / "n8_m2_f0.90_r2_s7.json").n == 8
