import json
import re

import numpy as np
import pytest

from phasebal import cli, fixtures, harness, oracle
from phasebal.metrics import ObjectiveSpec
from phasebal.network import (ConstraintConfig, LoadSeries, PhaseAssignment,
                              original_assignment)
from phasebal.problem import Problem


# -- cmd_optimize ---------------------------------------------------------------


def test_oracle_report_matches_enumeration(line):
    feeder, loads = line
    cons = ConstraintConfig(delta_max=3)
    report = harness.cmd_optimize(feeder, loads, "oracle", ObjectiveSpec("pu"),
                                  cons)
    prob = Problem(feeder, loads, cons, ObjectiveSpec("pu"))
    direct = oracle.enumerate_optimal(prob, evaluator="exact")
    assert np.isclose(report.objective_value, direct.objective)
    assert report.binary_feasible
    assert report.schema_version == harness.SCHEMA_VERSION


def _redact_timing(text: str) -> str:
    return re.sub(r'"wall_time_s": [0-9.e+-]+', '"wall_time_s": 0', text)


def test_ga_report_deterministic(line):
    feeder, loads = line
    cons = ConstraintConfig(delta_max=3)
    from phasebal.ga import GAConfig
    cfg = GAConfig(population_size=10, max_fitness_calls=100, rng_seed=5)
    reports = [harness.cmd_optimize(feeder, loads, "ga", ObjectiveSpec("pu"),
                                    cons, seed=5, ga_config=cfg).to_json()
               for _ in range(2)]
    assert _redact_timing(reports[0]) == _redact_timing(reports[1])


def test_miqp_report_improves_both_spaces(line):
    feeder, loads = line
    cons = ConstraintConfig(delta_max=3)
    report = harness.cmd_optimize(feeder, loads, "miqp",
                                  ObjectiveSpec("pvur_star"), cons)
    assert report.objective_value < report.metrics_original["pvur_star"]
    assert (report.metrics_solution["pvur"]
            < report.metrics_original["pvur"])


def test_report_tables_recomputed_from_assignment(line):
    feeder, loads = line
    cons = ConstraintConfig(delta_max=3)
    report = harness.cmd_optimize(feeder, loads, "miqp",
                                  ObjectiveSpec("pu_star"), cons)
    assignment = harness.assignment_from_payload(feeder, report.assignment)
    table = harness.metric_table(feeder, loads, assignment)
    assert table == report.metrics_solution


def test_unknown_method_rejected(line):
    feeder, loads = line
    from phasebal.errors import ValidationError
    with pytest.raises(ValidationError, match="unknown method"):
        harness.cmd_optimize(feeder, loads, "anneal", ObjectiveSpec("pu"),
                             ConstraintConfig(delta_max=1))


# -- cmd_validate ----------------------------------------------------------------


def test_validate_training_window_mean_matches_objective(line):
    feeder, loads = line
    cons = ConstraintConfig(delta_max=3)
    report = harness.cmd_optimize(feeder, loads, "oracle", ObjectiveSpec("pu"),
                                  cons)
    assignment = harness.assignment_from_payload(feeder, report.assignment)
    val = harness.cmd_validate(feeder, assignment, loads, metric_names=("pu",))
    assert np.isclose(val["metrics"]["pu"]["solution"]["mean"],
                      report.objective_value)


def test_validate_balanced_loads_degenerate_zero(two_bus):
    feeder, _ = two_bus
    ids = tuple(u.id for u in feeder.users)
    p = np.full((6, 3), 1000.0)
    loads = LoadSeries(ids, p, np.zeros_like(p))
    balanced = PhaseAssignment((1, 2, 3))
    val = harness.cmd_validate(feeder, balanced, loads, metric_names=("pvur",))
    dist = val["metrics"]["pvur"]["solution"]
    assert dist["max"] < 1e-9
    assert dist["min"] >= 0.0


def test_validate_unseen_days_median_improves(line):
    feeder, loads = line
    cons = ConstraintConfig(delta_max=3)
    report = harness.cmd_optimize(feeder, loads, "oracle", ObjectiveSpec("pu"),
                                  cons)
    assignment = harness.assignment_from_payload(feeder, report.assignment)
    unseen = fixtures.line_profiles(horizon=8 * 24, seed=12345)
    val = harness.cmd_validate(feeder, assignment, unseen)
    assert (val["metrics"]["pu"]["solution"]["median"]
            < val["metrics"]["pu"]["original"]["median"])


def test_validate_csv_emitted(tmp_path, line):
    feeder, loads = line
    a0 = original_assignment(feeder)
    path = tmp_path / "val.csv"
    harness.cmd_validate(feeder, a0, loads, csv_path=path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "t,pvur_original,pvur_solution,pu_original,pu_solution"
    assert len(lines) == 1 + loads.horizon


# -- cmd_sweep_switches ------------------------------------------------------------


@pytest.fixture(scope="module")
def line_sweep(line):
    feeder, loads = line
    return harness.cmd_sweep_switches(feeder, loads, ObjectiveSpec("pu_star"),
                                      grid=(0, 1, 2, 3), time_limit_s=10.0)


def test_sweep_zero_budget_is_baseline(line, line_sweep):
    feeder, loads = line
    prob = Problem(feeder, loads, ConstraintConfig(delta_max=0),
                   ObjectiveSpec("pu_star"))
    from phasebal.problem import evaluate
    i0 = evaluate(prob, original_assignment(feeder), "ld3f")
    assert np.isclose(line_sweep.values[0], i0)


def test_sweep_full_budget_hits_oracle(line, line_sweep):
    feeder, loads = line
    prob = Problem(feeder, loads, ConstraintConfig(delta_max=3),
                   ObjectiveSpec("pu_star"))
    direct = oracle.enumerate_optimal(prob, evaluator="ld3f")
    assert np.isclose(line_sweep.values[-1], direct.objective, atol=1e-9)


def test_sweep_non_increasing(line_sweep):
    vals = line_sweep.values
    assert all(b <= a + 1e-9 for a, b in zip(vals, vals[1:]))


def test_sweep_csv(tmp_path, line):
    feeder, loads = line
    path = tmp_path / "sweep.csv"
    harness.cmd_sweep_switches(feeder, loads, ObjectiveSpec("pu_star"),
                               grid=(0, 1), time_limit_s=10.0, csv_path=path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "delta_max,objective,switches_used"
    assert len(lines) == 3


# -- cmd_scaling -------------------------------------------------------------------


def test_scaling_single_cell(line):
    feeder, loads = line
    report = harness.cmd_scaling([("line", feeder, loads)], horizons=[2],
                                 methods=["oracle"], repeats=3)
    assert len(report["rows"]) == 1  # deterministic methods run once
    assert report["rows"][0]["method"] == "oracle"
    assert len(report["reported"]) == 1


def test_scaling_row_schema_and_repeats(line):
    feeder, loads = line
    report = harness.cmd_scaling([("line", feeder, loads)], horizons=[2],
                                 methods=["ga"], repeats=2,
                                 constraints=ConstraintConfig(delta_max=2))
    assert [r["repeat"] for r in report["rows"]] == [0, 1]
    for row in report["rows"]:
        assert set(row) == {"feeder", "horizon", "method", "repeat",
                            "wall_time_s"}
    slowest = report["reported"][0]["wall_time_s"]
    assert slowest == max(r["wall_time_s"] for r in report["rows"])


def test_scaling_time_grows_with_horizon(line):
    feeder, loads = line
    report = harness.cmd_scaling([("line", feeder, loads)], horizons=[1, 24],
                                 methods=["oracle"], repeats=1)
    by_h = {r["horizon"]: r["wall_time_s"] for r in report["rows"]}
    assert by_h[24] > by_h[1]


# -- cmd_pf -------------------------------------------------------------------------


def test_pf_report_shape(line):
    feeder, loads = line
    out = harness.cmd_pf(feeder, loads, t=2)
    entry = out["timesteps"]["2"]
    assert entry["converged"]
    assert set(entry["voltage_magnitude_pu"]) == set(feeder.buses)
    assert entry["loss_percent"] > 0.0
