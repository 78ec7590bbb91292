import itertools

import numpy as np
import pytest

from phasebal import fixtures, lindist
from phasebal.errors import InfeasibleProgramError, ValidationError
from phasebal.metrics import ObjectiveSpec, aggregate
from phasebal.miqp import (BnBOptions, _quadratic_parts, branch_and_bound,
                           build_program)
from phasebal.network import (Branch, ConstraintConfig, LoadSeries,
                              PhaseAssignment, User, make_feeder)
from phasebal.problem import (Problem, evaluate, evaluate_exact,
                              metric_values_ld3f)

Z_R = [[0.1, 0.03, 0.03], [0.03, 0.1, 0.03], [0.03, 0.03, 0.1]]
Z_X = [[0.06, 0.02, 0.02], [0.02, 0.06, 0.02], [0.02, 0.02, 0.06]]


# -- build_program -------------------------------------------------------------


def test_exact_metrics_rejected(line):
    feeder, loads = line
    for metric in ("pvur", "pu", "iu"):
        with pytest.raises(ValidationError, match="not representable"):
            build_program(feeder, loads, ConstraintConfig(delta_max=2),
                          ObjectiveSpec(metric))


def test_no_reconfigurable_users_constant_program():
    feeder = make_feeder(
        buses=["r", "b1"],
        branches=[Branch("r", "b1", Z_R, Z_X)],
        reference_bus="r",
        users=[User("fix", "b1", 1, reconfigurable=False)],
        base_voltage=230.0, base_power=10000.0)
    p = np.full((3, 1), 2000.0)
    loads = LoadSeries(("fix",), p, np.zeros_like(p))
    cons = ConstraintConfig(delta_max=2)
    for metric in ("pvur_star", "pu_star"):
        prog = build_program(feeder, loads, cons, ObjectiveSpec(metric))
        assert prog.n_users == 0
        direct = evaluate(Problem(feeder, loads, cons, ObjectiveSpec(metric)),
                          PhaseAssignment(()), "ld3f")
        assert np.isclose(prog.baseline_objective, direct, atol=1e-12)
        res = branch_and_bound(prog)
        assert res.status == "optimal"
        assert res.nodes == 1
        assert res.gap == 0.0


def test_switch_budget_row(line):
    feeder, loads = line
    prog = build_program(feeder, loads, ConstraintConfig(delta_max=1),
                         ObjectiveSpec("pu_star"))
    # budget rewritten over the original-phase indicators:
    # 3 - (d_u1_1 + d_u2_1 + d_u3_1) <= 1
    a = PhaseAssignment((1, 1, 1))
    assert prog.point_feasible(a)
    assert prog.point_feasible(PhaseAssignment((1, 2, 1)))
    assert not prog.point_feasible(PhaseAssignment((1, 2, 3)))


def test_program_objective_matches_pipeline(line):
    feeder, loads = line
    cons = ConstraintConfig(delta_max=3)
    for metric in ("pvur_star", "pu_star"):
        prog = build_program(feeder, loads, cons, ObjectiveSpec(metric))
        prob = Problem(feeder, loads, cons, ObjectiveSpec(metric))
        for phases in itertools.product((1, 2, 3), repeat=3):
            a = PhaseAssignment(phases)
            assert abs(prog.objective_at(a) - evaluate(prob, a, "ld3f")) <= 1e-8


def test_program_optimum_equals_enumeration(line):
    feeder, loads = line
    cons = ConstraintConfig(delta_max=3)
    prob = Problem(feeder, loads, cons, ObjectiveSpec("pvur_star"))
    best = min(evaluate(prob, PhaseAssignment(p), "ld3f")
               for p in itertools.product((1, 2, 3), repeat=3))
    prog = build_program(feeder, loads, cons, ObjectiveSpec("pvur_star"))
    res = branch_and_bound(prog, BnBOptions(abs_gap=1e-9, rel_gap=0.0))
    assert abs(res.objective - best) <= 1e-9


def test_quadratic_parts_psd(line):
    feeder, loads = line
    prog = build_program(feeder, loads, ConstraintConfig(delta_max=3),
                         ObjectiveSpec("pu_star"))
    q_mat, _, _ = _quadratic_parts(prog)
    eigvals = np.linalg.eigvalsh((q_mat + q_mat.T) / 2)
    assert eigvals.min() >= -1e-10


# -- branch and bound ------------------------------------------------------------


def test_zero_budget_returns_original(line):
    feeder, loads = line
    prog = build_program(feeder, loads, ConstraintConfig(delta_max=0),
                         ObjectiveSpec("pu_star"))
    res = branch_and_bound(prog)
    assert res.assignment == PhaseAssignment((1, 1, 1))
    assert res.gap == 0.0
    assert res.nodes == 1
    assert res.status == "optimal"


@pytest.mark.parametrize("metric", ["pvur_star", "pu_star"])
def test_line_matches_oracle(line, metric):
    feeder, loads = line
    cons = ConstraintConfig(delta_max=3)
    prob = Problem(feeder, loads, cons, ObjectiveSpec(metric))
    best = min(evaluate(prob, PhaseAssignment(p), "ld3f")
               for p in itertools.product((1, 2, 3), repeat=3))
    prog = build_program(feeder, loads, cons, ObjectiveSpec(metric))
    res = branch_and_bound(prog, BnBOptions(abs_gap=1e-9, rel_gap=0.0,
                                            leaf_enum_cap=1))
    assert res.status == "optimal"
    assert res.gap <= 1e-9
    assert abs(res.objective - best) <= 1e-9
    assert res.bound <= res.objective + 1e-12


def test_twenty_user_budget_two_matches_enumeration(twenty_user):
    feeder, loads = twenty_user
    cons = ConstraintConfig(delta_max=2)
    prob = Problem(feeder, loads, cons, ObjectiveSpec("pu_star"))
    from phasebal.oracle import enumerate_optimal
    orc = enumerate_optimal(prob, evaluator="ld3f")
    prog = build_program(feeder, loads, cons, ObjectiveSpec("pu_star"))
    res = branch_and_bound(prog, BnBOptions(abs_gap=1e-9, rel_gap=0.0))
    assert abs(res.objective - orc.objective) <= 1e-9


def test_result_reproducible_by_linear_pipeline(line):
    feeder, loads = line
    cons = ConstraintConfig(delta_max=2)
    prob = Problem(feeder, loads, cons, ObjectiveSpec("pu_star"))
    prog = build_program(feeder, loads, cons, ObjectiveSpec("pu_star"))
    res = branch_and_bound(prog)
    replay = evaluate(prob, res.assignment, "ld3f")
    assert abs(replay - res.objective) <= 1e-8
    # exact-physics score exists and is finite
    exact = evaluate_exact(Problem(feeder, loads, cons, ObjectiveSpec("pu")),
                           res.assignment)
    assert np.isfinite(exact.objective)


def test_epigraph_tight_at_optimum(line):
    feeder, loads = line
    cons = ConstraintConfig(delta_max=3)
    prog = build_program(feeder, loads, cons, ObjectiveSpec("pvur_star"))
    res = branch_and_bound(prog, BnBOptions(abs_gap=1e-9, rel_gap=0.0))
    # at an integral optimum the epigraph mean equals the true max-deviation
    # mean computed by the metric pipeline
    prob = Problem(feeder, loads, cons, ObjectiveSpec("pvur_star"))
    state = lindist.evaluate_series(feeder, res.assignment, loads)
    vals = metric_values_ld3f(prob.objective, feeder, loads, state)
    assert abs(aggregate(prob.objective, vals) - res.objective) <= 1e-9


def test_infeasible_program_reports_rows(line):
    feeder, loads = line
    cons = ConstraintConfig(delta_max=3, gamma_low=2, gamma_upp=2,
                            enforce_phase_counts=True)  # 3 phases x 2 > 3 users
    prog = build_program(feeder, loads, cons, ObjectiveSpec("pu_star"))
    with pytest.raises(InfeasibleProgramError) as err:
        branch_and_bound(prog)
    assert err.value.rows  # an irreducible subset is named
    assert any("count" in label for label in err.value.rows)


def test_voltage_bound_rows_steer_solution(line):
    feeder, loads = line
    # v_min high enough that parking every user on one phase is infeasible
    cons = ConstraintConfig(delta_max=3, v_min=0.98, v_max=1.03)
    prog = build_program(feeder, loads, cons, ObjectiveSpec("pvur_star"))
    assert prog.side_rows  # screening kept some voltage rows
    assert not prog.point_feasible(PhaseAssignment((1, 1, 1)))
    res = branch_and_bound(prog, BnBOptions(abs_gap=1e-9, rel_gap=0.0))
    sens = lindist.sensitivity(feeder, loads)
    omega = sens.omega_of(res.assignment)
    assert omega.min() >= cons.v_min ** 2 - 1e-9
    assert omega.max() <= cons.v_max ** 2 + 1e-9


def test_initial_incumbent_used(twenty_user):
    feeder, loads = twenty_user
    cons = ConstraintConfig(delta_max=2)
    prog = build_program(feeder, loads, cons, ObjectiveSpec("pu_star"))
    first = branch_and_bound(prog, BnBOptions())
    res = branch_and_bound(prog, BnBOptions(node_limit=1,
                                            initial_incumbent=first.assignment))
    assert res.objective <= first.objective + 1e-12


def test_gap_options_validated():
    with pytest.raises(ValidationError):
        BnBOptions(abs_gap=-1.0)
