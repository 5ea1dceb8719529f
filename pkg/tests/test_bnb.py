import json
import math

import numpy as np
import pytest

from helpers import facility, make_instance
from ssdp.bnb import (
    Node,
    SearchSettings,
    SearchStatus,
    branch,
    extract_solution,
    polish_rates,
    prepare_model,
    propagate,
    report_from_dict,
    solve,
)
from ssdp.cuts import SETTINGS, CutGenSettings
from ssdp.formulations import FormulationKind, build, lift_point, objective_value
from ssdp.instance import GeneratorConfig, generate_instance
from ssdp.oracle import solve_exhaustive
from ssdp.socp import solve_program
from ssdp.solution import Solution


def small(seed, nI=2, nJ=4, degree=2):
    return generate_instance(seed, nI, nJ, GeneratorConfig(degree=degree))


def two_by_two():
    return make_instance(
        [facility(1, ec=10.0), facility(2, ec=12.0, deltas=(0.0, 0.8))],
        [1.0, 1.5],
        [[1.0, 6.0], [5.0, 1.0]],
    )


@pytest.mark.parametrize("kind", list(FormulationKind))
def test_single_cell_is_17(inst17, kind):
    rep = solve(inst17, SearchSettings(formulation=kind))
    assert rep.status is SearchStatus.OPTIMAL
    assert rep.objective == pytest.approx(17.0, rel=1e-6)
    assert rep.solution.mu[0] == pytest.approx(3.0, rel=1e-7)
    assert rep.bound <= rep.objective
    assert rep.percentages() == pytest.approx(
        {"establish": 1000 / 17, "serve": 300 / 17, "wait": 200 / 17, "travel": 200 / 17}
    )


def test_settings_validation():
    with pytest.raises(ValueError):
        SearchSettings(gap_tol=0.0)
    with pytest.raises(ValueError):
        SearchSettings(setting="fancy")
    assert SearchSettings(formulation="alt").formulation is FormulationKind.ALTERNATIVE
    custom = CutGenSettings(1, True, max_rounds=2)
    assert SearchSettings(cuts=custom).cut_settings is custom
    assert SearchSettings(setting="vi-cut2").cut_settings == SETTINGS["vi-cut2"]


def test_propagation_rules():
    bm = build(two_by_two(), "general")
    x, y = bm.x, bm.y
    fx = propagate(bm, {int(x[0]): 0.0})
    # zone columns lose facility 1, so facility 2 must take both
    assert fx[int(y[0, 0])] == 0.0 and fx[int(y[1, 0])] == 1.0 and fx[int(x[1])] == 1.0
    fx = propagate(bm, {int(y[0, 1]): 1.0})
    assert fx[int(x[0])] == 1.0 and fx[int(y[1, 1])] == 0.0
    assert propagate(bm, {int(x[0]): 0.0, int(x[1]): 0.0}) is None
    assert propagate(bm, {int(y[0, 0]): 1.0, int(y[1, 0]): 1.0}) is None


def test_branch_prefers_most_fractional_then_x():
    bm = build(two_by_two(), "general")
    point = np.zeros(bm.program.n_vars)
    point[bm.x[1]] = 0.5
    point[bm.y[0, 0]] = 0.5
    point[bm.y[1, 1]] = 0.3
    left, right = branch(Node(0.0, 0), point, bm)
    k = int(bm.x[1])
    assert left.fixings[k] == 0.0 and right.fixings[k] == 1.0
    assert left.depth == right.depth == 1
    point[bm.y[0, 0]] = 0.45
    point[bm.x[1]] = 0.2
    left, _ = branch(Node(0.0, 0), point, bm)
    assert left.fixings[int(bm.y[0, 0])] == 0.0


def test_branch_rejects_integral_point():
    bm = build(two_by_two(), "general")
    with pytest.raises(ValueError):
        branch(Node(0.0, 0), np.zeros(bm.program.n_vars), bm)


def test_extract_solution_roundtrip():
    inst = two_by_two()
    bm = build(inst, "general")
    ref = solve_exhaustive(inst).solution
    sol = extract_solution(lift_point(bm, ref), inst, bm)
    assert sol.open == ref.open and sol.assign == ref.assign
    assert sol.mu == pytest.approx(ref.mu)
    assert sol.objective == pytest.approx(ref.objective)


def test_extract_solution_nudges_boundary_rate():
    inst = two_by_two()
    bm = build(inst, "general")
    point = lift_point(bm, Solution((True, False), (0, 0), (4.0, 0.0)))
    point[bm.mu[0]] = 2.5 - 5e-8
    sol = extract_solution(point, inst, bm)
    assert sol.mu[0] == pytest.approx(2.5 + 1e-7)
    point[bm.x[1]] = 0.5
    with pytest.raises(ValueError):
        extract_solution(point, inst, bm)


def test_polish_never_worsens():
    inst = two_by_two()
    rough = Solution((True, True), (0, 1), (2.0, 7.0))
    rough = Solution(rough.open, rough.assign, rough.mu, objective_value(inst, rough))
    polished = polish_rates(inst, rough)
    assert polished.objective <= rough.objective
    assert polished.mu[0] == pytest.approx(3.0)


@pytest.mark.parametrize("seed", range(3))
def test_bounds_sandwich_oracle(seed):
    inst = small(seed)
    rep = solve(inst)
    ref = solve_exhaustive(inst).cost
    assert rep.status is SearchStatus.OPTIMAL
    assert rep.bound <= ref * (1 + 1e-6)
    assert ref <= rep.objective * (1 + 1e-9)
    assert rep.objective == pytest.approx(ref, rel=1e-4)
    assert rep.root_bound <= ref * (1 + 1e-6)


def test_vi_root_bound_dominates():
    inst = small(1)
    plain = solve_program(prepare_model(inst, SearchSettings())[0].program)
    model, rows = prepare_model(inst, SearchSettings(setting="vi"))
    tight = solve_program(model.program)
    assert rows > 0
    assert tight.bound >= plain.bound - 1e-6 * abs(plain.bound)


def test_deterministic_node_counts():
    inst = small(2)
    a, b = solve(inst), solve(inst)
    assert (a.nodes, a.objective, a.bound) == (b.nodes, b.objective, b.bound)


@pytest.mark.slow
def test_six_settings_agree():
    inst = make_instance(
        [facility(1, ec=10.0, deltas=(0.2, 1.0, 0.5)), facility(2, ec=12.0, deltas=(0.0, 0.8))],
        [1.0, 1.5, 0.7],
        [[1.0, 6.0, 2.0], [5.0, 1.0, 2.5]],
    )
    ref = solve_exhaustive(inst).cost
    for name, cs in SETTINGS.items():
        quick = CutGenSettings(cs.b_size, cs.use_vi, max_rounds=2)
        rep = solve(inst, SearchSettings(setting=name, cuts=quick))
        assert rep.status is SearchStatus.OPTIMAL, name
        assert rep.objective == pytest.approx(ref, rel=1e-5), name
        assert rep.setting == name


def test_node_limit_keeps_incumbent_and_bound():
    inst = small(0, 3, 4)
    rep = solve(inst, SearchSettings(node_limit=1))
    assert rep.nodes <= 1
    assert rep.status in (SearchStatus.NODE_LIMIT, SearchStatus.OPTIMAL)
    assert rep.bound <= rep.objective
    assert rep.gap >= 0


def test_time_limit_does_not_raise():
    rep = solve(small(0, 3, 6), SearchSettings(time_limit=1e-4))
    assert rep.status is SearchStatus.TIME_LIMIT
    assert rep.gap == math.inf or rep.gap >= 0


def packing_infeasible():
    # enough total capacity, but every split overloads one facility
    return make_instance([facility(1, M=1.5), facility(2, M=1.5)], [1.0, 1.0, 0.6], np.ones((2, 3)))


def test_infeasible_instance():
    rep = solve(packing_infeasible())
    assert rep.status is SearchStatus.INFEASIBLE
    assert rep.solution is None and rep.objective == math.inf


def test_report_document_roundtrip(inst17):
    rep = solve(inst17)
    doc = json.loads(rep.to_json(inst17))
    assert doc["open"] == [1] and doc["assignment"] == {"1": 1}
    back = report_from_dict(doc, inst17)
    assert back.status is rep.status and back.objective == pytest.approx(rep.objective)
    assert back.solution.assign == rep.solution.assign
    assert back.solution.mu == pytest.approx(rep.solution.mu)
    assert back.breakdown.as_dict() == pytest.approx(rep.breakdown.as_dict())
    loose = report_from_dict(doc)
    assert loose.solution.open == (True,)


def test_unsolved_document_uses_null():
    inst = packing_infeasible()
    doc = solve(inst).to_dict(inst)
    assert doc["objective"] is None and doc["breakdown"] is None
    assert math.isnan(report_from_dict(doc).objective)


def test_malformed_document():
    with pytest.raises(ValueError):
        report_from_dict({"status": "Optimal"})
    with pytest.raises(ValueError):
        report_from_dict({"status": "Bogus"})
