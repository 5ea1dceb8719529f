import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ssdp.conic import (
    AffineExpr,
    ConeProgram,
    add_hyperbolic,
    add_power_tower,
    add_sqrt_mixed,
    evaluate_point,
    export_conic,
    lin,
)


def hyper_program():
    p = ConeProgram()
    u, v, w = (p.add_var(n, -math.inf) for n in "uvw")
    add_hyperbolic(p, u, v, w)
    return p


@pytest.mark.parametrize("pt,ok", [((1, 1, 1), True), ((2, 1, 1), False), ((3, 2, 5), True)])
def test_hyperbolic_examples(pt, ok):
    rep = evaluate_point(hyper_program(), list(pt))
    assert rep.feasible is ok


def test_hyperbolic_boundary_residual_zero():
    rep = evaluate_point(hyper_program(), [1.0, 1.0, 1.0])
    assert rep.soc[0] == pytest.approx(0.0, abs=1e-15)


@settings(max_examples=300, deadline=None)
@given(u=st.floats(0, 5), v=st.floats(0, 5), w=st.floats(0, 5))
def test_hyperbolic_equivalence(u, v, w):
    rep = evaluate_point(hyper_program(), [u, v, w], tol=0.0)
    expected = math.sqrt(4 * u * u + (v - w) ** 2) - (v + w)
    assert rep.soc[0] == pytest.approx(expected, abs=1e-12)
    if abs(u * u - v * w) > 1e-9:
        assert (rep.max_violation <= 1e-12) == (u * u <= v * w)


def test_affine_expr_drops_zero_coefficients():
    e = AffineExpr.var(0, 2.0) + AffineExpr.var(0, -2.0) + 3.0
    assert e.coeffs == {} and e.const == 3.0
    assert lin([(1, 0.0), (2, 1.5)]).coeffs == {2: 1.5}


def tower(power):
    p = ConeProgram()
    y, t = p.add_var("y"), p.add_var("t")
    tw = add_power_tower(p, y, t, power)
    return p, tw, y, t


def test_tower_row_counts():
    p, _, _, _ = tower(1)
    assert len(p.socs) == 0 and len(p.linear) == 1
    p, _, _, _ = tower(3)
    assert p.count("tower") == 3
    p, _, _, _ = tower(5)
    assert p.count("tower") == 7


def _tower_feasible(power, y, t):
    p, tw, iy, it = tower(power)
    pt = {k: 0.0 for k in range(p.n_vars)}
    pt[iy], pt[it] = y, t
    pt.update(tw.complete(pt))
    return evaluate_point(p, pt, tol=1e-9).max_violation <= 1e-9


def test_tower_examples():
    assert _tower_feasible(3, 2.0, 8.0)
    assert not _tower_feasible(3, 2.0, 7.9)
    assert _tower_feasible(4, 1.0, 1.0)


@settings(max_examples=200, deadline=None)
@given(power=st.integers(1, 8), y=st.floats(0, 4), t=st.floats(0, 5000))
def test_tower_completion_iff_power_bound(power, y, t):
    gap = t - y**power
    if abs(gap) < 1e-6 * max(1.0, t):
        return
    assert _tower_feasible(power, y, t) == (gap > 0)


def test_tower_rejects_bad_power():
    with pytest.raises(ValueError):
        tower(0)


def test_tower_names_deterministic():
    a, _, _, _ = tower(5)
    b, _, _, _ = tower(5)
    assert [v.name for v in a.variables] == [v.name for v in b.variables]


def _sqrt_min_r(a, b, y):
    p = ConeProgram()
    ys = [p.add_binary(f"y{j}") for j in range(len(y))]
    r = p.add_var("r")
    add_sqrt_mixed(p, a, b, ys, r)
    row = p.socs[0]
    x = np.array([*y, 0.0])
    return math.sqrt(sum(e.value(x) ** 2 for e in row.body))


def test_sqrt_mixed_examples():
    assert _sqrt_min_r([0.0], [0.0], [0]) == 0.0
    assert _sqrt_min_r([4.0], [0.0], [1]) == pytest.approx(2.0)
    assert _sqrt_min_r([1.0], [1.0], [1]) == pytest.approx(math.sqrt(2))
    with pytest.raises(ValueError):
        _sqrt_min_r([-1.0], [0.0], [1])


def test_evaluate_point_single_linear_violation():
    p = ConeProgram()
    x = p.add_var("x", -10, 10)
    yv = p.add_var("y", -10, 10)
    p.add_linear(lin({x: 1, yv: 1}), "<=", 1.0)
    p.add_linear(x, ">=", -5.0)
    rep = evaluate_point(p, [1.0, 0.5])
    assert len(rep.violated()) == 1
    assert rep.violated()[0][2] == pytest.approx(0.5)


def test_evaluate_point_integrality_and_missing():
    p = ConeProgram()
    p.add_binary("x")
    assert evaluate_point(p, [0.3]).integrality[0] == pytest.approx(0.3)
    with pytest.raises(KeyError):
        evaluate_point(p, {})


def test_program_guards():
    p = ConeProgram()
    p.add_var("x")
    with pytest.raises(ValueError):
        p.add_var("x")
    with pytest.raises(ValueError):
        p.add_var("z", integer=True)
    with pytest.raises(IndexError):
        p.add_linear(AffineExpr.var(5), "<=", 0)


# -- export -------------------------------------------------------------------


def read_conic(text):
    """Independent minimal reader: section name -> list of data lines."""
    sections, cur = {}, None
    for line in text.splitlines():
        if not line.strip():
            cur = None
            continue
        if cur is None:
            cur = line.strip()
            sections[cur] = []
        else:
            sections[cur].append(line.split())
    out = {"n_vars": 0, "n_int": 0, "n_con": 0, "cones": []}
    if "VAR" in sections:
        out["n_vars"] = int(sections["VAR"][0][0])
        assert len(sections["VAR"]) == 1 + out["n_vars"]
        out["n_int"] = int(sections["INT"][0][0])
        con = sections["CON"]
        out["n_con"] = int(con[0][0])
        nnz = int(con[1 + out["n_con"]][0])
        assert len(con) == 2 + out["n_con"] + nnz
        for r, c, _ in con[2 + out["n_con"] :]:
            assert 0 <= int(r) < out["n_con"] and 0 <= int(c) < out["n_vars"]
        cone = sections["CONE"]
        k = 1
        for _ in range(int(cone[0][0])):
            size = int(cone[k][1])
            out["cones"].append(size)
            k += 1 + size
        assert k == len(cone)
    return sections, out


def test_export_empty_program():
    sections, info = read_conic(export_conic(ConeProgram()))
    assert set(sections) == {"VER", "OBJSENSE"}
    assert info["n_vars"] == 0


def test_export_single_cone_block():
    p = ConeProgram()
    a, b, c = (p.add_var(n) for n in "abc")
    p.add_soc([a, b], c)
    _, info = read_conic(export_conic(p))
    assert info["cones"] == [3]


def test_export_counts_round_trip():
    p = ConeProgram()
    xs = [p.add_binary(f"x{i}") for i in range(3)]
    t = p.add_var("t")
    p.add_linear(lin({k: 1.0 for k in xs}), "==", 1.0)
    p.add_linear(t, "<=", 9.0)
    add_power_tower(p, xs[0], t, 3)
    p.set_objective(lin({t: 1.0}, 2.0))
    _, info = read_conic(export_conic(p))
    assert info["n_vars"] == p.n_vars
    assert info["n_int"] == 3
    assert info["n_con"] == len(p.linear)
    assert info["cones"] == [len(r.body) + 1 for r in p.socs]
    assert export_conic(p) == export_conic(p.copy())
