"""Integer-feasible lifted points and cut checks shared by the cut tests."""

import itertools

import numpy as np

from ssdp.conic import evaluate_point
from ssdp.cuts import SETTINGS, add_valid_inequalities, root_cut_loop
from ssdp.formulations import build, effective_min_rate, lift_point, solution_violations
from ssdp.instance import GeneratorConfig, generate_instance
from ssdp.oracle import OracleError, optimal_rate
from ssdp.solution import Solution

RATE_FACTORS = (1.0, 1.3, 2.5)


def tiny_instance(seed: int):
    n_fac = 2 + seed % 2
    return generate_instance(seed, n_fac, 3, GeneratorConfig(degree=2))


def integer_points(bm):
    """Every open set / assignment pair, lifted at several admissible rates."""
    inst = bm.inst
    lam = inst.lam
    nI, nJ = inst.n_facilities, inst.n_zones
    for assign in itertools.product(range(nI), repeat=nJ):
        used = set(assign)
        spare = [i for i in range(nI) if i not in used]
        for extra in itertools.chain.from_iterable(itertools.combinations(spare, r) for r in range(len(spare) + 1)):
            open_ = tuple(i in used or i in extra for i in range(nI))
            loads = np.zeros(nI)
            for j, i in enumerate(assign):
                loads[i] += lam[j]
            for factor in RATE_FACTORS:
                mu = []
                for i, f in enumerate(inst.facilities):
                    if not open_[i]:
                        mu.append(0.0)
                        continue
                    try:
                        base = optimal_rate(f, float(loads[i]))[0]
                    except OracleError:
                        base = float("nan")
                    rate = max(base * factor, effective_min_rate(f, lam))
                    mu.append(min(rate, f.M))
                sol = Solution(open_, assign, tuple(mu))
                if np.isnan(mu).any() or solution_violations(inst, sol):
                    continue
                yield lift_point(bm, sol)


def cut_experiment(seed: int, setting: str = "vi-cut1"):
    """Root loop on a tiny instance; returns (model, loop result)."""
    bm = build(tiny_instance(seed), "general")
    if SETTINGS[setting].use_vi:
        add_valid_inequalities(bm)
    loop = root_cut_loop(bm, SETTINGS[setting])
    return bm, loop


def soundness_violations(bm, cuts, tol=1e-7):
    """Rows or cuts violated by some integer-feasible lifted point."""
    bad = []
    for point in integer_points(bm):
        rep = evaluate_point(bm.program, point, tol=tol)
        if not rep.feasible:
            bad.append(("row", rep.violated()[:3]))
        for cut in cuts:
            if cut.normalized_violation(point) > tol:
                bad.append(("cut", cut.binaries, cut.normalized_violation(point)))
    return bad
