"""End-to-end acceptance checks; each test prints one PASS/FAIL line."""

import dataclasses
import json
import math

import numpy as np
import pytest

from cut_cases import integer_points, soundness_violations, tiny_instance
from grid_cases import BINARY_CASES, CONTINUOUS_INDIVIDUAL, CONTINUOUS_TOTAL, grid_mismatches
from helpers import facility, make_instance
from socp_cases import analytic_suite, random_socp
from ssdp.bnb import SearchSettings, SearchStatus, solve
from ssdp.cli import run
from ssdp.cuts import SETTINGS, add_cut, add_valid_inequalities, fractional_binaries, root_cut_loop, separate
from ssdp.formulations import build
from ssdp.instance import GeneratorConfig, generate_instance, save_instance
from ssdp.queueing import LocationScaleSpec, wt_individual, wt_total, wt_total_array
from ssdp.socp import Status, solve as solve_sf, solve_program

pytestmark = pytest.mark.slow

N_ORACLE = 50
SIZES = [(2, 4), (2, 6), (3, 4), (3, 6)]
TIME_BUDGET = 120.0
_basic: dict[int, dict] = {}


def oracle_instance(seed: int):
    nI, nJ = SIZES[seed % 4]
    return generate_instance(seed, nI, nJ, GeneratorConfig(degree=2))


def with_deltas(inst, fn):
    facs = tuple(dataclasses.replace(f, variance=LocationScaleSpec(fn(f))) for f in inst.facilities)
    return dataclasses.replace(inst, facilities=facs)


def rel(a, b):
    return abs(a - b) / max(abs(b), 1e-12)


def _verify(seed, tmp_path_factory, capsys):
    if seed not in _basic:
        path = tmp_path_factory.mktemp("c1") / f"inst{seed}.json"
        path.write_text(save_instance(oracle_instance(seed)))
        capsys.readouterr()
        code = run(["verify", str(path)])
        doc = json.loads(capsys.readouterr().out) if code == 0 else {"match": False, "code": code}
        _basic[seed] = doc
    return _basic[seed]


def test_criterion_1_oracle_equivalence(verdict, tmp_path_factory, capsys):
    worst, slowest, failures = 0.0, 0.0, []
    for seed in range(N_ORACLE):
        doc = _verify(seed, tmp_path_factory, capsys)
        if not doc.get("match") or doc["wall_seconds"] > TIME_BUDGET:
            failures.append(seed)
            continue
        worst = max(worst, doc["relative_difference"])
        slowest = max(slowest, doc["wall_seconds"])
    verdict(
        1,
        not failures,
        f"{N_ORACLE} instances, max rel diff {worst:.1e} <= 1e-4, slowest {slowest:.1f}s, failing seeds {failures}",
    )


def test_criterion_2_closed_form(verdict):
    rng = np.random.default_rng(2024)
    worst_cost = worst_mu = 0.0
    for trial in range(20):
        ec, sc, wc = rng.uniform(1, 100), rng.uniform(0.1, 10), rng.uniform(0.1, 50)
        n_zones = 1 + trial % 3
        lams = rng.uniform(0.1, 10, size=n_zones)
        tcs = rng.uniform(0, 20, size=n_zones)
        lam = float(lams.sum())
        inst = make_instance([facility(ec=ec, sc=sc, wc=wc)], lams, [tcs])
        expect = ec + 2 * math.sqrt(sc * wc * lam) + sc * lam + float(tcs @ lams)
        mu_star = math.sqrt(wc * lam / sc) + lam
        for kind in ("general", "mm1"):
            rep = solve(inst, SearchSettings(formulation=kind))
            worst_cost = max(worst_cost, rel(rep.objective, expect))
            worst_mu = max(worst_mu, rel(rep.solution.mu[0], mu_star))
    verdict(2, worst_cost <= 1e-6 and worst_mu <= 1e-7, f"cost rel {worst_cost:.1e} <= 1e-6, mu rel {worst_mu:.1e} <= 1e-7")


def test_criterion_3_cross_formulation(verdict):
    worst_lin = worst_mm1 = 0.0
    for seed in range(N_ORACLE):
        low = with_deltas(oracle_instance(seed), lambda f: f.variance.deltas[:2])
        objs = {k: solve(low, SearchSettings(formulation=k)).objective for k in ("general", "affine", "alt")}
        worst_lin = max(worst_lin, rel(objs["affine"], objs["general"]), rel(objs["alt"], objs["general"]))
        mm1 = with_deltas(low, lambda f: (0.0, 1.0))
        capped = dataclasses.replace(
            mm1, facilities=tuple(dataclasses.replace(f, M=1e4) for f in mm1.facilities)
        )
        a = solve(mm1, SearchSettings(formulation="mm1")).objective
        b = solve(capped, SearchSettings(formulation="general")).objective
        worst_mm1 = max(worst_mm1, rel(a, b))
    verdict(
        3,
        worst_lin <= 1e-5 and worst_mm1 <= 1e-4,
        f"General/Affine/Alt max rel {worst_lin:.1e} <= 1e-5, ConstantMM1 vs General {worst_mm1:.1e} <= 1e-4",
    )


def _witness(seed):
    """A single-binary cut violated at the root point that lifts the bound."""
    bm = build(tiny_instance(seed), "general")
    root = solve_program(bm.program)
    for k in fractional_binaries(bm, root.x)[:4]:
        cut = separate(bm, root.x, (k,), SETTINGS["cut1"])
        if cut is None or cut.normalized_violation(root.x) < 1e-6:
            continue
        add_cut(bm, cut)
        after = solve_program(bm.program)
        if after.usable and after.bound > root.bound:
            return cut.normalized_violation(root.x), root.bound, after.bound
    return None


def test_criterion_4_cut_soundness(verdict):
    bad, checked, points, cuts, witness = [], 0, 0, 0, None
    for seed in range(20):
        for name in ("vi-cut1", "vi-cut2"):
            bm = build(tiny_instance(seed), "general")
            add_valid_inequalities(bm)
            loop = root_cut_loop(bm, SETTINGS[name])
            cuts += len(loop.cuts)
            bad += [(seed, name, v) for v in soundness_violations(bm, loop.cuts)]
            checked += 1
        points += sum(1 for _ in integer_points(build(tiny_instance(seed), "general")))
        if witness is None:
            witness = _witness(seed)
    detail = f"{checked} runs, {cuts} cuts, {points} lifted points, {len(bad)} violations"
    if witness:
        detail += f"; witness violation {witness[0]:.1e}, bound {witness[1]:.2f} -> {witness[2]:.2f}"
    verdict(4, not bad and witness is not None, detail)


def test_criterion_5_solver_certification(verdict):
    worst, failures = 0.0, []
    for seed in range(100):
        sf = random_socp(seed)
        a, b = solve_sf(sf), solve_sf(sf)
        worst = max(worst, a.gap, a.primal_residual, a.dual_residual)
        if a.status is not Status.OPTIMAL or a.trace != b.trace or max(a.gap, a.primal_residual, a.dual_residual) > 1e-7:
            failures.append(f"random {seed}")
    for name, prog, value in analytic_suite():
        r = solve_program(prog)
        worst = max(worst, r.gap, r.primal_residual, r.dual_residual)
        if r.status is not Status.OPTIMAL or abs(r.objective - value) > 1e-6 or max(r.gap, r.primal_residual, r.dual_residual) > 1e-7:
            failures.append(name)
    verdict(5, not failures, f"100 random + 10 analytic, worst gap/residual {worst:.1e} <= 1e-7, failures {failures}")


def test_criterion_6_queueing_fidelity(verdict):
    rng = np.random.default_rng(6)
    n = 100_000
    lam = rng.uniform(0.01, 50, n)
    mu = lam + rng.uniform(1e-3, 50, n)
    v = rng.uniform(0, 5, n)
    total = wt_total_array(lam, mu, v)
    indiv = np.array([wt_individual(*p) for p in zip(lam, mu, v)])
    ident = float(np.max(np.abs(total - lam * indiv) / np.maximum(1.0, np.abs(total))))
    formula = lam * (lam * (1 + v * mu**2) / (2 * mu * (mu - lam)) + 1 / mu)
    ident = max(ident, float(np.max(np.abs(total - formula) / np.abs(formula))))
    direct = np.array([wt_total(*p) for p in zip(lam[:1000], mu[:1000], v[:1000])])
    scalar_ok = np.allclose(direct, total[:1000], rtol=1e-12)
    dv, dmu = rng.uniform(0, 1, n), rng.uniform(1e-3, 1, n)
    mono = (
        np.all(wt_total_array(lam, mu, v + dv) >= total)
        and np.all(wt_total_array(lam, mu + dmu, v) < total)
        and np.all(wt_total_array(lam * rng.uniform(0.5, 1, n), mu, v) <= total)
    )
    grid_bad = 0
    for var in BINARY_CASES:
        grid_bad += grid_mismatches("total", "binary-selection", var, 2.0)[0]
        grid_bad += grid_mismatches("individual", "binary-selection", var, 1.0)[0]
    for var in CONTINUOUS_TOTAL:
        grid_bad += grid_mismatches("total", "continuous", var, 2.0)[0]
    for var in CONTINUOUS_INDIVIDUAL:
        grid_bad += grid_mismatches("individual", "continuous", var, 1.0)[0]
    ok = ident <= 1e-10 and scalar_ok and bool(mono) and grid_bad == 0
    verdict(6, ok, f"{n} points, identity err {ident:.1e} <= 1e-10, monotone {bool(mono)}, 50x50 grid mismatches {grid_bad}")


def test_criterion_7_distribution_sensitivity(verdict):
    found = None
    for seed in range(10):
        base = generate_instance(seed, 10, 30, GeneratorConfig(degree=1))
        opened = []
        for deltas in ((0.0, 1.0), (0.0, math.sqrt(0.25))):
            inst = with_deltas(base, lambda f, d=deltas: d)
            rep = solve(inst, SearchSettings(formulation="affine", time_limit=600))
            assert rep.status is SearchStatus.OPTIMAL, (seed, deltas, rep.status)
            opened.append(rep.solution.open_indices)
        if opened[0] != opened[1]:
            found = (seed, opened)
            break
    detail = f"seed {found[0]}: exponential opens {found[1][0]}, low variance opens {found[1][1]}" if found else "no seed"
    verdict(7, found is not None, detail)


def test_criterion_8_setting_equivalence(verdict, tmp_path_factory, capsys):
    worst, rows, skipped = 0.0, [], 0
    for seed in range(N_ORACLE):
        base = _verify(seed, tmp_path_factory, capsys)
        if not base.get("match"):
            skipped += 1
            continue
        inst = oracle_instance(seed)
        counts = [f"basic {base['nodes']}/0"]
        for name in list(SETTINGS)[1:]:
            rep = solve(inst, SearchSettings(setting=name))
            if rep.status is not SearchStatus.OPTIMAL:
                continue
            worst = max(worst, rel(rep.objective, base["bnb"]))
            counts.append(f"{name} {rep.nodes}/{rep.cuts}")
        rows.append(f"seed {seed}: " + ", ".join(counts))
        print(rows[-1], flush=True)
    verdict(8, worst <= 1e-5 and skipped == 0, f"{len(rows)} instances x 6 settings, max rel diff {worst:.1e} <= 1e-5")
