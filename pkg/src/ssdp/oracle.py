"""Brute-force reference solver for small instances.

Every map from zones to facilities is enumerated; for each used facility the
service rate is optimized in one dimension and the exact cost is summed.
Nothing here depends on the conic machinery.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .formulations import objective_value
from .instance import FacilitySpec, Instance
from .queueing import INF, variance_of, wt_total
from .solution import Solution

MAX_FACILITIES = 4
MAX_ZONES = 8
GRID_POINTS = 256
GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


class OracleError(ValueError):
    pass


@dataclass(frozen=True)
class OracleResult:
    solution: Solution
    cost: float
    enumerated: int


def _rate_cost(fac: FacilitySpec, lam: float, mu: float) -> float:
    return fac.sc * mu + fac.wc * wt_total(lam, mu, variance_of(fac.variance, mu))


def _rate_cost_slope(fac: FacilitySpec, lam: float, mu: float) -> float:
    """Derivative of :func:`_rate_cost` in ``mu`` (for ``mu > lam > 0``)."""
    g = dg = 0.0
    for l, d in enumerate(fac.variance.deltas):
        a = d * d
        g += a * mu ** (2 - 2 * l)
        dg += a * (2 - 2 * l) * mu ** (1 - 2 * l)
    gap = mu - lam
    dwt = 0.5 * lam * lam * (dg / (mu * gap) - (1.0 + g) * (2.0 * mu - lam) / (mu * mu * gap * gap)) - lam / (mu * mu)
    return fac.sc + fac.wc * dwt


def is_closed_form_case(fac: FacilitySpec) -> bool:
    return fac.variance.deltas == (0.0, 1.0) and fac.m == 0 and math.isinf(fac.M)


def closed_form_rate(fac: FacilitySpec, lam: float) -> tuple[float, float]:
    """Exponential service without rate bounds: ``(mu*, sc mu* + wc WT)``."""
    if lam == 0:
        return 0.0, 0.0
    mu = math.sqrt(fac.wc * lam / fac.sc) + lam
    return mu, 2.0 * math.sqrt(fac.sc * fac.wc * lam) + fac.sc * lam


def optimal_rate(fac: FacilitySpec, lam: float, numeric: bool = False) -> tuple[float, float]:
    """Best service rate for aggregate demand ``lam`` and its cost ``sc mu + wc WT``.

    A 256-point grid (half geometric from the lower end, half uniform)
    brackets the minimizer, golden-section search refines it and a root of
    the derivative polishes the result when the bracket allows.
    ``numeric=True`` bypasses the closed form of the exponential case.

    Raises:
        OracleError: the admissible interval is empty (``lam >= M``) or the
            minimum is not attained (no rate cost and no upper bound).
    """
    if lam < 0:
        raise OracleError("aggregate demand must be nonnegative")
    if lam == 0:
        return fac.m, fac.sc * fac.m
    if lam >= fac.M:
        raise OracleError(f"facility {fac.id}: demand {lam} does not fit below M = {fac.M}")
    if not numeric and is_closed_form_case(fac):
        return closed_form_rate(fac, lam)
    eps = 1e-9 * max(1.0, lam)
    lo = max(fac.m, lam + eps)
    if math.isfinite(fac.M):
        hi = fac.M
    else:
        if fac.sc <= 0:
            raise OracleError(f"facility {fac.id}: rate is free and unbounded, no minimum")
        mu0 = max(lo, 2.0 * lam) + 1.0
        hi = max(_rate_cost(fac, lam, mu0) / fac.sc, mu0)
    if hi <= lo:
        return hi, _rate_cost(fac, lam, hi)
    half = GRID_POINTS // 2
    span = hi - lo
    geo = lo + np.geomspace(span * 1e-9, span, half)
    grid = np.unique(np.concatenate([[lo], geo, np.linspace(lo, hi, GRID_POINTS - half)]))
    vals = np.array([_rate_cost(fac, lam, m) for m in grid])
    k = int(np.argmin(vals))
    a = grid[max(k - 1, 0)]
    b = grid[min(k + 1, grid.size - 1)]
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = _rate_cost(fac, lam, c), _rate_cost(fac, lam, d)
    while b - a > 1e-10 * max(1.0, abs(b)):
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = _rate_cost(fac, lam, c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = _rate_cost(fac, lam, d)
    best = 0.5 * (a + b)
    lo_b = grid[max(k - 1, 0)]
    hi_b = grid[min(k + 1, grid.size - 1)]
    s_lo, s_hi = _rate_cost_slope(fac, lam, lo_b), _rate_cost_slope(fac, lam, hi_b)
    if s_lo < 0 < s_hi:
        root = brentq(lambda m: _rate_cost_slope(fac, lam, m), lo_b, hi_b, xtol=1e-15, rtol=4 * np.finfo(float).eps)
        if _rate_cost(fac, lam, root) <= _rate_cost(fac, lam, best):
            best = root
    candidates = [best, grid[k], lo, hi]
    costs = [_rate_cost(fac, lam, m) for m in candidates]
    j = int(np.argmin(costs))
    return float(candidates[j]), float(costs[j])


def _closest_ok(inst: Instance, assign: tuple[int, ...], used: set[int]) -> bool:
    d = inst.d
    for j, i in enumerate(assign):
        if any(d[k, j] < d[i, j] for k in used):
            return False
    return True


def solve_exhaustive(inst: Instance, closest_assignment: bool = False) -> OracleResult:
    """Enumerate every zone-to-facility map and return the cheapest.

    Raises:
        OracleError: the instance exceeds 4 facilities or 8 zones, or no map
            is feasible.
    """
    nI, nJ = inst.n_facilities, inst.n_zones
    if nI > MAX_FACILITIES or nJ > MAX_ZONES:
        raise OracleError(f"instance too large for enumeration ({nI} facilities, {nJ} zones)")
    if closest_assignment and inst.d is None:
        raise OracleError("closest assignment requested without a distance matrix")
    lam = inst.lam
    travel = inst.tc * lam[None, :]
    memo: dict[tuple[int, int], tuple[float, float] | None] = {}

    def facility_cost(i: int, mask: int, load: float):
        key = (i, mask)
        if key not in memo:
            f = inst.facilities[i]
            if load >= f.M:
                memo[key] = None
            else:
                mu, cost = optimal_rate(f, load)
                memo[key] = (mu, f.ec + cost)
        return memo[key]

    best_cost = INF
    best: tuple[int, ...] | None = None
    best_mu: dict[int, float] = {}
    count = 0
    for assign in itertools.product(range(nI), repeat=nJ):
        count += 1
        masks = [0] * nI
        loads = [0.0] * nI
        for j, i in enumerate(assign):
            masks[i] |= 1 << j
            loads[i] += lam[j]
        used = {i for i in range(nI) if masks[i]}
        if closest_assignment and not _closest_ok(inst, assign, used):
            continue
        total = float(sum(travel[i, j] for j, i in enumerate(assign)))
        mus = {}
        for i in used:
            fc = facility_cost(i, masks[i], loads[i])
            if fc is None:
                total = INF
                break
            mus[i] = fc[0]
            total += fc[1]
        if total < best_cost:
            best_cost, best, best_mu = total, assign, mus
    if best is None:
        raise OracleError("no feasible assignment")
    opened = tuple(i in best_mu for i in range(nI))
    sol = Solution(opened, tuple(best), tuple(best_mu.get(i, 0.0) for i in range(nI)))
    sol = Solution(sol.open, sol.assign, sol.mu, objective_value(inst, sol))
    return OracleResult(sol, sol.objective, count)
