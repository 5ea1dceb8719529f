"""Grid comparison of the standalone waiting-time blocks against direct formulas."""

import numpy as np

from ssdp.convexify import ConvexifyMode, convexify_individual_wt, convexify_total_wt
from ssdp.queueing import LocationScaleSpec, variance_of, wt_individual, wt_total

BOUNDARY_TOL = 1e-8

BINARY_CASES = [(0.0, 1.0), (0.3, 0.5), (0.0, 0.0), (0.2, 2.0), LocationScaleSpec((0.3, 0.8, 0.5))]
CONTINUOUS_TOTAL = [(0.0, 1.0), (0.0, 0.5), (0.0, 0.0)]
CONTINUOUS_INDIVIDUAL = [(0.0, 1.0), (0.0, 0.25), (0.0, 0.0)]


def _variance(variance, mu):
    if isinstance(variance, LocationScaleSpec):
        return variance_of(variance, mu)
    a, b = variance
    return a + b / mu**2


def grid_mismatches(kind, mode, variance, z, n=50):
    """Count grid points where block feasibility disagrees with ``WT <= z``.

    Points within ``BOUNDARY_TOL`` of the bound, or of ``mu == lam``, are
    skipped. Returns ``(mismatches, compared)``.
    """
    mode = ConvexifyMode(mode)
    direct = wt_total if kind == "total" else wt_individual
    build = convexify_total_wt if kind == "total" else convexify_individual_wt
    lams = np.linspace(0.05, 5.0, n)
    mus = np.linspace(0.1, 10.0, n)
    bad = compared = 0
    for lam in lams:
        blk = build([lam], mode, variance, z)
        for mu in mus:
            if abs(mu - lam) < BOUNDARY_TOL:
                continue
            wt = direct(lam, mu, _variance(variance, mu))
            if abs(wt - z) <= BOUNDARY_TOL * max(1.0, z):
                continue
            vals = {blk.mu: mu}
            if mode is ConvexifyMode.CONTINUOUS:
                vals[blk.lam] = lam
            else:
                vals[blk.w[0]] = 1.0
            compared += 1
            if blk.feasible(vals) != (wt <= z):
                bad += 1
    return bad, compared
