"""Valid inequalities and lift-and-project cuts for the conic SSDP models.

Two families tighten the continuous relaxation:

* per-facility inequalities derived from the range ``[beta, beta']`` of the
  scaled variance ``mu**2 v(mu)`` over the admissible rates
  (:func:`add_valid_inequalities`);
* lift-and-project cuts: the fractional relaxation point is projected onto
  the convex hull of the relaxation with one (or two) binaries forced to
  ``{0, 1}``, which is described by perspective copies of the relaxation, and
  the separating hyperplane through the projection is added
  (:func:`build_lift_project_program`, :func:`generate_cut`).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import brentq

from .conic import AffineExpr, ConeProgram, lin
from .formulations import BuiltModel, FormulationKind
from .instance import FacilitySpec
from .socp import SolverOptions, SolverResult, solve_program

INT_TOL = 1e-6


# ---------------------------------------------------------------------------
# valid inequalities


def _g(deltas: Sequence[float], mu: float) -> float:
    return sum(d * d * mu ** (2 - 2 * l) for l, d in enumerate(deltas))


def _dg(deltas: Sequence[float], mu: float) -> float:
    return sum(d * d * (2 - 2 * l) * mu ** (1 - 2 * l) for l, d in enumerate(deltas))


def variance_scaled_extrema(fac: FacilitySpec, lam: Sequence[float]) -> tuple[float, float]:
    """Minimum and maximum of ``g(mu) = mu**2 v(mu)`` over ``[m', M]``.

    ``g`` is convex, so the minimum is the stationary point when it falls
    inside the interval and the maximum sits at an endpoint. With ``M``
    infinite, limits are used: ``g -> delta_1**2`` when ``delta_0 = 0`` and
    ``g -> inf`` otherwise.

    Raises:
        ValueError: ``m' = max(min lam, m)`` exceeds ``M``.
    """
    deltas = fac.variance.deltas
    lo = max(float(np.min(lam)), fac.m)
    hi = fac.M
    if lo > hi:
        raise ValueError(f"facility {fac.id}: empty rate interval [{lo}, {hi}]")
    tail = deltas[1] ** 2 if len(deltas) > 1 else 0.0
    g_hi = _g(deltas, hi) if math.isfinite(hi) else (math.inf if deltas[0] > 0 else tail)
    g_lo = _g(deltas, lo)
    beta_p = max(g_lo, g_hi)
    if _dg(deltas, lo) >= 0:
        beta = g_lo
    elif math.isfinite(hi) and _dg(deltas, hi) <= 0:
        beta = g_hi
    elif not math.isfinite(hi) and deltas[0] == 0:
        beta = tail
    else:
        right = hi
        if not math.isfinite(right):
            right = 2.0 * lo
            while _dg(deltas, right) < 0:
                right *= 2.0
        root = brentq(lambda m: _dg(deltas, m), lo, right, xtol=1e-14, rtol=4 * np.finfo(float).eps)
        beta = min(_g(deltas, root), g_lo, g_hi)
    return beta, beta_p


@dataclass(frozen=True)
class ViCoefficients:
    """Coefficients of the three per-facility inequalities.

    Infinite coefficients mean the corresponding row is not emitted.
    """

    beta: float
    beta_prime: float
    alpha: float
    alpha_prime: float
    alpha_double_prime: float

    @classmethod
    def from_extrema(cls, beta: float, beta_prime: float) -> "ViCoefficients":
        if beta < 0 or beta > beta_prime:
            raise ValueError("need 0 <= beta <= beta'")
        alpha = math.sqrt(2.0 * (1.0 + beta))
        if beta_prime == 0:
            alpha_p = math.inf
        elif math.isinf(beta_prime):
            alpha_p = math.sqrt(2.0)
        else:
            alpha_p = math.sqrt(2.0 * (1.0 + beta_prime) / beta_prime)
        return cls(beta, beta_prime, alpha, alpha_p, math.sqrt(beta_prime))


def vi_coefficients(fac: FacilitySpec, lam: Sequence[float]) -> ViCoefficients:
    return ViCoefficients.from_extrema(*variance_scaled_extrema(fac, lam))


def _wait_expr(bm: BuiltModel, i: int) -> AffineExpr:
    if bm.kind is FormulationKind.ALTERNATIVE:
        return lin([(bm.r[i], 1.0), (bm.s[i], 1.0)])
    return AffineExpr.var(bm.t[i])


def add_valid_inequalities(bm: BuiltModel) -> int:
    """Append the scaled-variance inequalities for every facility.

    Per facility, with ``W = sum_j lam_j u_ij`` and ``T`` the queueing
    epigraph (``t``, or ``r + s`` in the alternative model)::

        ||(alpha rho, 1 - rho - T)||   <= 1 - rho + T
        ||(alpha' W, 1 - rho - T)||    <= 1 - rho + T
        W <= alpha''

    Rows with an infinite coefficient are skipped. Facilities that cannot
    host any zone are skipped as well (their load is always zero).
    Returns the number of rows added.

    Raises:
        ValueError: the model has no ``sigma``/``u`` variables.
    """
    if bm.kind not in (FormulationKind.GENERAL, FormulationKind.ALTERNATIVE):
        raise ValueError(f"valid inequalities need the General or Alternative model, not {bm.kind.value}")
    p, lam = bm.program, bm.inst.lam
    added = 0
    for i, f in enumerate(bm.inst.facilities):
        try:
            co = vi_coefficients(f, lam)
        except ValueError:
            continue
        rho = bm.rho[i]
        T = _wait_expr(bm, i)
        W = lin((bm.u[i, j], lam[j]) for j in range(bm.inst.n_zones))
        diff = AffineExpr({rho: -1.0}, 1.0) - T
        head = AffineExpr({rho: -1.0}, 1.0) + T
        p.add_soc([AffineExpr.var(rho, co.alpha), diff], head, tag="vi")
        added += 1
        if math.isfinite(co.alpha_prime):
            p.add_soc([co.alpha_prime * W, diff.copy()], head.copy(), tag="vi")
            added += 1
        if math.isfinite(co.alpha_double_prime):
            p.add_linear(W, "<=", co.alpha_double_prime, tag="vi")
            added += 1
    return added


# ---------------------------------------------------------------------------
# lift-and-project


@dataclass(frozen=True)
class CutGenSettings:
    """Root-node enhancement settings.

    ``b_size`` is 0 (no cuts), 1 or 2 binaries per disjunction.
    """

    b_size: int = 0
    use_vi: bool = False
    max_rounds: int = 3
    violation_tol: float = 1e-6
    candidates: int = 4
    safety: float = 1e-7

    def __post_init__(self):
        if self.b_size not in (0, 1, 2):
            raise ValueError("b_size must be 0, 1 or 2")
        if self.max_rounds < 0 or self.candidates < 1:
            raise ValueError("max_rounds must be >= 0 and candidates >= 1")


SETTINGS: dict[str, CutGenSettings] = {
    "basic": CutGenSettings(0, False),
    "vi": CutGenSettings(0, True),
    "cut1": CutGenSettings(1, False),
    "vi-cut1": CutGenSettings(1, True),
    "cut2": CutGenSettings(2, False),
    "vi-cut2": CutGenSettings(2, True),
}


@dataclass(frozen=True)
class Cut:
    """Linear inequality ``coeffs @ z[ids] >= rhs``.

    ``rhs`` is exactly ``zhat @ (zhat - zbar)``; when the cut enters a model
    it is normalized and its right-hand side lowered by ``margin`` to absorb
    solver inaccuracy in ``zhat``.
    """

    ids: tuple[int, ...]
    coeffs: np.ndarray
    rhs: float
    margin: float = 0.0
    binaries: tuple[int, ...] = ()

    def lhs(self, point: np.ndarray) -> float:
        return float(self.coeffs @ np.asarray(point)[list(self.ids)])

    def violation(self, point: np.ndarray) -> float:
        """``rhs - lhs``; positive when the point is cut off."""
        return self.rhs - self.lhs(point)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.coeffs))

    def normalized(self) -> tuple[np.ndarray, float]:
        """Unit-norm coefficients and the safeguarded right-hand side."""
        nrm = self.norm
        return self.coeffs / nrm, self.rhs / nrm - self.margin

    def normalized_violation(self, point: np.ndarray) -> float:
        a, b = self.normalized()
        return b - float(a @ np.asarray(point)[list(self.ids)])


@dataclass
class LiftProgram:
    """Minimum-distance program over the disjunctive hull of the relaxation."""

    program: ConeProgram
    core: list[int]
    blocks: list[np.ndarray]
    weights: list[int]
    eta: int
    zbar: np.ndarray

    def projection(self, x: np.ndarray) -> np.ndarray:
        """``zhat``: the sum of the scaled copies on the core coordinates."""
        return sum(x[blk[self.core]] for blk in self.blocks)


def _scaled(e: AffineExpr, ids: np.ndarray, theta: int) -> AffineExpr:
    out = AffineExpr({int(ids[k]): v for k, v in e.coeffs.items()})
    if e.const:
        out = out + AffineExpr.var(theta, e.const)
    return out


def build_lift_project_program(
    bm: BuiltModel, zbar: np.ndarray, B: Sequence[int], direction: np.ndarray | None = None
) -> LiftProgram:
    """Program whose optimum is the projection of ``zbar`` onto the hull.

    One perspective copy of every relaxation row is made per 0/1 pattern of
    the binaries in ``B`` (two copies for one binary, four for two). Copy
    ``c`` carries a weight ``theta_c >= 0`` with ``sum theta = 1``; constants
    are multiplied by ``theta_c``, bounds become ``lb theta_c <= v <= ub
    theta_c`` and the binaries of ``B`` are anchored at ``0`` or
    ``theta_c``. The objective is the Euclidean distance between the summed
    copies and ``zbar`` on the core coordinates.

    Args:
        bm: model whose program (including any rows added so far) defines the
            relaxation.
        zbar: full relaxation point in the program's variable space.
        B: one or two binary variable ids.
        direction: when given, minimize ``direction @ z`` over the hull
            instead of the distance (used to certify a cut's right-hand side).

    Raises:
        ValueError: ``B`` is empty, too large, or names a continuous variable.
    """
    src = bm.program
    B = [int(k) for k in B]
    if not 1 <= len(B) <= 2 or len(set(B)) != len(B):
        raise ValueError("B must hold one or two distinct binaries")
    for k in B:
        if not src.variables[k].integer:
            raise ValueError(f"variable {src.variables[k].name} is not binary")
    zbar = np.asarray(zbar, dtype=float)
    core = bm.core_ids()
    lp = ConeProgram("lift")
    blocks, weights = [], []
    patterns = list(itertools.product((0, 1), repeat=len(B)))
    for c, pat in enumerate(patterns):
        theta = lp.add_var(f"theta[{c}]", 0.0, 1.0)
        weights.append(theta)
        ids = np.empty(src.n_vars, dtype=int)
        for k, v in enumerate(src.variables):
            lb = 0.0 if v.lb == 0 else -math.inf
            ids[k] = lp.add_var(f"c{c}.{v.name}", lb, math.inf)
            if v.lb != 0 and math.isfinite(v.lb):
                lp.add_linear(AffineExpr({ids[k]: 1.0, theta: -v.lb}), ">=", 0.0, tag="lift:bound")
            if math.isfinite(v.ub):
                lp.add_linear(AffineExpr({ids[k]: 1.0, theta: -v.ub}), "<=", 0.0, tag="lift:bound")
        for row in src.linear:
            lp.add_linear(_scaled(row.expr, ids, theta), row.sense, 0.0, tag="lift:" + row.tag)
        for row in src.socs:
            lp.add_soc([_scaled(e, ids, theta) for e in row.body], _scaled(row.head, ids, theta), tag="lift:" + row.tag)
        for k, bit in zip(B, pat):
            rhs = AffineExpr.var(theta) if bit else 0.0
            lp.add_linear(AffineExpr.var(int(ids[k])), "==", rhs, tag="lift:anchor")
        blocks.append(ids)
    lp.add_linear(lin((t, 1.0) for t in weights), "==", 1.0, tag="lift:convex")
    if direction is not None:
        lp.set_objective(lin((int(blk[k]), float(a)) for blk in blocks for k, a in zip(core, direction)))
        return LiftProgram(lp, core, blocks, weights, -1, zbar[core])
    eta = lp.add_var("eta", 0.0)
    body = [lin((int(blk[k]), 1.0) for blk in blocks) - float(zbar[k]) for k in core]
    lp.add_soc(body, eta, tag="lift:distance")
    lp.set_objective(AffineExpr.var(eta))
    return LiftProgram(lp, core, blocks, weights, eta, zbar[core])


def generate_cut(
    zhat: np.ndarray,
    zbar: np.ndarray,
    ids: Sequence[int] | None = None,
    violation_tol: float = 1e-6,
    safety: float = 0.0,
    binaries: Sequence[int] = (),
) -> Cut | None:
    """Separating hyperplane ``(zhat - zbar) @ z >= zhat @ (zhat - zbar)``.

    ``zhat`` and ``zbar`` are core-coordinate vectors; ``ids`` names their
    program variables (defaults to ``range(len(zhat))``). Returns ``None`` when
    the two points are within ``violation_tol``.

    Raises:
        ValueError: the vectors differ in length.
    """
    zhat = np.asarray(zhat, dtype=float)
    zbar = np.asarray(zbar, dtype=float)
    if zhat.shape != zbar.shape:
        raise ValueError("zhat and zbar must have the same dimension")
    ids = tuple(range(zhat.size)) if ids is None else tuple(int(k) for k in ids)
    if len(ids) != zhat.size:
        raise ValueError("ids must match the point dimension")
    a = zhat - zbar
    if np.linalg.norm(a) <= violation_tol:
        return None
    margin = safety * (1.0 + float(np.max(np.abs(zhat)))) if zhat.size else 0.0
    return Cut(ids, a, float(zhat @ a), margin, tuple(binaries))


def add_cut(bm: BuiltModel, cut: Cut) -> None:
    a, b = cut.normalized()
    bm.program.add_linear(lin(zip(cut.ids, a)), ">=", b, tag="cut")


def fractional_binaries(bm: BuiltModel, point: np.ndarray, tol: float = INT_TOL) -> list[int]:
    """Binaries with fractional value, most fractional first (ties by id order)."""
    out = []
    for pos, k in enumerate(bm.binaries):
        f = min(point[k], 1.0 - point[k])
        if f > tol:
            out.append((-round(f, 12), pos, k))
    return [k for _, _, k in sorted(out)]


def candidate_sets(bm: BuiltModel, point: np.ndarray, settings: CutGenSettings) -> list[tuple[int, ...]]:
    frac = fractional_binaries(bm, point)
    if settings.b_size == 1:
        return [(k,) for k in frac[: settings.candidates]]
    if settings.b_size == 2:
        pairs = [tuple(frac[i : i + 2]) for i in range(0, len(frac) - 1, 2)]
        if len(frac) % 2 == 1 and len(frac) > 1:
            pairs.append((frac[-1], frac[0]))
        elif len(frac) == 1:
            pairs.append((frac[0],))
        return pairs[: settings.candidates]
    return []


def separate(
    bm: BuiltModel,
    point: np.ndarray,
    B: Sequence[int],
    settings: CutGenSettings,
    opts: SolverOptions | None = None,
) -> Cut | None:
    """Solve one minimum-distance program and return its cut, if any."""
    lift = build_lift_project_program(bm, point, B)
    res = solve_program(lift.program, opts=opts)
    if not res.usable:
        return None
    zhat = lift.projection(res.x)
    cut = generate_cut(zhat, lift.zbar, lift.core, settings.violation_tol, settings.safety, tuple(B))
    if cut is None:
        return None
    # The projection is only approximate, so the hyperplane through it need
    # not support the hull; lower the right-hand side to a certified minimum.
    a, b = cut.normalized()
    check = solve_program(build_lift_project_program(bm, point, B, direction=a).program, opts=opts)
    if not check.usable:
        return None
    floor = check.bound - settings.safety * (1.0 + abs(check.bound))
    if floor < b:
        cut = Cut(cut.ids, cut.coeffs, cut.rhs, cut.margin + (b - floor), cut.binaries)
    if cut.normalized_violation(point) <= settings.violation_tol:
        return None
    return cut


@dataclass
class RootLoopResult:
    cuts: list[Cut] = field(default_factory=list)
    rounds: int = 0
    bounds: list[float] = field(default_factory=list)
    result: SolverResult | None = None


def root_cut_loop(
    bm: BuiltModel,
    settings: CutGenSettings,
    opts: SolverOptions | None = None,
    fixings: dict[int, float] | None = None,
    deadline: float | None = None,
    clock=None,
) -> RootLoopResult:
    """Alternate relaxation solves and cut rounds until no cut is found.

    Cuts are appended to ``bm.program``. ``result`` holds the last
    relaxation solve (after the final round's cuts).
    """
    out = RootLoopResult()
    res = solve_program(bm.program, fixings, opts)
    out.result = res
    if res.usable:
        out.bounds.append(res.bound)
    if settings.b_size == 0:
        return out
    while out.rounds < settings.max_rounds and res.usable:
        if deadline is not None and clock() >= deadline:
            break
        point = res.x
        new = []
        for B in candidate_sets(bm, point, settings):
            if deadline is not None and clock() >= deadline:
                break
            cut = separate(bm, point, B, settings, opts)
            if cut is not None:
                new.append(cut)
        if not new:
            break
        for cut in new:
            add_cut(bm, cut)
        out.cuts += new
        out.rounds += 1
        res = solve_program(bm.program, fixings, opts)
        out.result = res
        if res.usable:
            out.bounds.append(res.bound)
    return out
