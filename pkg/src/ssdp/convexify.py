"""Standalone conic encodings of M/G/1 waiting-time bounds.

Each builder appends rows to a :class:`~ssdp.conic.ConeProgram` that hold at a
point exactly when the total (or individual) expected waiting time is at most
a bound ``z``. Arrival rates enter either as a selection ``sum_i lam_i w_i``
with binary ``w`` or, in restricted variance models, as a continuous
variable ``lam``.

Every block can be completed from the decision values alone
(:meth:`WaitBlock.complete`), which gives a direct feasibility test through
:func:`~ssdp.conic.evaluate_point`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np

from .conic import AffineExpr, ConeProgram, PowerTower, add_hyperbolic, add_power_tower, as_expr, evaluate_point, lin
from .queueing import LocationScaleSpec, variance_of


class ConvexifyMode(str, Enum):
    BINARY = "binary-selection"
    CONTINUOUS = "continuous"


class NotRepresentable(ValueError):
    """The requested bound has no convex (or no SOC) encoding in this mode."""


@dataclass
class WaitBlock:
    """Rows and variable ids of one waiting-time bound.

    ``w`` holds the selection binaries (binary mode); ``lam`` the arrival-rate
    variable (continuous mode, else ``-1``). ``aux`` maps auxiliary names to
    ids; ``lambdas`` are the selectable rates.
    """

    program: ConeProgram
    kind: str
    mode: ConvexifyMode
    lambdas: np.ndarray
    mu: int
    z: AffineExpr
    w: list[int] = field(default_factory=list)
    lam: int = -1
    aux: dict[str, int] = field(default_factory=dict)
    u: list[int] = field(default_factory=list)
    spec: LocationScaleSpec | None = None
    affine: tuple[float, float] | None = None
    tower: list[PowerTower] = field(default_factory=list)

    def _rate(self, values: dict[int, float]) -> float:
        if self.mode is ConvexifyMode.CONTINUOUS:
            return values[self.lam]
        return float(sum(l * values[k] for l, k in zip(self.lambdas, self.w)))

    def complete(self, values: dict[int, float]) -> dict[int, float]:
        """Extend decision values (``w`` or ``lam``, ``mu``, and any variables of
        ``z``) with the smallest auxiliaries the rows allow."""
        pt = dict(values)
        lam = self._rate(pt)
        mu = pt[self.mu]
        rho = lam / mu if mu > 0 else 0.0
        gap = mu - lam
        a = self.aux

        def frac(num: float, den: float) -> float:
            if num == 0:
                return 0.0
            return num / den if den > 0 else math.inf

        if "rho" in a:
            pt[a["rho"]] = min(rho, 1.0)
        sigma = 0.0
        if "sigma" in a:
            g = 1.0 if lam > 0 else 0.0
            pt[a["g"]] = g
            zr = frac(g, mu) if g else 0.0
            pt[a["zr"]] = zr
            powers = [1.0, zr] + [zr**l for l in range(2, len(self.spec.deltas))]
            for l in range(2, len(self.spec.deltas)):
                pt[a[f"zbar{l}"]] = powers[l]
            for tw in self.tower:
                pt.update(tw.complete(pt))
            sigma = math.sqrt(sum((d * p) ** 2 for d, p in zip(self.spec.deltas, powers)))
            pt[a["sigma"]] = sigma
            for k, wk in zip(self.u, self.w):
                pt[k] = sigma * pt[wk]
        if self.kind == "total":
            if self.mode is ConvexifyMode.CONTINUOUS:
                b = self.affine[1]
                pt[a["q"]] = frac(lam * lam * (1 + b), 2 * gap)
            elif self.affine is not None:
                aa, b = self.affine
                pt[a["t"]] = frac(rho * rho * (1 + b) + aa * lam * lam, 2 * (1 - rho))
            else:
                load = sum(l * pt[k] for l, k in zip(self.lambdas, self.u))
                pt[a["t"]] = frac(rho * rho + load * load, 2 * (1 - rho))
        else:
            if self.affine is not None:
                aa, b = self.affine
                pt[a["p1"]] = frac(1 + b, 2 * gap)
                if "p2" in a:
                    pt[a["p2"]] = frac(aa * lam, 2 * (1 - rho))
                pt[a["p3"]] = frac(1 - b, 2 * mu)
            else:
                pt[a["p1"]] = frac(1.0, 2 * gap)
                pt[a["p2"]] = frac(lam * sigma * sigma, 2 * (1 - rho))
                pt[a["p3"]] = frac(1.0, 2 * mu)
        return pt

    def feasible(self, values: dict[int, float], tol: float = 1e-8) -> bool:
        """Whether the decision values admit auxiliaries satisfying every row."""
        pt = self.complete(values)
        if any(not math.isfinite(v) for v in pt.values()):
            return False
        full = np.zeros(self.program.n_vars)
        for k, v in pt.items():
            full[k] = v
        rep = evaluate_point(self.program, full, tol=tol)
        return rep.max_violation <= tol


def _split_variance(variance) -> tuple[LocationScaleSpec, tuple[float, float] | None]:
    if isinstance(variance, LocationScaleSpec):
        aff = variance.affine_coefficients() if variance.degree <= 1 else None
        return variance, aff
    a, b = (float(v) for v in variance)
    if a < 0 or b < 0:
        raise ValueError("variance coefficients must be nonnegative")
    return LocationScaleSpec((math.sqrt(a), math.sqrt(b))), (a, b)


def _selection(p: ConeProgram, blk: WaitBlock, prefix: str) -> AffineExpr:
    blk.w = [p.add_binary(f"{prefix}.w[{i}]") for i in range(len(blk.lambdas))]
    load = lin(zip(blk.w, blk.lambdas))
    p.add_linear(load, "<=", blk.mu, tag="wt:steady")
    return load


def _utilization(p: ConeProgram, blk: WaitBlock, prefix: str) -> int:
    rho = blk.aux["rho"] = p.add_var(f"{prefix}.rho", 0.0, 1.0)
    body = [AffineExpr.var(w, 2.0 * math.sqrt(l)) for w, l in zip(blk.w, blk.lambdas)]
    body.append(AffineExpr({rho: 1.0, blk.mu: -1.0}))
    p.add_soc(body, AffineExpr({rho: 1.0, blk.mu: 1.0}), tag="wt:util")
    return rho


def _sigma_block(p: ConeProgram, blk: WaitBlock, prefix: str) -> None:
    """``sigma >= sqrt(v(mu))`` gated on any selection, and ``u_i = sigma w_i``."""
    spec = blk.spec
    a = blk.aux
    m_low = float(np.min(blk.lambdas))
    sup_v = variance_of(spec, m_low)
    Q = max(sup_v, math.sqrt(sup_v)) * 1.001
    g = a["g"] = p.add_var(f"{prefix}.g", 0.0, 1.0)
    for w in blk.w:
        p.add_linear(w, "<=", g, tag="wt:gate")
    sig = a["sigma"] = p.add_var(f"{prefix}.sigma", 0.0, Q)
    zr = a["zr"] = p.add_var(f"{prefix}.zr", 0.0)
    add_hyperbolic(p, g, zr, blk.mu, tag="wt:recip")
    body = [AffineExpr.constant(spec.deltas[0])]
    if spec.degree >= 1:
        body.append(AffineExpr.var(zr, spec.deltas[1]))
    for l in range(2, spec.degree + 1):
        zb = a[f"zbar{l}"] = p.add_var(f"{prefix}.zbar[{l}]", 0.0)
        blk.tower.append(add_power_tower(p, zr, zb, l))
        body.append(AffineExpr.var(zb, spec.deltas[l]))
    p.add_soc(body, sig, tag="wt:variance")
    for i, w in enumerate(blk.w):
        u = p.add_var(f"{prefix}.u[{i}]", 0.0)
        blk.u.append(u)
        p.add_linear(AffineExpr({sig: 1.0, w: Q, u: -1.0}), "<=", Q, tag="wt:bigM")
        p.add_linear(u, "<=", sig, tag="wt:bigM")
        p.add_linear(AffineExpr({u: 1.0, w: -Q}), "<=", 0.0, tag="wt:bigM")


def _prepare(lambdas, mode, z, program, prefix):
    lambdas = np.asarray(lambdas, dtype=float).ravel()
    mode = ConvexifyMode(mode)
    if mode is ConvexifyMode.BINARY and (lambdas.size == 0 or np.any(lambdas <= 0)):
        raise ValueError("binary selection needs positive arrival rates")
    p = program if program is not None else ConeProgram(prefix)
    if isinstance(z, str):
        z = p.add_var(z, 0.0)
    return lambdas, mode, p, as_expr(z)


def convexify_total_wt(
    lambdas: Sequence[float],
    mode: ConvexifyMode | str,
    variance,
    z,
    program: ConeProgram | None = None,
    prefix: str = "wtT",
) -> WaitBlock:
    """Rows enforcing ``WT_T(lam, mu) <= z``.

    Args:
        lambdas: selectable arrival rates (binary mode); ignored in
            continuous mode, where ``lam`` is a fresh variable.
        mode: ``"binary-selection"`` or ``"continuous"``.
        variance: ``(a, b)`` for ``v = a + b / mu**2`` or a
            :class:`LocationScaleSpec`.
        z: bound as a number, variable id, expression, or a name for a new
            nonnegative variable.
        program: program to extend; a fresh one when omitted.

    Raises:
        NotRepresentable: continuous mode with ``a > 0`` or a non-constant
            bound.
    """
    lambdas, mode, p, zexpr = _prepare(lambdas, mode, z, program, prefix)
    spec, aff = _split_variance(variance)
    mu = p.add_var(f"{prefix}.mu", 0.0)
    blk = WaitBlock(p, "total", mode, lambdas, mu, zexpr, spec=spec, affine=aff)
    if mode is ConvexifyMode.CONTINUOUS:
        if aff is None or aff[0] > 0:
            raise NotRepresentable("continuous arrival rates need variance b / mu**2")
        if not zexpr.is_constant:
            raise NotRepresentable("continuous arrival rates need a constant bound")
        c, b = zexpr.const, aff[1]
        lam = blk.lam = p.add_var(f"{prefix}.lam", 0.0)
        q = blk.aux["q"] = p.add_var(f"{prefix}.q", 0.0)
        p.add_linear(lam, "<=", mu, tag="wt:steady")
        # (1 + b) lam**2 <= 2 q (mu - lam)
        add_hyperbolic(p, AffineExpr.var(lam, math.sqrt(1 + b)), AffineExpr.var(q, 2.0), AffineExpr({mu: 1.0, lam: -1.0}), tag="wt:queue")
        p.add_linear(AffineExpr({q: 1.0, lam: 1.0, mu: -c}), "<=", 0.0, tag="wt:bound")
        return blk
    load = _selection(p, blk, prefix)
    rho = _utilization(p, blk, prefix)
    t = blk.aux["t"] = p.add_var(f"{prefix}.t", 0.0)
    if aff is not None:
        a, b = aff
        terms = [AffineExpr.var(rho, 2.0 * math.sqrt(1 + b)), 2.0 * math.sqrt(a) * load]
    else:
        _sigma_block(p, blk, prefix)
        terms = [AffineExpr.var(rho, 2.0), 2.0 * lin(zip(blk.u, lambdas))]
    terms.append(AffineExpr({rho: -2.0, t: -1.0}, 2.0))
    p.add_soc(terms, AffineExpr({rho: -2.0, t: 1.0}, 2.0), tag="wt:queue")
    p.add_linear(AffineExpr({t: 1.0, rho: 1.0}), "<=", zexpr, tag="wt:bound")
    return blk


def convexify_individual_wt(
    lambdas: Sequence[float],
    mode: ConvexifyMode | str,
    variance,
    z,
    program: ConeProgram | None = None,
    prefix: str = "wtI",
) -> WaitBlock:
    """Rows enforcing ``WT_I(lam, mu) <= z``.

    The bound is split as
    ``1/(2(mu-lam)) + lam v/(2(1-rho)) + 1/(2 mu)``, or for ``v = a + b/mu**2``
    as ``(1+b)/(2(mu-lam)) + a lam/(2(1-rho)) + (1-b)/(2 mu)``; each term gets
    an epigraph variable and a hyperbolic row. The affine split is used only
    when ``b <= 1``, where every term is convex.

    Raises:
        NotRepresentable: continuous mode with ``b > 1`` (not convex) or
            ``a > 0`` (convex but not SOC-representable).
    """
    lambdas, mode, p, zexpr = _prepare(lambdas, mode, z, program, prefix)
    spec, aff = _split_variance(variance)
    mu = p.add_var(f"{prefix}.mu", 0.0)
    if aff is not None and aff[1] > 1:
        if mode is ConvexifyMode.CONTINUOUS:
            raise NotRepresentable("individual waiting time is not convex in (lam, mu) when b > 1")
        aff = None
    blk = WaitBlock(p, "individual", mode, lambdas, mu, zexpr, spec=spec, affine=aff)
    a_ = blk.aux
    p1 = a_["p1"] = p.add_var(f"{prefix}.p1", 0.0)
    p3 = a_["p3"] = p.add_var(f"{prefix}.p3", 0.0)
    if mode is ConvexifyMode.CONTINUOUS:
        if aff is None:
            raise NotRepresentable("continuous arrival rates need variance a + b / mu**2")
        if aff[0] > 0:
            raise NotRepresentable("the term a lam mu / (2 (mu - lam)) is not SOC-representable")
        lam = blk.lam = p.add_var(f"{prefix}.lam", 0.0)
        p.add_linear(lam, "<=", mu, tag="wt:steady")
        gap = AffineExpr({mu: 1.0, lam: -1.0})
        extra: list[int] = []
    else:
        load = _selection(p, blk, prefix)
        rho = _utilization(p, blk, prefix)
        gap = AffineExpr.var(mu) - load
        p2 = a_["p2"] = p.add_var(f"{prefix}.p2", 0.0)
        extra = [p2]
        one_minus_rho = AffineExpr({rho: -1.0}, 1.0)
        if aff is not None:
            # a * sum lam_i w_i**2 <= 2 p2 (1 - rho)
            body = [AffineExpr.var(w, 2.0 * math.sqrt(aff[0] * l)) for w, l in zip(blk.w, lambdas)]
        else:
            _sigma_block(p, blk, prefix)
            body = [AffineExpr.var(u, 2.0 * math.sqrt(l)) for u, l in zip(blk.u, lambdas)]
        body.append(AffineExpr.var(p2, 2.0) - one_minus_rho)
        p.add_soc(body, AffineExpr.var(p2, 2.0) + one_minus_rho, tag="wt:queue")
    c1, c3 = (1 + aff[1], 1 - aff[1]) if aff is not None else (1.0, 1.0)
    add_hyperbolic(p, AffineExpr.constant(math.sqrt(c1)), AffineExpr.var(p1, 2.0), gap, tag="wt:queue")
    add_hyperbolic(p, AffineExpr.constant(math.sqrt(c3)), AffineExpr.var(p3, 2.0), AffineExpr.var(mu), tag="wt:service")
    p.add_linear(lin([(p1, 1.0), (p3, 1.0)] + [(k, 1.0) for k in extra]), "<=", zexpr, tag="wt:bound")
    return blk
