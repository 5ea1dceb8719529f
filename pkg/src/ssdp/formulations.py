"""Conic models of the service-system design problem.

Four model families are built from an :class:`~ssdp.instance.Instance`:

* ``GENERAL``: any location-scale variance, with a per-facility standard
  deviation variable ``sigma``, its products ``u = sigma * y`` linearized by a
  big-M ``Q`` and power towers for the higher variance terms;
* ``AFFINE``: variance ``a + b / mu**2`` folded straight into one cone row;
* ``CONSTANT_MM1``: exponential service without rate bounds, where the
  optimal rate has a closed form and only a square-root cost remains;
* ``ALTERNATIVE``: the general model with the queueing term split over two
  epigraph variables per facility.

In every family the continuous auxiliaries are relaxations whose minimal
values reproduce the exact cost, so the integer optimum equals the true one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .conic import AffineExpr, ConeProgram, PowerTower, add_hyperbolic, add_power_tower, add_sqrt_mixed, lin
from .convexify import ConvexifyMode, NotRepresentable, WaitBlock, convexify_individual_wt, convexify_total_wt  # noqa: F401
from .instance import FacilitySpec, Instance, InstanceError, validate
from .queueing import INF, variance_of, wt_total
from .solution import CostBreakdown, Solution

Q_MARGIN = 1e-3


class FormulationKind(str, Enum):
    GENERAL = "General"
    AFFINE = "Affine"
    CONSTANT_MM1 = "ConstantMM1"
    ALTERNATIVE = "AlternativeAppendixC"

    @classmethod
    def parse(cls, text: str) -> "FormulationKind":
        key = text.strip().lower()
        aliases = {
            "general": cls.GENERAL,
            "affine": cls.AFFINE,
            "mm1": cls.CONSTANT_MM1,
            "constantmm1": cls.CONSTANT_MM1,
            "constant": cls.CONSTANT_MM1,
            "alt": cls.ALTERNATIVE,
            "alternative": cls.ALTERNATIVE,
            "alternativeappendixc": cls.ALTERNATIVE,
        }
        if key not in aliases:
            raise ValueError(f"unknown formulation {text!r}")
        return aliases[key]


class PreconditionError(InstanceError):
    """The instance does not satisfy a formulation's requirements."""


@dataclass
class BuiltModel:
    """A conic program together with the variable ids of every model symbol.

    Arrays hold program variable ids, ``-1`` where a symbol does not exist in
    this formulation. ``y`` and ``u`` are ``(n_facilities, n_zones)``;
    ``zbar`` is ``(n_facilities, max_degree + 1)`` with columns ``l >= 2`` used.
    """

    program: ConeProgram
    kind: FormulationKind
    inst: Instance
    x: np.ndarray
    y: np.ndarray
    mu: np.ndarray
    rho: np.ndarray
    sigma: np.ndarray
    u: np.ndarray
    t: np.ndarray
    z: np.ndarray
    zbar: np.ndarray
    r: np.ndarray
    s: np.ndarray
    Q: np.ndarray
    m_prime: np.ndarray
    towers: list[list[PowerTower]] = field(default_factory=list)
    closest_assignment: bool = False

    @property
    def binaries(self) -> list[int]:
        """Binary variable ids, every ``x`` before every ``y`` (row-major)."""
        return [int(k) for k in self.x] + [int(k) for k in self.y.ravel()]

    def core_ids(self) -> list[int]:
        """Ids of the lifted coordinates ``(x, y, mu, rho, sigma, u, t)``.

        Symbols absent from the formulation are skipped; the alternative
        model contributes ``r`` and ``s`` in place of ``t`` and the constant
        case contributes ``r``.
        """
        out: list[int] = []
        parts = [self.x, self.y.ravel(), self.mu, self.rho, self.sigma, self.u.ravel(), self.t, self.r, self.s]
        for arr in parts:
            out += [int(k) for k in np.ravel(arr) if k >= 0]
        return out


def _ids(shape) -> np.ndarray:
    return np.full(shape, -1, dtype=int)


def effective_min_rate(fac: FacilitySpec, lam: np.ndarray) -> float:
    """``max(min lambda, m)``, clipped to ``M``: the least rate of a serving facility."""
    return min(max(float(np.min(lam)), fac.m), fac.M)


def compute_Q(fac: FacilitySpec, lam: np.ndarray) -> float:
    """Big-M for ``u = sigma * y``.

    ``sigma`` can reach ``sqrt(sup v)``, which exceeds ``sup v`` when the
    variance is below one, so the bound covers both with a small margin.
    """
    mp = effective_min_rate(fac, lam)
    if mp <= 0:
        raise ValueError(f"facility {fac.id}: effective minimum rate is zero, variance unbounded")
    sup_v = variance_of(fac.variance, mp)
    if not math.isfinite(sup_v):
        raise ValueError(f"facility {fac.id}: variance is unbounded on the rate interval")
    return max(sup_v, math.sqrt(sup_v)) * (1.0 + Q_MARGIN)


def _check(inst: Instance) -> None:
    problems = validate(inst)
    if problems:
        raise InstanceError(problems)


def _shell(inst: Instance, kind: FormulationKind, with_rate: bool = True) -> BuiltModel:
    """Binaries, optional rate variables and rows shared by every formulation."""
    nI, nJ = inst.n_facilities, inst.n_zones
    lam = inst.lam
    p = ConeProgram(kind.value)
    x = np.array([p.add_binary(f"x[{i}]") for i in range(nI)])
    y = np.array([[p.add_binary(f"y[{i},{j}]") for j in range(nJ)] for i in range(nI)])
    mu = _ids(nI)
    for j in range(nJ):
        p.add_linear(lin((y[i, j], 1.0) for i in range(nI)), "==", 1.0, tag="assign")
    for i in range(nI):
        for j in range(nJ):
            p.add_linear(AffineExpr({y[i, j]: 1.0, x[i]: -1.0}), "<=", 0.0, tag="link")
    if with_rate:
        for i, f in enumerate(inst.facilities):
            mu[i] = p.add_var(f"mu[{i}]", 0.0, f.M)
            p.add_linear(lin([(y[i, j], lam[j]) for j in range(nJ)] + [(mu[i], -1.0)]), "<=", 0.0, tag="steady")
            if f.m > 0:
                p.add_linear(AffineExpr({x[i]: f.m, mu[i]: -1.0}), "<=", 0.0, tag="rate_lo")
            if math.isfinite(f.M):
                p.add_linear(AffineExpr({mu[i]: 1.0, x[i]: -f.M}), "<=", 0.0, tag="rate_hi")
    mp = np.array([effective_min_rate(f, lam) for f in inst.facilities])
    return BuiltModel(
        program=p, kind=kind, inst=inst, x=x, y=y, mu=mu,
        rho=_ids(nI), sigma=_ids(nI), u=_ids((nI, nJ)), t=_ids(nI), z=_ids(nI),
        zbar=_ids((nI, 1)), r=_ids(nI), s=_ids(nI), Q=np.zeros(nI), m_prime=mp,
    )


def _add_utilization(bm: BuiltModel) -> None:
    """``rho`` with ``sum_j lambda_j y_ij**2 <= rho_i mu_i``."""
    p, lam = bm.program, bm.inst.lam
    for i in range(bm.inst.n_facilities):
        bm.rho[i] = p.add_var(f"rho[{i}]", 0.0, 1.0)
        body = [AffineExpr.var(bm.y[i, j], 2.0 * math.sqrt(lam[j])) for j in range(bm.inst.n_zones)]
        body.append(AffineExpr({bm.rho[i]: 1.0, bm.mu[i]: -1.0}))
        p.add_soc(body, AffineExpr({bm.rho[i]: 1.0, bm.mu[i]: 1.0}), tag="util")


def _add_sigma_block(bm: BuiltModel) -> None:
    """Standard deviation bound, products ``u = sigma y`` and reciprocal rate."""
    p, inst = bm.program, bm.inst
    lam = inst.lam
    L = max(f.variance.degree for f in inst.facilities)
    bm.zbar = _ids((inst.n_facilities, L + 1))
    bm.towers = [[] for _ in range(inst.n_facilities)]
    for i, f in enumerate(inst.facilities):
        Q = compute_Q(f, lam)
        bm.Q[i] = Q
        mp = bm.m_prime[i]
        deltas = f.variance.deltas
        sig = bm.sigma[i] = p.add_var(f"sigma[{i}]", 0.0, Q)
        body = [AffineExpr.constant(deltas[0])]
        if f.variance.degree >= 1:
            z = bm.z[i] = p.add_var(f"z[{i}]", 0.0)
            add_hyperbolic(p, bm.x[i], z, bm.mu[i], tag="recip")
            p.add_linear(AffineExpr({z: 1.0, bm.x[i]: -1.0 / mp}), "<=", 0.0, tag="recip_ub")
            body.append(AffineExpr.var(z, deltas[1]))
            for l in range(2, f.variance.degree + 1):
                zb = bm.zbar[i, l] = p.add_var(f"zbar[{i},{l}]", 0.0)
                p.add_linear(AffineExpr({zb: 1.0, bm.x[i]: -(mp ** -l)}), "<=", 0.0, tag="recip_ub")
                bm.towers[i].append(add_power_tower(p, z, zb, l))
                body.append(AffineExpr.var(zb, deltas[l]))
        p.add_soc(body, sig, tag="variance")
        for j in range(inst.n_zones):
            u = bm.u[i, j] = p.add_var(f"u[{i},{j}]", 0.0)
            y = bm.y[i, j]
            p.add_linear(AffineExpr({sig: 1.0, y: Q, u: -1.0}), "<=", Q, tag="bigM")  # sigma - (1-y)Q <= u
            p.add_linear(AffineExpr({u: 1.0, sig: -1.0}), "<=", 0.0, tag="bigM")
            p.add_linear(AffineExpr({u: 1.0, y: -Q}), "<=", 0.0, tag="bigM")


def _wait_row(p: ConeProgram, rho: int, t: int, terms: list[AffineExpr], tag: str) -> None:
    """``rho**2 + sum(term**2) <= 2 (1 - rho) t`` as one cone row."""
    body = [AffineExpr.var(rho, 2.0)] + [2.0 * e for e in terms]
    body.append(AffineExpr({rho: -2.0, t: -1.0}, 2.0))
    p.add_soc(body, AffineExpr({rho: -2.0, t: 1.0}, 2.0), tag=tag)


def _objective(bm: BuiltModel, wait: dict[int, list[int]]) -> None:
    inst, lam = bm.inst, bm.inst.lam
    terms: dict[int, float] = {}

    def add(k, v):
        terms[int(k)] = terms.get(int(k), 0.0) + v

    for i, f in enumerate(inst.facilities):
        add(bm.x[i], f.ec)
        if bm.mu[i] >= 0:
            add(bm.mu[i], f.sc)
        for k in wait.get(i, []):
            add(k, f.wc)
        for j in range(inst.n_zones):
            add(bm.y[i, j], inst.tc[i, j] * lam[j])
    bm.program.set_objective(AffineExpr(terms))


def build_general(inst: Instance) -> BuiltModel:
    _check(inst)
    bm = _shell(inst, FormulationKind.GENERAL)
    _add_utilization(bm)
    p, lam = bm.program, inst.lam
    _add_sigma_block(bm)
    for i in range(inst.n_facilities):
        bm.t[i] = p.add_var(f"t[{i}]", 0.0)
        load = lin((bm.u[i, j], lam[j]) for j in range(inst.n_zones))
        _wait_row(p, bm.rho[i], bm.t[i], [load], tag="wait")
    _objective(bm, {i: [bm.t[i], bm.rho[i]] for i in range(inst.n_facilities)})
    return bm


def build_alternative(inst: Instance) -> BuiltModel:
    _check(inst)
    bm = _shell(inst, FormulationKind.ALTERNATIVE)
    _add_utilization(bm)
    p, lam = bm.program, inst.lam
    _add_sigma_block(bm)
    for i in range(inst.n_facilities):
        bm.r[i] = p.add_var(f"r[{i}]", 0.0)
        bm.s[i] = p.add_var(f"s[{i}]", 0.0)
        rho = bm.rho[i]
        load = lin((bm.u[i, j], lam[j]) for j in range(inst.n_zones))
        for var, lhs in ((bm.r[i], AffineExpr.var(rho)), (bm.s[i], load)):
            p.add_soc(
                [2.0 * lhs, AffineExpr({rho: -2.0, var: -1.0}, 2.0)],
                AffineExpr({rho: -2.0, var: 1.0}, 2.0),
                tag="wait_split",
            )
    _objective(bm, {i: [bm.r[i], bm.s[i], bm.rho[i]] for i in range(inst.n_facilities)})
    return bm


def build_affine(inst: Instance) -> BuiltModel:
    _check(inst)
    bad = [f.id for f in inst.facilities if f.variance.degree > 1]
    if bad:
        raise PreconditionError([f"facility {i}: affine model needs at most two variance terms" for i in bad])
    bm = _shell(inst, FormulationKind.AFFINE)
    _add_utilization(bm)
    p, lam = bm.program, inst.lam
    for i, f in enumerate(inst.facilities):
        a, b = f.variance.affine_coefficients()
        bm.t[i] = p.add_var(f"t[{i}]", 0.0)
        rho = bm.rho[i]
        load = lin((bm.y[i, j], math.sqrt(a) * lam[j]) for j in range(inst.n_zones))
        body = [AffineExpr.var(rho, 2.0 * math.sqrt(1.0 + b)), 2.0 * load, AffineExpr({rho: -2.0, bm.t[i]: -1.0}, 2.0)]
        p.add_soc(body, AffineExpr({rho: -2.0, bm.t[i]: 1.0}, 2.0), tag="wait")
    _objective(bm, {i: [bm.t[i], bm.rho[i]] for i in range(inst.n_facilities)})
    return bm


def is_constant_case(f: FacilitySpec) -> bool:
    return f.variance.deltas == (0.0, 1.0) and f.m == 0 and math.isinf(f.M)


def build_constant_case(inst: Instance) -> BuiltModel:
    _check(inst)
    bad = [f.id for f in inst.facilities if not is_constant_case(f)]
    if bad:
        raise PreconditionError(
            [f"facility {i}: constant case needs deltas (0, 1), m = 0 and M = inf" for i in bad]
        )
    bm = _shell(inst, FormulationKind.CONSTANT_MM1, with_rate=False)
    p, lam = bm.program, inst.lam
    for i, f in enumerate(inst.facilities):
        bm.r[i] = p.add_var(f"r[{i}]", 0.0)
        a = [4.0 * f.sc * f.wc * lam[j] for j in range(inst.n_zones)]
        add_sqrt_mixed(p, a, [0.0] * inst.n_zones, list(bm.y[i]), bm.r[i], tag="sqrt_cost")
    terms: dict[int, float] = {}
    for i, f in enumerate(inst.facilities):
        terms[int(bm.x[i])] = f.ec
        terms[int(bm.r[i])] = 1.0
        for j in range(inst.n_zones):
            terms[int(bm.y[i, j])] = (f.sc + inst.tc[i, j]) * lam[j]
    p.set_objective(AffineExpr(terms))
    return bm


def constant_case_rate(f: FacilitySpec, load: float) -> float:
    """Optimal rate ``sqrt(wc load / sc) + load`` of an exponential server."""
    if load <= 0:
        return 0.0
    return math.sqrt(f.wc * load / f.sc) + load


BUILDERS = {
    FormulationKind.GENERAL: build_general,
    FormulationKind.AFFINE: build_affine,
    FormulationKind.CONSTANT_MM1: build_constant_case,
    FormulationKind.ALTERNATIVE: build_alternative,
}


def build(inst: Instance, kind: FormulationKind | str) -> BuiltModel:
    if isinstance(kind, str) and not isinstance(kind, FormulationKind):
        kind = FormulationKind.parse(kind)
    return BUILDERS[kind](inst)


def add_closest_assignment(bm: BuiltModel, inst: Instance | None = None) -> None:
    """Force every zone onto a nearest open facility."""
    inst = inst or bm.inst
    if inst.d is None:
        raise InstanceError("closest-assignment rows need a distance matrix")
    d = inst.d
    p = bm.program
    # A closed facility's row must admit every assignment, so the constant has
    # to dominate the whole matrix, not only the facility's own row.
    D = float(d.max())
    for i in range(inst.n_facilities):
        for j in range(inst.n_zones):
            terms = [(bm.y[k, j], d[k, j]) for k in range(inst.n_facilities)]
            terms.append((bm.x[i], D - d[i, j]))
            p.add_linear(lin(terms), "<=", D, tag="closest")
    bm.closest_assignment = True


# ---------------------------------------------------------------------------
# exact evaluation


def _loads(inst: Instance, sol: Solution) -> np.ndarray:
    lam = inst.lam
    loads = np.zeros(inst.n_facilities)
    for j, i in enumerate(sol.assign):
        if not 0 <= i < inst.n_facilities:
            raise ValueError(f"zone {j} assigned to unknown facility {i}")
        if not sol.open[i]:
            raise ValueError(f"zone {j} assigned to closed facility {i}")
        loads[i] += lam[j]
    return loads


def objective_value(inst: Instance, sol: Solution) -> CostBreakdown:
    """Exact cost of a solution; waiting cost is ``inf`` when a facility is unstable."""
    if len(sol.assign) != inst.n_zones or len(sol.open) != inst.n_facilities:
        raise ValueError("solution does not match the instance dimensions")
    loads = _loads(inst, sol)
    lam = inst.lam
    est = serve = wait = travel = 0.0
    for i, f in enumerate(inst.facilities):
        if not sol.open[i]:
            continue
        mu = float(sol.mu[i])
        est += f.ec
        serve += f.sc * mu
        if loads[i] > 0:
            if mu <= loads[i]:
                wait = INF
            elif math.isfinite(wait):
                wait += f.wc * wt_total(loads[i], mu, variance_of(f.variance, mu))
    for j, i in enumerate(sol.assign):
        travel += inst.tc[i, j] * lam[j]
    return CostBreakdown(est, serve, wait, travel)


def solution_violations(inst: Instance, sol: Solution, tol: float = 1e-9) -> list[str]:
    """Feasibility problems of a decoded solution (empty when feasible)."""
    out = []
    try:
        loads = _loads(inst, sol)
    except ValueError as exc:
        return [str(exc)]
    for i, f in enumerate(inst.facilities):
        mu = sol.mu[i]
        if not sol.open[i]:
            if mu != 0:
                out.append(f"closed facility {i} has rate {mu}")
            continue
        if loads[i] > 0 and not mu > loads[i]:
            out.append(f"facility {i}: rate {mu} does not exceed load {loads[i]}")
        if mu < f.m - tol or mu > f.M + tol:
            out.append(f"facility {i}: rate {mu} outside [{f.m}, {f.M}]")
    return out


def lift_point(bm: BuiltModel, sol: Solution) -> np.ndarray:
    """Integer point of ``bm`` with the smallest auxiliaries consistent with ``sol``.

    The returned vector satisfies every row of the model whenever ``sol`` is
    feasible with each open serving facility at a rate of at least
    ``m_prime``, and its objective then equals :func:`objective_value`.
    """
    inst = bm.inst
    p = bm.program
    lam = inst.lam
    v = np.zeros(p.n_vars)
    loads = _loads(inst, sol)
    for i in range(inst.n_facilities):
        v[bm.x[i]] = 1.0 if sol.open[i] else 0.0
    for j, i in enumerate(sol.assign):
        v[bm.y[i, j]] = 1.0
    for i, f in enumerate(inst.facilities):
        is_open = bool(sol.open[i])
        load = loads[i]
        if bm.kind is FormulationKind.CONSTANT_MM1:
            v[bm.r[i]] = 2.0 * math.sqrt(f.sc * f.wc * load)
            continue
        mu = float(sol.mu[i]) if is_open else 0.0
        v[bm.mu[i]] = mu
        rho = load / mu if mu > 0 else 0.0
        v[bm.rho[i]] = rho
        if bm.kind is FormulationKind.AFFINE:
            a, b = f.variance.affine_coefficients()
            v[bm.t[i]] = ((1 + b) * rho**2 + a * load**2) / (2 * (1 - rho)) if load > 0 else 0.0
            continue
        deltas = f.variance.deltas
        z = 1.0 / mu if (is_open and mu > 0) else 0.0
        powers = [1.0] + [z**l for l in range(1, len(deltas))]
        if bm.z[i] >= 0:
            v[bm.z[i]] = z
        for l in range(2, len(deltas)):
            v[bm.zbar[i, l]] = powers[l]
        sigma = math.sqrt(sum((d * pw) ** 2 for d, pw in zip(deltas, powers)))
        v[bm.sigma[i]] = sigma
        for j in range(inst.n_zones):
            v[bm.u[i, j]] = sigma * v[bm.y[i, j]]
        wl = sigma * load
        if bm.kind is FormulationKind.GENERAL:
            v[bm.t[i]] = (rho**2 + wl**2) / (2 * (1 - rho)) if load > 0 else 0.0
        else:
            v[bm.r[i]] = rho**2 / (2 * (1 - rho)) if load > 0 else 0.0
            v[bm.s[i]] = wl**2 / (2 * (1 - rho)) if load > 0 else 0.0
        for tower in bm.towers[i] if bm.towers else []:
            for k, val in tower.complete(v).items():
                v[k] = val
    return v
