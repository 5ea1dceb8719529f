"""Mixed-integer second-order cone programs and SOC encoding gadgets.

A :class:`ConeProgram` holds a variable table, linear rows ``expr (<=|==|>=) 0``,
second-order cone rows ``||body||_2 <= head`` and a linear objective to
minimize. Everything the formulations need reduces to these rows through
:func:`add_hyperbolic` (``u**2 <= v w``) and :func:`add_power_tower`
(``y**p <= t``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
import scipy.sparse as sp

INF = math.inf
VarId = int


class AffineExpr:
    """Sparse affine expression ``sum_k coeffs[k] * var_k + const``."""

    __slots__ = ("coeffs", "const")

    def __init__(self, coeffs: Mapping[VarId, float] | None = None, const: float = 0.0):
        self.coeffs: dict[VarId, float] = {}
        if coeffs:
            for k, v in coeffs.items():
                v = float(v)
                if v != 0.0:
                    self.coeffs[int(k)] = v
        self.const = float(const)

    @classmethod
    def var(cls, k: VarId, coef: float = 1.0) -> "AffineExpr":
        return cls({k: coef})

    @classmethod
    def constant(cls, c: float) -> "AffineExpr":
        return cls(None, c)

    def copy(self) -> "AffineExpr":
        out = AffineExpr()
        out.coeffs = dict(self.coeffs)
        out.const = self.const
        return out

    def _iadd(self, other: "AffineExpr | float", scale: float = 1.0) -> "AffineExpr":
        if isinstance(other, AffineExpr):
            for k, v in other.coeffs.items():
                nv = self.coeffs.get(k, 0.0) + scale * v
                if nv == 0.0:
                    self.coeffs.pop(k, None)
                else:
                    self.coeffs[k] = nv
            self.const += scale * other.const
        else:
            self.const += scale * float(other)
        return self

    def __add__(self, other):
        return self.copy()._iadd(other)

    __radd__ = __add__

    def __sub__(self, other):
        return self.copy()._iadd(other, -1.0)

    def __rsub__(self, other):
        return (-self)._iadd(other)

    def __neg__(self):
        return self * -1.0

    def __mul__(self, scalar: float):
        scalar = float(scalar)
        if scalar == 0.0:
            return AffineExpr(None, 0.0)
        out = AffineExpr()
        out.coeffs = {k: v * scalar for k, v in self.coeffs.items()}
        out.const = self.const * scalar
        return out

    __rmul__ = __mul__

    def __truediv__(self, scalar: float):
        return self * (1.0 / scalar)

    def value(self, point: Mapping[VarId, float] | np.ndarray) -> float:
        return self.const + sum(v * point[k] for k, v in self.coeffs.items())

    @property
    def is_constant(self) -> bool:
        return not self.coeffs

    def __repr__(self):
        terms = " + ".join(f"{v:g}*v{k}" for k, v in sorted(self.coeffs.items()))
        return f"AffineExpr({terms or '0'} + {self.const:g})"


def as_expr(e: "AffineExpr | VarId | float") -> AffineExpr:
    """Coerce a variable id or a number to an expression.

    Integers are variable ids; pass floats for constants.
    """
    if isinstance(e, AffineExpr):
        return e
    if isinstance(e, (int, np.integer)) and not isinstance(e, bool):
        return AffineExpr.var(int(e))
    return AffineExpr.constant(float(e))


def lin(terms: Iterable[tuple[VarId, float]] | Mapping[VarId, float], const: float = 0.0) -> AffineExpr:
    """Build an expression from ``(var, coef)`` pairs, summing repeats."""
    out = AffineExpr(None, const)
    items = terms.items() if isinstance(terms, Mapping) else terms
    for k, v in items:
        out._iadd(AffineExpr.var(k, v))
    return out


@dataclass
class LinearRow:
    expr: AffineExpr
    sense: str  # "<=", "==", ">=" against zero
    tag: str = ""


@dataclass
class SocConstraint:
    """``||body||_2 <= head``."""

    body: list[AffineExpr]
    head: AffineExpr
    tag: str = ""

    def __post_init__(self):
        if not self.body:
            raise ValueError("SOC body must be nonempty")


@dataclass
class Variable:
    name: str
    lb: float = 0.0
    ub: float = INF
    integer: bool = False


class ConeProgram:
    """Minimize ``objective`` over linear and second-order cone rows."""

    def __init__(self, name: str = ""):
        self.name = name
        self.variables: list[Variable] = []
        self.linear: list[LinearRow] = []
        self.socs: list[SocConstraint] = []
        self.objective = AffineExpr()
        self._by_name: dict[str, VarId] = {}
        self._version = 0
        self._compiled = None

    # -- construction -----------------------------------------------------

    def add_var(self, name: str, lb: float = 0.0, ub: float = INF, integer: bool = False) -> VarId:
        if name in self._by_name:
            raise ValueError(f"duplicate variable name {name!r}")
        if lb > ub:
            raise ValueError(f"{name}: lower bound {lb} above upper bound {ub}")
        if integer and (math.isinf(lb) or math.isinf(ub)):
            raise ValueError(f"{name}: integer variables must be bounded")
        self.variables.append(Variable(name, float(lb), float(ub), bool(integer)))
        k = len(self.variables) - 1
        self._by_name[name] = k
        self._touch()
        return k

    def add_binary(self, name: str) -> VarId:
        return self.add_var(name, 0.0, 1.0, integer=True)

    def var_id(self, name: str) -> VarId:
        return self._by_name[name]

    def add_linear(self, lhs, sense: str, rhs=0.0, tag: str = "") -> LinearRow:
        if sense not in ("<=", "==", ">="):
            raise ValueError(f"unknown sense {sense!r}")
        expr = as_expr(lhs) - as_expr(rhs)
        self._check_expr(expr)
        row = LinearRow(expr, sense, tag)
        self.linear.append(row)
        self._touch()
        return row

    def add_soc(self, body: Sequence, head, tag: str = "") -> SocConstraint:
        body = [as_expr(b) for b in body]
        head = as_expr(head)
        for e in (*body, head):
            self._check_expr(e)
        row = SocConstraint(body, head, tag)
        self.socs.append(row)
        self._touch()
        return row

    def set_objective(self, expr) -> None:
        expr = as_expr(expr)
        self._check_expr(expr)
        self.objective = expr
        self._touch()

    def _check_expr(self, e: AffineExpr) -> None:
        n = len(self.variables)
        for k in e.coeffs:
            if not 0 <= k < n:
                raise IndexError(f"variable id {k} is not defined in this program")

    def _touch(self):
        self._version += 1
        self._compiled = None

    # -- inspection -------------------------------------------------------

    @property
    def n_vars(self) -> int:
        return len(self.variables)

    @property
    def integer_ids(self) -> list[VarId]:
        return [k for k, v in enumerate(self.variables) if v.integer]

    def count(self, tag: str) -> int:
        return sum(r.tag == tag for r in self.linear) + sum(r.tag == tag for r in self.socs)

    def copy(self) -> "ConeProgram":
        out = ConeProgram(self.name)
        out.variables = [Variable(v.name, v.lb, v.ub, v.integer) for v in self.variables]
        out.linear = [LinearRow(r.expr.copy(), r.sense, r.tag) for r in self.linear]
        out.socs = [SocConstraint([b.copy() for b in r.body], r.head.copy(), r.tag) for r in self.socs]
        out.objective = self.objective.copy()
        out._by_name = dict(self._by_name)
        return out

    def compiled(self) -> "CompiledProgram":
        if self._compiled is None:
            self._compiled = CompiledProgram.build(self)
        return self._compiled


@dataclass
class CompiledProgram:
    """Matrix view of a :class:`ConeProgram` in its full variable space.

    Rows are stacked as ``G x + s = h`` with ``s`` in (orthant x SOC blocks)
    and ``A x = b``; variable bounds become orthant rows. The objective is
    ``c @ x + c0``.
    """

    n: int
    c: np.ndarray
    c0: float
    A: sp.csr_matrix
    b: np.ndarray
    G_lin: sp.csr_matrix
    h_lin: np.ndarray
    G_soc: sp.csr_matrix
    h_soc: np.ndarray
    soc_dims: list[int]
    lb: np.ndarray
    ub: np.ndarray
    integer: np.ndarray

    @classmethod
    def build(cls, p: ConeProgram) -> "CompiledProgram":
        n = p.n_vars
        c = np.zeros(n)
        for k, v in p.objective.coeffs.items():
            c[k] = v
        eq_r, eq_c, eq_v, b = [], [], [], []
        li_r, li_c, li_v, hl = [], [], [], []
        for row in p.linear:
            e = row.expr
            if row.sense == "==":
                i = len(b)
                for k, v in e.coeffs.items():
                    eq_r.append(i), eq_c.append(k), eq_v.append(v)
                b.append(-e.const)
            else:
                sign = 1.0 if row.sense == "<=" else -1.0
                i = len(hl)
                for k, v in e.coeffs.items():
                    li_r.append(i), li_c.append(k), li_v.append(sign * v)
                hl.append(-sign * e.const)
        so_r, so_c, so_v, hs, dims = [], [], [], [], []
        for row in p.socs:
            dims.append(1 + len(row.body))
            for e in (row.head, *row.body):
                i = len(hs)
                for k, v in e.coeffs.items():
                    so_r.append(i), so_c.append(k), so_v.append(-v)
                hs.append(e.const)
        lb = np.array([v.lb for v in p.variables], dtype=float)
        ub = np.array([v.ub for v in p.variables], dtype=float)
        integer = np.array([v.integer for v in p.variables], dtype=bool)
        return cls(
            n=n,
            c=c,
            c0=p.objective.const,
            A=sp.csr_matrix((eq_v, (eq_r, eq_c)), shape=(len(b), n)),
            b=np.array(b, dtype=float),
            G_lin=sp.csr_matrix((li_v, (li_r, li_c)), shape=(len(hl), n)),
            h_lin=np.array(hl, dtype=float),
            G_soc=sp.csr_matrix((so_v, (so_r, so_c)), shape=(len(hs), n)),
            h_soc=np.array(hs, dtype=float),
            soc_dims=dims,
            lb=lb,
            ub=ub,
            integer=integer,
        )


# ---------------------------------------------------------------------------
# gadgets


def add_hyperbolic(p: ConeProgram, u, v, w, tag: str = "hyperbolic") -> SocConstraint:
    """Append ``u**2 <= v * w, v >= 0, w >= 0`` as ``||(2u, v - w)|| <= v + w``."""
    u, v, w = as_expr(u), as_expr(v), as_expr(w)
    row = p.add_soc([2.0 * u, v - w], v + w, tag=tag)
    p.add_linear(v, ">=", 0.0, tag=tag + ":nonneg")
    p.add_linear(w, ">=", 0.0, tag=tag + ":nonneg")
    return row


@dataclass
class PowerTower:
    """Record of the auxiliaries created by :func:`add_power_tower`."""

    y: VarId
    t: VarId
    power: int
    levels: list[list[VarId]] = field(default_factory=list)
    leaves: list[AffineExpr] = field(default_factory=list)

    def complete(self, point: Mapping[VarId, float]) -> dict[VarId, float]:
        """Smallest auxiliary values consistent with ``point[y]`` and ``point[t]``.

        Each node takes the geometric mean of its two children, which is the
        largest value its hyperbolic row allows.
        """
        out: dict[VarId, float] = {}
        prev = [max(e.value(point), 0.0) for e in self.leaves]
        for level in self.levels:
            cur = [math.sqrt(prev[2 * i] * prev[2 * i + 1]) for i in range(len(level))]
            out.update(zip(level, cur))
            prev = cur
        return out


def add_power_tower(p: ConeProgram, y: VarId, t: VarId, power: int) -> PowerTower:
    """Append rows whose projection onto ``(y, t)`` is ``{y**power <= t, y >= 0}``.

    With ``2**l`` the smallest power of two at least ``power`` and
    ``r = 2**l - power``, the rows encode ``y <= (y**r * t)**(1 / 2**l)`` as a
    binary tree of ``2**l - 1`` hyperbolic rows. ``power == 1`` is the single
    linear row ``y <= t``.
    """
    if power < 1 or int(power) != power:
        raise ValueError("power must be an integer >= 1")
    power = int(power)
    tower = PowerTower(y, t, power)
    if power == 1:
        p.add_linear(y, "<=", t, tag="tower:top")
        return tower
    l = (power - 1).bit_length()
    r = 2**l - power
    leaves = [as_expr(y)] * r + [as_expr(t)] + [AffineExpr.constant(1.0)] * (2**l - r - 1)
    tower.leaves = leaves
    prefix = f"tower[{p.variables[y].name},{p.variables[t].name},{power}]"
    prev = leaves
    for level in range(1, l + 1):
        ids = []
        cur = []
        for i in range(2 ** (l - level)):
            k = p.add_var(f"{prefix}.z{level}_{i + 1}", 0.0)
            add_hyperbolic(p, k, prev[2 * i], prev[2 * i + 1], tag="tower")
            ids.append(k)
            cur.append(as_expr(k))
        tower.levels.append(ids)
        prev = cur
    p.add_linear(y, "<=", prev[0], tag="tower:top")
    return tower


def add_sqrt_mixed(p: ConeProgram, a: Sequence[float], b: Sequence[float], y: Sequence[VarId], r, tag: str = "sqrt") -> SocConstraint:
    """Append ``sum_j a_j y_j**2 + (sum_j b_j y_j)**2 <= r**2``.

    On binary ``y`` this is ``sqrt(sum_j a_j y_j + (sum_j b_j y_j)**2) <= r``.
    """
    if len(a) != len(y) or len(b) != len(y):
        raise ValueError("a, b and y must have equal length")
    if any(aj < 0 for aj in a):
        raise ValueError("coefficients a must be nonnegative")
    body = [AffineExpr.var(yj, math.sqrt(aj)) for aj, yj in zip(a, y) if aj > 0]
    bsum = lin([(yj, bj) for bj, yj in zip(b, y)])
    if bsum.coeffs:
        body.append(bsum)
    if not body:
        body = [AffineExpr.constant(0.0)]
    return p.add_soc(body, r, tag=tag)


# ---------------------------------------------------------------------------
# evaluation


@dataclass
class ResidualReport:
    """Signed residuals; a row holds when its residual is at most ``tol``.

    ``linear`` and ``soc`` are positive when violated. SOC residuals are
    ``||body|| - head``. ``bounds`` is the larger of ``lb - x`` and ``x - ub``.
    """

    linear: np.ndarray
    soc: np.ndarray
    bounds: np.ndarray
    integrality: np.ndarray
    tol: float

    @property
    def max_violation(self) -> float:
        vals = [0.0]
        for arr in (self.linear, self.soc, self.bounds, self.integrality):
            if arr.size:
                vals.append(float(arr.max()))
        return max(vals)

    @property
    def feasible(self) -> bool:
        return self.max_violation <= self.tol

    def violated(self) -> list[tuple[str, int, float]]:
        out = []
        for kind in ("linear", "soc", "bounds", "integrality"):
            arr = getattr(self, kind)
            for i in np.flatnonzero(arr > self.tol):
                out.append((kind, int(i), float(arr[i])))
        return out


def evaluate_point(p: ConeProgram, point: Mapping[VarId, float] | Sequence[float], tol: float = 1e-8) -> ResidualReport:
    if isinstance(point, Mapping):
        missing = [k for k in range(p.n_vars) if k not in point]
        if missing:
            raise KeyError(f"point is missing values for variables {missing[:5]}")
        x = np.array([float(point[k]) for k in range(p.n_vars)])
    else:
        x = np.asarray(point, dtype=float)
        if x.shape != (p.n_vars,):
            raise KeyError(f"point has {x.size} values, program has {p.n_vars} variables")
    lin_res = []
    for row in p.linear:
        val = row.expr.value(x)
        lin_res.append(val if row.sense == "<=" else -val if row.sense == ">=" else abs(val))
    soc_res = []
    for row in p.socs:
        body = math.sqrt(sum(e.value(x) ** 2 for e in row.body))
        soc_res.append(body - row.head.value(x))
    lb = np.array([v.lb for v in p.variables])
    ub = np.array([v.ub for v in p.variables])
    with np.errstate(invalid="ignore"):
        bnd = np.maximum(lb - x, x - ub) if p.n_vars else np.zeros(0)
    ints = np.array([abs(x[k] - round(x[k])) for k in p.integer_ids])
    return ResidualReport(np.array(lin_res), np.array(soc_res), bnd, ints, tol)


# ---------------------------------------------------------------------------
# export


def _fmt(x: float) -> str:
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return repr(float(x))


def export_conic(p: ConeProgram) -> str:
    """Write the program in a line-oriented conic benchmark layout.

    Sections: ``VER``, ``OBJSENSE``, ``VAR`` (count, then one ``lb ub`` line
    per variable), ``INT`` (count, then indices), ``OBJ`` (constant, nonzero
    count, ``col coef`` lines), ``CON`` (row count, then one ``sense const``
    line per row, then nonzero count and ``row col coef`` triplets),
    ``SOCROW`` (stacked affine rows of all SOC constraints: count, constants,
    nonzero count, triplets) and ``CONE`` (block count, then per block a
    ``Q size`` line followed by the SOCROW index of the head and then of each
    body entry). An empty program has only the header sections.
    """
    out = ["VER", "1", "", "OBJSENSE", "MIN", ""]
    if p.n_vars == 0 and not p.linear and not p.socs:
        return "\n".join(out) + "\n"
    out += ["VAR", str(p.n_vars)]
    out += [f"{_fmt(v.lb)} {_fmt(v.ub)}" for v in p.variables]
    ints = p.integer_ids
    out += ["", "INT", str(len(ints))] + [str(k) for k in ints]
    obj = sorted(p.objective.coeffs.items())
    out += ["", "OBJ", _fmt(p.objective.const), str(len(obj))] + [f"{k} {_fmt(v)}" for k, v in obj]
    trip = []
    out += ["", "CON", str(len(p.linear))]
    for i, row in enumerate(p.linear):
        out.append(f"{row.sense} {_fmt(row.expr.const)}")
        trip += [f"{i} {k} {_fmt(v)}" for k, v in sorted(row.expr.coeffs.items())]
    out += [str(len(trip))] + trip
    consts, trip, blocks = [], [], []
    for row in p.socs:
        idx = []
        for e in (row.head, *row.body):
            i = len(consts)
            idx.append(i)
            consts.append(_fmt(e.const))
            trip += [f"{i} {k} {_fmt(v)}" for k, v in sorted(e.coeffs.items())]
        blocks.append(idx)
    out += ["", "SOCROW", str(len(consts))] + consts + [str(len(trip))] + trip
    out += ["", "CONE", str(len(blocks))]
    for idx in blocks:
        out.append(f"Q {len(idx)}")
        out += [str(i) for i in idx]
    return "\n".join(out) + "\n"
