"""Branch-and-bound over conic relaxations.

Every node solves the continuous relaxation of the model with some binaries
fixed. Nodes are explored best-bound first; integral relaxation points give
incumbents, which are always re-evaluated with the exact cost function.
Optional root-node enhancements (valid inequalities, lift-and-project cuts)
are applied once before branching.
"""

from __future__ import annotations

import heapq
import itertools
import json
import math
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Mapping

import numpy as np

from .cuts import INT_TOL, SETTINGS, CutGenSettings, add_valid_inequalities, fractional_binaries, root_cut_loop
from .formulations import (
    BuiltModel,
    FormulationKind,
    PreconditionError,
    add_closest_assignment,
    build,
    constant_case_rate,
    objective_value,
    solution_violations,
)
from .instance import Instance
from .oracle import OracleError, optimal_rate
from .socp import InconsistentFixing, SolverOptions, SolverResult, Status, solve_program
from .solution import CostBreakdown, Solution

STEADY_NUDGE = 1e-7


class SearchStatus(str, Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    TIME_LIMIT = "TimeLimit"
    NODE_LIMIT = "NodeLimit"


@dataclass(frozen=True)
class SearchSettings:
    """Branch-and-bound configuration.

    ``setting`` names one of the six root enhancement combinations
    (``basic``, ``vi``, ``cut1``, ``vi-cut1``, ``cut2``, ``vi-cut2``);
    ``cuts`` overrides it with explicit :class:`CutGenSettings`.
    """

    formulation: FormulationKind | str = FormulationKind.GENERAL
    setting: str = "basic"
    gap_tol: float = 1e-6
    time_limit: float = math.inf
    node_limit: int | None = None
    closest_assignment: bool = False
    cuts: CutGenSettings | None = None
    solver: SolverOptions = field(default_factory=SolverOptions)

    def __post_init__(self):
        if not self.gap_tol > 0:
            raise ValueError("gap tolerance must be positive")
        if self.setting not in SETTINGS:
            raise ValueError(f"unknown setting {self.setting!r}; choose from {', '.join(SETTINGS)}")
        if isinstance(self.formulation, str) and not isinstance(self.formulation, FormulationKind):
            object.__setattr__(self, "formulation", FormulationKind.parse(self.formulation))

    @property
    def cut_settings(self) -> CutGenSettings:
        return self.cuts if self.cuts is not None else SETTINGS[self.setting]


@dataclass(order=True)
class Node:
    bound: float
    seq: int
    fixings: dict[int, float] = field(compare=False, default_factory=dict)
    depth: int = field(compare=False, default=0)
    result: SolverResult | None = field(compare=False, default=None, repr=False)


@dataclass
class SolveReport:
    status: SearchStatus
    solution: Solution | None
    objective: float
    bound: float
    gap: float
    nodes: int
    cuts: int
    wall_seconds: float
    root_bound: float = math.nan
    root_bound_initial: float = math.nan
    formulation: str = ""
    setting: str = ""
    vi_rows: int = 0
    cut_rounds: int = 0

    @property
    def breakdown(self) -> CostBreakdown | None:
        return self.solution.breakdown if self.solution is not None else None

    def percentages(self) -> dict[str, float] | None:
        bd = self.breakdown
        return bd.percentages() if bd is not None else None

    def to_dict(self, inst: Instance) -> dict[str, Any]:
        """Document form with facility and zone ids as keys."""
        sol = self.solution
        doc: dict[str, Any] = {
            "status": self.status.value,
            "objective": _num(self.objective),
            "bound": _num(self.bound),
            "gap": _num(self.gap),
            "nodes": self.nodes,
            "cuts": self.cuts,
            "wall_seconds": self.wall_seconds,
            "formulation": self.formulation,
            "setting": self.setting,
            "root_bound": _num(self.root_bound),
            "root_bound_initial": _num(self.root_bound_initial),
            "open": [],
            "assignment": {},
            "mu": {},
            "breakdown": None,
        }
        if sol is not None:
            fac = inst.facilities
            doc["open"] = [fac[i].id for i in sol.open_indices]
            doc["assignment"] = {str(inst.zones[j].id): fac[i].id for j, i in enumerate(sol.assign)}
            doc["mu"] = {str(fac[i].id): float(sol.mu[i]) for i in sol.open_indices}
            if sol.breakdown is not None:
                doc["breakdown"] = {k: _num(v) for k, v in sol.breakdown.as_dict().items()}
        return doc

    def to_json(self, inst: Instance, indent: int | None = 2) -> str:
        return json.dumps(self.to_dict(inst), indent=indent)


def _num(x: float):
    return float(x) if x is not None and math.isfinite(x) else None


def _denum(x) -> float:
    return math.nan if x is None else float(x)


def report_from_dict(doc: Mapping[str, Any], inst: Instance | None = None) -> SolveReport:
    """Rebuild a report from its document form.

    With ``inst`` ids are mapped back to instance positions; without it
    facilities are numbered by sorted id and zones by document order.

    Raises:
        ValueError: a required key is missing or malformed.
    """
    try:
        status = SearchStatus(doc["status"])
        sol = None
        if doc.get("assignment"):
            if inst is not None:
                fac_ids = [str(f.id) for f in inst.facilities]
                zone_ids = [str(z.id) for z in inst.zones]
            else:
                used = {str(v) for v in doc["assignment"].values()} | {str(v) for v in doc["open"]}
                fac_ids = sorted(used | set(doc["mu"]), key=lambda v: (len(v), v))
                zone_ids = [str(z) for z in doc["assignment"]]
            fpos = {f: i for i, f in enumerate(fac_ids)}
            zpos = {z: j for j, z in enumerate(zone_ids)}
            assign = [0] * len(zone_ids)
            for z, f in doc["assignment"].items():
                assign[zpos[str(z)]] = fpos[str(f)]
            open_ = [False] * len(fac_ids)
            mu = [0.0] * len(fac_ids)
            for f in doc["open"]:
                open_[fpos[str(f)]] = True
            for f, v in doc["mu"].items():
                mu[fpos[str(f)]] = float(v)
            bd = doc.get("breakdown")
            breakdown = CostBreakdown(**{k: _denum(bd[k]) for k in ("establish", "serve", "wait", "travel")}) if bd else None
            sol = Solution(tuple(open_), tuple(assign), tuple(mu), breakdown)
        return SolveReport(
            status=status,
            solution=sol,
            objective=_denum(doc["objective"]),
            bound=_denum(doc["bound"]),
            gap=_denum(doc["gap"]),
            nodes=int(doc["nodes"]),
            cuts=int(doc["cuts"]),
            wall_seconds=float(doc["wall_seconds"]),
            root_bound=_denum(doc.get("root_bound")),
            root_bound_initial=_denum(doc.get("root_bound_initial")),
            formulation=doc.get("formulation", ""),
            setting=doc.get("setting", ""),
        )
    except (KeyError, TypeError, ValueError, AttributeError) as exc:
        raise ValueError(f"malformed report document: {exc!r}") from exc


# ---------------------------------------------------------------------------
# branching and decoding


def branch(node: Node, point: np.ndarray, model: BuiltModel, seq=None) -> tuple[Node, Node]:
    """Split on the most fractional binary (``x`` before ``y``, then lowest index).

    Children inherit the parent's fixings plus ``k = 0`` or ``k = 1``, with
    the implied fixings propagated (see :func:`propagate`).

    Raises:
        ValueError: every free binary is integral within 1e-6.
    """
    frac = [k for k in fractional_binaries(model, point, INT_TOL) if k not in node.fixings]
    if not frac:
        raise ValueError("relaxation point is integral on all free binaries")
    return _children(node, frac[0], model, seq)


def _children(node: Node, k: int, model: BuiltModel, seq=None) -> tuple[Node, Node]:
    seq = seq if seq is not None else itertools.count()
    out = []
    for v in (0.0, 1.0):
        fx = propagate(model, {**node.fixings, k: v})
        out.append(Node(node.bound, next(seq), fx if fx is not None else {**node.fixings, k: v}, node.depth + 1))
    return out[0], out[1]


def propagate(model: BuiltModel, fixings: Mapping[int, float]) -> dict[int, float] | None:
    """Close fixings under ``x_i = 0 => y_ij = 0`` and
    ``y_ij = 1 => x_i = 1, y_kj = 0 (k != i)``; ``None`` on contradiction."""
    fx = dict(fixings)
    x, y = model.x, model.y
    nI, nJ = y.shape
    changed = True

    def put(k, v):
        nonlocal changed
        k = int(k)
        if k in fx:
            return fx[k] == v
        fx[k] = v
        changed = True
        return True

    while changed:
        changed = False
        for i in range(nI):
            if fx.get(int(x[i])) == 0.0:
                for j in range(nJ):
                    if not put(y[i, j], 0.0):
                        return None
        for i in range(nI):
            for j in range(nJ):
                if fx.get(int(y[i, j])) == 1.0:
                    if not put(x[i], 1.0):
                        return None
                    for k in range(nI):
                        if k != i and not put(y[k, j], 0.0):
                            return None
        for j in range(nJ):
            col = [fx.get(int(y[i, j])) for i in range(nI)]
            free = [i for i in range(nI) if col[i] is None]
            if all(c == 0.0 for c in col if c is not None) and not free:
                return None
            if len(free) == 1 and all(c == 0.0 for c in col if c is not None):
                if not put(y[free[0], j], 1.0):
                    return None
    return fx


def extract_solution(point: np.ndarray, inst: Instance, model: BuiltModel) -> Solution:
    """Decode an integral relaxation point into a :class:`Solution`.

    Rates come from the point, except in the constant-case model where the
    closed-form optimal rate is used. A rate below the facility's load by at
    most 1e-7 is moved to ``load + 1e-7``. The cost is recomputed exactly.

    Raises:
        ValueError: a binary is fractional beyond 1e-6.
    """
    point = np.asarray(point, dtype=float)
    bad = [model.program.variables[k].name for k in model.binaries if abs(point[k] - round(point[k])) > INT_TOL]
    if bad:
        raise ValueError(f"fractional binaries: {', '.join(bad[:5])}")
    nI, nJ = inst.n_facilities, inst.n_zones
    lam = inst.lam
    assign = tuple(int(np.argmax([point[model.y[i, j]] for i in range(nI)])) for j in range(nJ))
    loads = np.zeros(nI)
    for j, i in enumerate(assign):
        loads[i] += lam[j]
    open_ = tuple(bool(round(point[model.x[i]]) == 1 or loads[i] > 0) for i in range(nI))
    mu = []
    for i, f in enumerate(inst.facilities):
        if not open_[i]:
            mu.append(0.0)
            continue
        if model.kind is FormulationKind.CONSTANT_MM1:
            rate = constant_case_rate(f, loads[i])
        else:
            rate = float(point[model.mu[i]])
            rate = min(max(rate, f.m), f.M)
        if loads[i] > 0 and rate <= loads[i] and loads[i] - rate <= STEADY_NUDGE:
            rate = loads[i] + STEADY_NUDGE
        mu.append(rate)
    sol = Solution(open_, assign, tuple(mu))
    return Solution(open_, assign, tuple(mu), objective_value(inst, sol))


def polish_rates(inst: Instance, sol: Solution) -> Solution:
    """Same open set and assignment with every rate re-optimized exactly."""
    loads = np.zeros(inst.n_facilities)
    for j, i in enumerate(sol.assign):
        loads[i] += inst.lam[j]
    mu = list(sol.mu)
    for i, f in enumerate(inst.facilities):
        if sol.open[i]:
            try:
                mu[i] = optimal_rate(f, float(loads[i]))[0]
            except OracleError:
                pass
    cand = Solution(sol.open, sol.assign, tuple(mu))
    cand = Solution(cand.open, cand.assign, cand.mu, objective_value(inst, cand))
    if sol.breakdown is None or cand.objective <= sol.objective:
        return cand
    return sol


def _solution_from_fixings(model: BuiltModel, fixings: Mapping[int, float]) -> Solution | None:
    inst = model.inst
    point = np.zeros(model.program.n_vars)
    for k, v in fixings.items():
        point[k] = v
    try:
        sol = extract_solution(point, inst, model)
    except ValueError:
        return None
    return polish_rates(inst, sol)


# ---------------------------------------------------------------------------
# search


def prepare_model(inst: Instance, settings: SearchSettings) -> tuple[BuiltModel, int]:
    """Build the formulation and append the static enhancements."""
    model = build(inst, settings.formulation)
    if settings.closest_assignment:
        add_closest_assignment(model, inst)
    vi_rows = 0
    if settings.cut_settings.use_vi:
        try:
            vi_rows = add_valid_inequalities(model)
        except ValueError as exc:
            raise PreconditionError(str(exc)) from exc
    return model, vi_rows


def solve(inst: Instance, settings: SearchSettings | None = None) -> SolveReport:
    """Solve an instance to the configured gap.

    Limits never raise: the report carries the incumbent, the best bound and
    the remaining gap.

    Raises:
        InstanceError: the instance is invalid or violates the formulation's
            preconditions.
    """
    settings = settings or SearchSettings()
    clock = time.perf_counter
    start = clock()
    deadline = start + settings.time_limit if math.isfinite(settings.time_limit) else None
    opts = settings.solver
    model, vi_rows = prepare_model(inst, settings)
    cs = settings.cut_settings

    root = root_cut_loop(model, cs, opts, deadline=deadline, clock=clock)
    root_initial = root.bounds[0] if root.bounds else -math.inf
    root_bound = max(root.bounds) if root.bounds else -math.inf

    seq = itertools.count()
    heap: list[Node] = []
    first = propagate(model, {})
    if first is not None:
        heapq.heappush(heap, Node(root_bound, next(seq), first, 0, root.result))
    inc: Solution | None = None
    inc_cost = math.inf
    nodes = 0
    gap_floor = math.inf  # least bound among nodes dropped by the gap test
    status = SearchStatus.OPTIMAL

    def slack() -> float:
        return settings.gap_tol * max(abs(inc_cost), 1e-10) if math.isfinite(inc_cost) else 0.0

    def offer(sol: Solution | None) -> None:
        nonlocal inc, inc_cost
        if sol is None or not math.isfinite(sol.objective):
            return
        if solution_violations(inst, sol):
            return
        if settings.closest_assignment and not _closest_ok(inst, sol):
            return
        if sol.objective < inc_cost:
            inc, inc_cost = sol, sol.objective

    while heap:
        node = heap[0]
        if node.bound >= inc_cost - slack():
            gap_floor = min(gap_floor, min(n.bound for n in heap))
            heap.clear()
            break
        if deadline is not None and clock() >= deadline:
            status = SearchStatus.TIME_LIMIT
            break
        if settings.node_limit is not None and nodes >= settings.node_limit:
            status = SearchStatus.NODE_LIMIT
            break
        heapq.heappop(heap)
        res = node.result
        if res is None:
            try:
                res = solve_program(model.program, node.fixings, opts)
            except InconsistentFixing:
                continue
        node.result = None
        nodes += 1
        if res.status is Status.PRIMAL_INFEASIBLE:
            continue
        if res.usable:
            bound = max(node.bound, res.bound)
            if bound >= inc_cost - slack():
                gap_floor = min(gap_floor, bound) if bound < inc_cost else gap_floor
                continue
            frac = [k for k in fractional_binaries(model, res.x, INT_TOL) if k not in node.fixings]
            if not frac:
                try:
                    sol = extract_solution(res.x, inst, model)
                except ValueError:
                    sol = None
                if sol is not None:
                    offer(polish_rates(inst, sol))
                    continue
                frac = [k for k in model.binaries if k not in node.fixings]
            node.bound = bound
            for child in _children(node, frac[0], model, seq):
                heapq.heappush(heap, child)
        else:
            free = [k for k in model.binaries if k not in node.fixings]
            if not free:
                offer(_solution_from_fixings(model, node.fixings))
                continue
            for child in _children(node, free[0], model, seq):
                heapq.heappush(heap, child)

    open_bound = min((n.bound for n in heap), default=math.inf)
    bound = min(open_bound, gap_floor, inc_cost)
    if inc is None:
        if status is SearchStatus.OPTIMAL:
            status = SearchStatus.INFEASIBLE
        objective = math.inf
        gap = math.inf
    else:
        objective = inc_cost
        bound = min(bound, objective)
        gap = max(0.0, (objective - bound) / max(abs(objective), 1e-10)) if math.isfinite(bound) else math.inf
    return SolveReport(
        status=status,
        solution=inc,
        objective=objective,
        bound=bound,
        gap=gap,
        nodes=nodes,
        cuts=len(root.cuts),
        wall_seconds=clock() - start,
        root_bound=root_bound,
        root_bound_initial=root_initial,
        formulation=model.kind.value,
        setting=settings.setting,
        vi_rows=vi_rows,
        cut_rounds=root.rounds,
    )


def _closest_ok(inst: Instance, sol: Solution) -> bool:
    d = inst.d
    used = sol.open_indices
    return all(d[i, j] <= min(d[k, j] for k in used) + 1e-12 for j, i in enumerate(sol.assign))
