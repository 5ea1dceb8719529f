"""Command-line interface: ``ssdp {generate,solve,oracle,verify,export,report}``.

Exit codes: 0 success, 1 usage error, 2 data error (unreadable or invalid
input, unsupported formulation, verification mismatch), 3 infeasible
instance, 4 limit reached with the gap above tolerance.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path
from typing import Sequence

from .bnb import SearchSettings, SearchStatus, SolveReport, prepare_model, report_from_dict, solve
from .conic import export_conic
from .cuts import SETTINGS
from .formulations import FormulationKind
from .instance import GeneratorConfig, Instance, InstanceError, generate_instance, load_instance, save_instance, validate
from .oracle import OracleError, solve_exhaustive

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INFEASIBLE, EXIT_LIMIT = range(5)
THREADS_ENV = "SSDP_THREADS"
FORMULATIONS = {"general": "general", "affine": "affine", "mm1": "mm1", "alt": "alt"}
TERMS = ("establish", "serve", "wait", "travel")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _range(text: str) -> tuple[float, float]:
    try:
        lo, hi = (float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected LO,HI, got {text!r}") from None
    return lo, hi


def _threads(text: str) -> int:
    n = int(text)
    if n < 1:
        raise argparse.ArgumentTypeError("thread count must be >= 1")
    return n


def _default_threads() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="ssdp", description="Service-system design with M/G/1 congestion.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="write a random instance document")
    g.add_argument("--seed", type=int, required=True)
    g.add_argument("--facilities", "-I", type=int, required=True)
    g.add_argument("--zones", "-J", type=int, required=True)
    d = GeneratorConfig()
    for name in ("ec", "sc", "wc", "lam", "tc_factor", "alpha_range"):
        g.add_argument(f"--{name.replace('_', '-')}", type=_range, default=getattr(d, name), metavar="LO,HI")
    g.add_argument("--degree", type=int, default=d.degree)
    g.add_argument("--rate-bounds", type=_range, default=d.rate_bounds, metavar="m,M")
    g.add_argument("--output", "-o")

    def solver_flags(sp, with_setting=True):
        sp.add_argument("instance", help="instance document path, or - for stdin")
        sp.add_argument("--formulation", choices=sorted(FORMULATIONS), default="general")
        if with_setting:
            sp.add_argument("--setting", choices=list(SETTINGS), default="basic")
            sp.add_argument("--gap", type=float, default=1e-6)
            sp.add_argument("--time-limit", type=float, default=math.inf)
            sp.add_argument("--node-limit", type=int, default=None)
            sp.add_argument(
                "--threads",
                type=_threads,
                default=_default_threads(),
                help=f"worker count (default from {THREADS_ENV}); nodes are processed by a single worker",
            )
        sp.add_argument("--closest-assignment", action="store_true")

    s = sub.add_parser("solve", help="branch-and-bound solve; writes a report document")
    solver_flags(s)
    s.add_argument("--pretty", action="store_true", help="print a table instead of the document")
    s.add_argument("--output", "-o")

    o = sub.add_parser("oracle", help="exhaustive enumeration on tiny instances")
    o.add_argument("instance")
    o.add_argument("--closest-assignment", action="store_true")
    o.add_argument("--pretty", action="store_true")
    o.add_argument("--output", "-o")

    v = sub.add_parser("verify", help="compare branch-and-bound with the oracle")
    solver_flags(v)
    v.add_argument("--tol", type=float, default=1e-4)

    e = sub.add_parser("export", help="write the conic text format of a formulation")
    solver_flags(e, with_setting=False)
    e.add_argument("--vi", action="store_true", help="append the valid inequalities")
    e.add_argument("--output", "-o")

    r = sub.add_parser("report", help="cost-percentage breakdown of a report document")
    r.add_argument("report", help="report document path, or - for stdin")
    r.add_argument("--pretty", action="store_true")
    r.add_argument("--output", "-o")
    return p


def _read(path: str) -> str:
    if path == "-":
        return sys.stdin.read()
    return Path(path).read_text()


def _write(text: str, path: str | None) -> None:
    if not text.endswith("\n"):
        text += "\n"
    if path:
        Path(path).write_text(text)
    else:
        sys.stdout.write(text)


def _load(path: str) -> Instance:
    inst = load_instance(_read(path))
    problems = validate(inst)
    if problems:
        raise InstanceError(problems)
    return inst


def _settings(a) -> SearchSettings:
    return SearchSettings(
        formulation=FORMULATIONS[a.formulation],
        setting=a.setting,
        gap_tol=a.gap,
        time_limit=a.time_limit,
        node_limit=a.node_limit,
        closest_assignment=a.closest_assignment,
    )


def _status_code(rep: SolveReport, gap_tol: float) -> int:
    if rep.status is SearchStatus.INFEASIBLE:
        return EXIT_INFEASIBLE
    if rep.status in (SearchStatus.TIME_LIMIT, SearchStatus.NODE_LIMIT) and not rep.gap <= gap_tol:
        return EXIT_LIMIT
    return EXIT_OK


def breakdown_rows(doc: dict) -> list[tuple[str, float, float]]:
    """``(term, cost, percent)`` rows of a report document."""
    bd = doc.get("breakdown") or {}
    costs = {t: float(bd.get(t) or 0.0) for t in TERMS}
    total = sum(costs.values())
    return [(t, costs[t], 100.0 * costs[t] / total if total else 0.0) for t in TERMS]


def render_table(doc: dict) -> str:
    lines = [
        f"status     {doc['status']}",
        f"objective  {_fmt(doc.get('objective'))}",
        f"bound      {_fmt(doc.get('bound'))}",
        f"gap        {_fmt(doc.get('gap'))}",
        f"nodes      {doc.get('nodes')}   cuts {doc.get('cuts')}   seconds {float(doc.get('wall_seconds', 0.0)):.2f}",
        "",
        f"{'term':<10}{'cost':>14}{'percent':>10}",
    ]
    for term, cost, pct in breakdown_rows(doc):
        lines.append(f"{term:<10}{cost:>14.4f}{pct:>10.1f}")
    if doc.get("open"):
        lines.append("")
        lines.append("open       " + " ".join(str(f) for f in doc["open"]))
        for f, m in doc.get("mu", {}).items():
            lines.append(f"  mu[{f}] = {m:.6g}")
    return "\n".join(lines)


def _fmt(v) -> str:
    return "-" if v is None else f"{float(v):.6g}"


def _cmd_generate(a) -> int:
    cfg = GeneratorConfig(
        ec=a.ec,
        sc=a.sc,
        wc=a.wc,
        lam=a.lam,
        tc_factor=a.tc_factor,
        alpha_range=a.alpha_range,
        degree=a.degree,
        rate_bounds=a.rate_bounds,
    )
    try:
        inst = generate_instance(a.seed, a.facilities, a.zones, cfg)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    _write(save_instance(inst), a.output)
    return EXIT_OK


def _emit_report(rep: SolveReport, inst: Instance, a) -> None:
    doc = rep.to_dict(inst)
    _write(render_table(doc) if a.pretty else json.dumps(doc, indent=2), a.output)


def _cmd_solve(a) -> int:
    inst = _load(a.instance)
    rep = solve(inst, _settings(a))
    _emit_report(rep, inst, a)
    return _status_code(rep, a.gap)


def _oracle_report(inst: Instance, closest: bool) -> SolveReport:
    res = solve_exhaustive(inst, closest_assignment=closest)
    return SolveReport(
        status=SearchStatus.OPTIMAL,
        solution=res.solution,
        objective=res.cost,
        bound=res.cost,
        gap=0.0,
        nodes=res.enumerated,
        cuts=0,
        wall_seconds=0.0,
        formulation="oracle",
        setting="enumeration",
    )


def _cmd_oracle(a) -> int:
    inst = _load(a.instance)
    try:
        rep = _oracle_report(inst, a.closest_assignment)
    except OracleError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE if "no feasible" in str(exc) else EXIT_DATA
    _emit_report(rep, inst, a)
    return EXIT_OK


def _cmd_verify(a) -> int:
    inst = _load(a.instance)
    try:
        ref = solve_exhaustive(inst, closest_assignment=a.closest_assignment)
    except OracleError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE if "no feasible" in str(exc) else EXIT_DATA
    rep = solve(inst, _settings(a))
    code = _status_code(rep, a.gap)
    if code != EXIT_OK:
        print(f"branch-and-bound stopped with status {rep.status.value}", file=sys.stderr)
        return code
    rel = abs(rep.objective - ref.cost) / max(abs(ref.cost), 1e-12)
    ok = bool(rel <= a.tol)
    print(
        json.dumps(
            {
                "bnb": float(rep.objective),
                "oracle": float(ref.cost),
                "relative_difference": float(rel),
                "tolerance": a.tol,
                "match": ok,
                "nodes": rep.nodes,
                "cuts": rep.cuts,
                "wall_seconds": rep.wall_seconds,
            },
            indent=2,
        )
    )
    return EXIT_OK if ok else EXIT_DATA


def _cmd_export(a) -> int:
    inst = _load(a.instance)
    settings = SearchSettings(
        formulation=FORMULATIONS[a.formulation],
        setting="vi" if a.vi else "basic",
        closest_assignment=a.closest_assignment,
    )
    model, _ = prepare_model(inst, settings)
    _write(export_conic(model.program), a.output)
    return EXIT_OK


def _cmd_report(a) -> int:
    try:
        doc = json.loads(_read(a.report))
        report_from_dict(doc)
    except (json.JSONDecodeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    if a.pretty:
        _write(render_table(doc), a.output)
    else:
        lines = ["term,cost,percent"] + [f"{t},{c!r},{p!r}" for t, c, p in breakdown_rows(doc)]
        _write("\n".join(lines), a.output)
    return EXIT_OK


COMMANDS = {
    "generate": _cmd_generate,
    "solve": _cmd_solve,
    "oracle": _cmd_oracle,
    "verify": _cmd_verify,
    "export": _cmd_export,
    "report": _cmd_report,
}


def run(argv: Sequence[str] | None = None) -> int:
    """Execute one command and return its exit code; never raises."""
    try:
        a = build_parser().parse_args(argv)
        return COMMANDS[a.command](a)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_USAGE
    except InstanceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except SystemExit as exc:  # --help
        return EXIT_OK if not exc.code else EXIT_USAGE
    except Exception as exc:  # noqa: BLE001 - exit codes are total
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DATA


def main() -> None:
    sys.exit(run())
