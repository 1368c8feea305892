"""Command-line interface.

Exit codes: 0 success, 1 infeasible or violations found, 2 usage or input
error, 3 budget exhausted (the best incumbent is still reported).
"""

from __future__ import annotations

import argparse
import io
import json
import logging
import math
import os
import sys
from dataclasses import dataclass
from typing import Sequence

from railsched.audit import audit_timetable
from railsched.bnb import BUDGET_EXHAUSTED, INFEASIBLE, SolverConfig, TooLarge, brute_force_optimum, solve
from railsched.interchange.generator import GeneratorOptions, generate_instance
from railsched.interchange.io import (
    InstanceSyntaxError,
    TimetableFormatError,
    load_instance,
    read_timetable_csv,
    write_timetable_csv,
)
from railsched.interchange.lpformat import DEFAULT_SUBSET_CEILING, export_mip
from railsched.interchange.svg import EmptyTimetable, render_time_distance_svg
from railsched.lagrangian import LRConfig, run_lr
from railsched.model import InstanceValidationError
from railsched.rules import apply_rules

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_USAGE = 2
EXIT_BUDGET = 3

log = logging.getLogger("railsched")


class _UsageError(Exception):
    pass


@dataclass(frozen=True)
class CommandOutcome:
    exit_code: int
    stdout: str
    stderr: str


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        raise _UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def _num(x: float | int | None):
    """JSON-safe number: integral floats become ints, infinities become null."""
    if x is None or (isinstance(x, float) and math.isinf(x)):
        return None
    if isinstance(x, float) and x.is_integer():
        return int(x)
    return x


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def _write(path: str | None, text: str, out: io.StringIO) -> None:
    if path is None or path == "-":
        out.write(text)
    else:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="railsched", description="Train timetabling with station overtaking and capacities.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="write a seeded corridor instance")
    g.add_argument("--seed", type=int, required=True)
    g.add_argument("--trains", type=int, default=6)
    g.add_argument("--stations", type=int, default=12)
    g.add_argument("--headway", type=int, default=480)
    g.add_argument("--max-capacity", type=int, default=3)
    g.add_argument("-o", "--output")

    s = sub.add_parser("solve", help="optimal timetable by branch and bound")
    s.add_argument("instance")
    s.add_argument("--rules", action="store_true", help="ban overtakes the parameter rules rule out")
    s.add_argument("--node-budget", type=int)
    s.add_argument("--time-budget", type=float)
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--json", action="store_true")
    s.add_argument("--timing", action="store_true", help="include wall-clock fields in --json output")
    s.add_argument("-o", "--output", help="timetable CSV path")

    b = sub.add_parser("bound", help="Lagrangian lower bound")
    b.add_argument("instance")
    b.add_argument("--iterations", type=int, default=25)
    b.add_argument("--node-budget", type=int, default=50_000)
    b.add_argument("--json", action="store_true")

    c = sub.add_parser("check", help="audit a timetable CSV")
    c.add_argument("instance")
    c.add_argument("timetable")
    c.add_argument("--json", action="store_true")

    e = sub.add_parser("export-mip", help="write the model in LP format")
    e.add_argument("instance")
    e.add_argument("--rules", action="store_true")
    e.add_argument("--subset-ceiling", type=int, default=DEFAULT_SUBSET_CEILING)
    e.add_argument("-o", "--output")

    pl = sub.add_parser("plot", help="time-distance diagram as SVG")
    pl.add_argument("instance")
    pl.add_argument("timetable")
    pl.add_argument("-o", "--output")

    o = sub.add_parser("oracle", help="exhaustive optimum for tiny instances")
    o.add_argument("instance")
    o.add_argument("--json", action="store_true")
    return p


def _cmd_generate(a, out, err) -> int:
    try:
        opts = GeneratorOptions(seed=a.seed, trains=a.trains, stations=a.stations,
                                base_headway_s=a.headway, max_capacity=a.max_capacity)
    except ValueError as exc:
        raise _UsageError(str(exc)) from None
    _write(a.output, json.dumps(generate_instance(opts), indent=2) + "\n", out)
    return EXIT_OK


def _cmd_solve(a, out, err) -> int:
    inst = load_instance(a.instance)
    if a.workers < 1:
        raise _UsageError("--workers must be >= 1")
    try:
        cfg = SolverConfig(node_budget=a.node_budget, time_budget=a.time_budget,
                           use_rules_mask=a.rules, deterministic=a.workers == 1, workers=a.workers)
    except ValueError as exc:
        raise _UsageError(str(exc)) from None
    res = solve(inst, config=cfg)
    st = res.stats
    if a.json:
        trace = []
        for entry in st.gap_trace:
            row = {"nodes": entry.nodes, "ub": _num(entry.ub), "lb": _num(entry.lb)}
            if a.timing:
                row["time"] = entry.time
            trace.append(row)
        doc = {"objective": res.objective, "status": st.status, "opened_nodes": st.opened_nodes,
               "lower_bound": _num(res.lower_bound), "gap_trace": trace, "rules": a.rules}
        if a.timing:
            doc["wall_time"] = st.wall_time
            doc["xi"] = st.xi
        out.write(_dump(doc))
    else:
        out.write(f"objective: {res.objective if res.objective is not None else 'none'}\n")
        out.write(f"status: {st.status}\n")
        out.write(f"opened_nodes: {st.opened_nodes}\n")
        out.write(f"wall_time: {st.wall_time:.3f}\n")
        out.write(f"xi: {st.xi:.6f}\n")
        out.write("gap_trace (nodes ub lb):\n")
        for entry in st.gap_trace:
            out.write(f"  {entry.nodes} {_num(entry.ub)} {_num(entry.lb)}\n")
    if res.timetable is not None and a.output:
        _write(a.output, write_timetable_csv(inst, res.timetable), out)
    if st.status == INFEASIBLE or res.objective is None and st.status != BUDGET_EXHAUSTED:
        err.write("instance is infeasible\n")
        return EXIT_FAIL
    if st.status == BUDGET_EXHAUSTED:
        err.write("budget exhausted before optimality was proven\n")
        return EXIT_BUDGET
    return EXIT_OK


def _cmd_bound(a, out, err) -> int:
    inst = load_instance(a.instance)
    if a.iterations < 1:
        raise _UsageError("--iterations must be >= 1")
    tr = run_lr(inst, LRConfig(max_iterations=a.iterations, node_budget=a.node_budget))
    if a.json:
        out.write(_dump({
            "rmip": tr.rmip, "ub": _num(tr.ub), "best_bound": _num(tr.best_bound),
            "iterations": len(tr.iterations), "stop_reason": tr.stop_reason,
            "bounds": [_num(x) for x in tr.bounds],
            "steps": [_num(it.step) for it in tr.iterations],
        }))
    else:
        out.write(f"rmip: {tr.rmip}\nub: {_num(tr.ub)}\nbest_bound: {_num(tr.best_bound)}\n"
                  f"iterations: {len(tr.iterations)}\nstop_reason: {tr.stop_reason}\n")
    return EXIT_OK


def _cmd_check(a, out, err) -> int:
    inst = load_instance(a.instance)
    with open(a.timetable, encoding="utf-8") as fh:
        tt = read_timetable_csv(inst, fh.read())
    rep = audit_timetable(inst, tt)
    if a.json:
        out.write(_dump({"ok": rep.ok, "violations": [
            {"constraint": v.constraint, "line": v.line, "trains": list(v.trains),
             "station": v.station, "slack": v.slack} for v in rep.violations]}))
    elif rep.ok:
        out.write("ok: no violations\n")
    else:
        out.write(f"{len(rep.violations)} violation(s)\n")
        for v in rep.violations:
            out.write(f"  {v}\n")
    return EXIT_OK if rep.ok else EXIT_FAIL


def _cmd_export(a, out, err) -> int:
    import warnings

    inst = load_instance(a.instance)
    mask = apply_rules(inst) if a.rules else None
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        text = export_mip(inst, mask, a.subset_ceiling)
    for w in caught:
        err.write(f"warning: {w.message}\n")
    _write(a.output, text, out)
    return EXIT_OK


def _cmd_plot(a, out, err) -> int:
    import warnings

    inst = load_instance(a.instance)
    with open(a.timetable, encoding="utf-8") as fh:
        tt = read_timetable_csv(inst, fh.read())
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        svg = render_time_distance_svg(inst, tt)
    for w in caught:
        err.write(f"warning: {w.message}\n")
    _write(a.output, svg, out)
    return EXIT_OK


def _cmd_oracle(a, out, err) -> int:
    inst = load_instance(a.instance)
    try:
        res = brute_force_optimum(inst)
    except TooLarge as exc:
        raise _UsageError(str(exc)) from None
    if a.json:
        out.write(_dump({"objective": res.objective, "status": res.stats.status}))
    else:
        out.write(f"objective: {res.objective if res.objective is not None else 'none'}\n"
                  f"status: {res.stats.status}\n")
    return EXIT_OK if res.objective is not None else EXIT_FAIL


COMMANDS = {
    "generate": _cmd_generate,
    "solve": _cmd_solve,
    "bound": _cmd_bound,
    "check": _cmd_check,
    "export-mip": _cmd_export,
    "plot": _cmd_plot,
    "oracle": _cmd_oracle,
}


def _configure_logging() -> None:
    level = os.environ.get("RAILSCHED_LOG")
    if not level:
        return
    value = getattr(logging, level.upper(), None)
    if not isinstance(value, int):
        try:
            value = int(level)
        except ValueError:
            value = logging.INFO
    logging.basicConfig(level=value, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")


def run(argv: Sequence[str] | None = None) -> CommandOutcome:
    """Execute one command and capture its outputs."""
    out, err = io.StringIO(), io.StringIO()
    try:
        args = build_parser().parse_args(list(argv) if argv is not None else None)
        code = COMMANDS[args.command](args, out, err)
    except _UsageError as exc:
        err.write(f"{exc}\n")
        code = EXIT_USAGE
    except (InstanceSyntaxError, TimetableFormatError, EmptyTimetable, OSError) as exc:
        err.write(f"error: {exc}\n")
        code = EXIT_USAGE
    except InstanceValidationError as exc:
        err.write("invalid instance:\n")
        for issue in exc.issues:
            err.write(f"  {issue.path}: {issue.code}: {issue.message}\n")
        code = EXIT_USAGE
    return CommandOutcome(code, out.getvalue(), err.getvalue())


def main(argv: Sequence[str] | None = None) -> int:
    _configure_logging()
    res = run(argv)
    sys.stdout.write(res.stdout)
    sys.stderr.write(res.stderr)
    return res.exit_code


if __name__ == "__main__":
    sys.exit(main())
