"""Feasibility audit of a timetable against every model constraint.

Each check is evaluated directly on the times; nothing here goes through the
constraint graph, so the audit doubles as an independent check of the
scheduler. Constraint families carry the model's numeric ids
(``"2"`` ... ``"18"``), plus ``"linking"`` for open-track FIFO and
``"dispatch"`` for a prescribed first-station order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from railsched.events import (
    OVERTAKES,
    EventAssignment,
    LineAssignment,
    Precedes,
    budget_usage,
    has_clique,
    infer_line,
)
from railsched.model import Instance, Line, LineTimetable, Timetable, _check_shape


@dataclass(frozen=True)
class Violation:
    constraint: str
    line: int
    trains: tuple[int, ...]
    station: int
    slack: int

    def __str__(self) -> str:
        who = ",".join(map(str, self.trains))
        return f"constraint {self.constraint}: line {self.line} trains ({who}) station {self.station} slack {self.slack}"


@dataclass(frozen=True)
class AuditReport:
    violations: list[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def families(self) -> set[str]:
        return {v.constraint for v in self.violations}

    def __bool__(self) -> bool:
        return bool(self.violations)


def _audit_line(li: int, line: Line, lt: LineTimetable, la: LineAssignment | None) -> list[Violation]:
    out: list[Violation] = []
    arr, dep = lt.arrival, lt.departure

    def chk(family: str, trains: tuple[int, ...], s: int, slack: int) -> None:
        if slack < 0:
            out.append(Violation(family, li, trains, s, slack))

    for t, tr in enumerate(line.trains):
        for s in range(line.n_stations):
            chk("4", (t,), s, dep[t][s] - arr[t][s] - tr.dwell_min[s])
            chk("5", (t,), s, arr[t][s] + tr.dwell_max[s] - dep[t][s])
            chk("18", (t,), s, dep[t][s] - tr.earliest_departure[s])
            if s < line.last:
                chk("2", (t,), s, arr[t][s + 1] - dep[t][s] - tr.travel_min[s])
                chk("3", (t,), s, dep[t][s] + tr.travel_max[s] - arr[t][s + 1])

    if la is None:
        la = infer_line(line, arr, dep, strict=False)

    for (i, j) in line.pairs():
        for s, st in enumerate(line.stations):
            e = la.choices.get((i, j, s))
            if e is None:
                chk("12", (i, j), s, -1)
                continue
            sf = st.safety_time
            a, b = e.first, e.second
            if e.kind == OVERTAKES:
                chk("9", (a, b), s, arr[b][s] - arr[a][s] - sf)
                chk("10", (b, a), s, dep[a][s] - dep[b][s] - sf)
                if st.capacity < 2:
                    chk("13", (a, b), s, -1)
            else:
                chk("6", (a, b), s, arr[b][s] - arr[a][s] - sf)
                chk("7", (a, b), s, dep[b][s] - dep[a][s] - sf)
                clearance = arr[b][s] - dep[a][s] - sf
                if st.capacity < 2:
                    chk("13", (a, b), s, clearance)
                elif not la.y(a, b, s):
                    chk("15", (a, b), s, clearance)
        for s in range(line.last):
            e, f = la.choices.get((i, j, s)), la.choices.get((i, j, s + 1))
            if e is not None and f is not None and e.departs_first != f.arrives_first:
                chk("linking", (i, j), s, -1)

    for (a, b, s), v in la.overlaps.items():
        if v and (la.choices.get((min(a, b), max(a, b), s)) != Precedes(a, b)
                  or line.stations[s].capacity < 2):
            chk("17", (a, b), s, -1)

    for s, st in enumerate(line.stations):
        if st.capacity < 2:
            continue
        edges = {frozenset((i, j)) for (i, j, ss), e in la.choices.items()
                 if ss == s and e.kind == OVERTAKES}
        if edges:
            clique = has_clique(range(line.n_trains), edges, st.capacity + 1)
            if clique:
                chk("14", tuple(clique), s, -1)
        for t, partners in budget_usage(line, la, s).items():
            chk("16", (t,), s, st.capacity - 1 - len(partners))

    if line.dispatch_order is not None:
        order = line.dispatch_order
        for x in range(len(order)):
            for y in range(x + 1, len(order)):
                a, b = order[x], order[y]
                e = la.choices.get((min(a, b), max(a, b), 0))
                if e is not None and e != Precedes(a, b):
                    chk("dispatch", (a, b), 0, -1)
    return out


def audit_timetable(instance: Instance, timetable: Timetable,
                    assignment: EventAssignment | None = None) -> AuditReport:
    """Check every constraint; violations carry a negative slack.

    Without an assignment the events are read off the times, with overlap
    flags only where the times need them, so an empty report then means
    the timetable is feasible for the instance.
    """
    _check_shape(instance, timetable)
    out: list[Violation] = []
    for li, (line, lt) in enumerate(zip(instance.lines, timetable.lines)):
        la = assignment.lines[li] if assignment is not None else None
        out.extend(_audit_line(li, line, lt, la))
    return AuditReport(out)
