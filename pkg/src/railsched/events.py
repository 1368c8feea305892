"""The four-event structure between two trains at a station.

For an unordered pair ``{a, b}`` at a station exactly one event holds:

* ``Precedes(a, b)``: ``a`` arrives and departs before ``b``.
* ``Overtakes(a, b)``: ``a`` arrives first but ``b`` departs first, i.e.
  ``b`` overtakes ``a`` inside the station.

Choices are keyed by ``(i, j, s)`` with ``i < j``; overlap flags by the
ordered ``(a, b, s)`` of a ``Precedes(a, b)`` event.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, Mapping, NamedTuple

from railsched.model import Instance, Line, Timetable

PRECEDES = "precedes"
OVERTAKES = "overtakes"


class Event(NamedTuple):
    kind: str
    first: int
    second: int

    @property
    def arrives_first(self) -> int:
        return self.first

    @property
    def departs_first(self) -> int:
        return self.first if self.kind == PRECEDES else self.second

    @property
    def pair(self) -> tuple[int, int]:
        return (min(self.first, self.second), max(self.first, self.second))

    @property
    def overtaker(self) -> int | None:
        return self.second if self.kind == OVERTAKES else None

    def __str__(self) -> str:
        name = "Precedes" if self.kind == PRECEDES else "Overtakes"
        return f"{name}({self.first},{self.second})"


def Precedes(a: int, b: int) -> Event:
    return Event(PRECEDES, a, b)


def Overtakes(a: int, b: int) -> Event:
    """``b`` arrives after ``a`` and departs before it."""
    return Event(OVERTAKES, a, b)


def all_choices(i: int, j: int) -> tuple[Event, ...]:
    """Canonical branching order for the pair ``i < j``."""
    return (Precedes(i, j), Precedes(j, i), Overtakes(i, j), Overtakes(j, i))


Key = tuple[int, int, int]


@dataclass(frozen=True)
class LineAssignment:
    choices: Mapping[Key, Event] = field(default_factory=dict)
    overlaps: Mapping[Key, bool] = field(default_factory=dict)

    def y(self, a: int, b: int, s: int) -> bool:
        return bool(self.overlaps.get((a, b, s), False))


@dataclass(frozen=True)
class EventAssignment:
    lines: tuple[LineAssignment, ...]

    @classmethod
    def single(cls, choices: Mapping[Key, Event], overlaps: Mapping[Key, bool] | None = None):
        return cls((LineAssignment(dict(choices), dict(overlaps or {})),))

    def choice(self, line: int, i: int, j: int, s: int) -> Event | None:
        return self.lines[line].choices.get((min(i, j), max(i, j), s))

    def effective(self) -> "EventAssignment":
        """Drop overlap flags that are false."""
        return EventAssignment(tuple(
            LineAssignment(dict(la.choices), {k: True for k, v in la.overlaps.items() if v})
            for la in self.lines
        ))


@dataclass(frozen=True)
class FixedVariableMask:
    """Overtakes banned before search, plus fixed first-station precedences.

    ``forbidden`` holds ``(line, overtaker, overtaken, station)``;
    ``fixed`` maps ``(line, i, j, station)`` to a forced event.
    """

    forbidden: frozenset = frozenset()
    fixed: Mapping[tuple[int, int, int, int], Event] = field(default_factory=dict)

    def bans(self, line: int, event: Event, s: int) -> bool:
        return event.kind == OVERTAKES and (line, event.second, event.first, s) in self.forbidden

    def line_forbidden(self, line: int) -> set[tuple[int, int, int]]:
        return {(ov, od, s) for (l, ov, od, s) in self.forbidden if l == line}

    def line_fixed(self, line: int) -> dict[Key, Event]:
        return {(i, j, s): e for (l, i, j, s), e in self.fixed.items() if l == line}

    def union(self, other: "FixedVariableMask") -> "FixedVariableMask":
        fixed = dict(self.fixed)
        fixed.update(other.fixed)
        return FixedVariableMask(self.forbidden | other.forbidden, fixed)


EMPTY_MASK = FixedVariableMask()


def dispatch_mask(instance: Instance) -> FixedVariableMask:
    """First-station precedences implied by each line's dispatch order."""
    fixed = {}
    for li, line in enumerate(instance.lines):
        if line.dispatch_order is None:
            continue
        order = line.dispatch_order
        for x in range(len(order)):
            for y in range(x + 1, len(order)):
                a, b = order[x], order[y]
                fixed[(li, min(a, b), max(a, b), 0)] = Precedes(a, b)
    return FixedVariableMask(frozenset(), fixed)


class EmptyChoiceSet(Exception):
    pass


class AmbiguousOrder(ValueError):
    pass


@dataclass(frozen=True)
class StructuralViolation:
    kind: str
    line: int
    trains: tuple[int, ...]
    station: int
    detail: str = ""


# --------------------------------------------------------------------------
# allowed choices

def line_allowed(line: Line, forbidden: set, fixed: Mapping[Key, Event],
                 choices: Mapping[Key, Event], i: int, j: int, s: int) -> list[Event]:
    """Choices for ``(i, j, s)`` that the capacity and mask admit, given decided FIFO links."""
    key = (i, j, s)
    if key in fixed:
        cands = [fixed[key]]
    else:
        cands = list(all_choices(i, j))
    out = []
    cap = line.stations[s].capacity
    prev = choices.get((i, j, s - 1)) if s > 0 else None
    nxt = choices.get((i, j, s + 1)) if s < line.last else None
    for e in cands:
        if e.kind == OVERTAKES:
            if cap < 2 or (e.second, e.first, s) in forbidden:
                continue
        if prev is not None and prev.departs_first != e.arrives_first:
            continue
        if nxt is not None and e.departs_first != nxt.arrives_first:
            continue
        out.append(e)
    return out


def allowed_choices(instance: Instance, mask: FixedVariableMask, pair: tuple[int, int], station: int,
                    assignment: EventAssignment | None = None, line: int = 0) -> list[Event]:
    i, j = min(pair), max(pair)
    ln = instance.lines[line]
    choices = assignment.lines[line].choices if assignment is not None else {}
    out = line_allowed(ln, mask.line_forbidden(line), mask.line_fixed(line), choices, i, j, station)
    if not out:
        raise EmptyChoiceSet(f"no admissible event for pair {(i, j)} at station {station}")
    return out


# --------------------------------------------------------------------------
# structural checks

def has_clique(vertices: Iterable[int], edges: set[frozenset], size: int) -> list[int] | None:
    """Return a clique with ``size`` vertices in the undirected graph, if any."""
    verts = sorted(vertices)
    nbrs = {v: {u for u in verts if frozenset((u, v)) in edges} for v in verts}

    def extend(clique: list[int], cands: list[int]) -> list[int] | None:
        if len(clique) == size:
            return clique
        for k, v in enumerate(cands):
            if len(clique) + len(cands) - k < size:
                return None
            found = extend(clique + [v], [u for u in cands[k + 1:] if u in nbrs[v]])
            if found:
                return found
        return None

    return extend([], [v for v in verts if len(nbrs[v]) >= size - 1])


def budget_usage(line: Line, la: LineAssignment, s: int) -> dict[int, set[int]]:
    """Partners of each train that share station ``s`` with it (overtake or overlap)."""
    partners: dict[int, set[int]] = {t: set() for t in range(line.n_trains)}
    for (i, j, st), e in la.choices.items():
        if st == s and e.kind == OVERTAKES:
            partners[i].add(j)
            partners[j].add(i)
    for (a, b, st), v in la.overlaps.items():
        if st == s and v:
            partners[a].add(b)
            partners[b].add(a)
    return partners


def check_line(line: Line, la: LineAssignment, li: int = 0, require_complete: bool = False,
               forbidden: set | None = None) -> list[StructuralViolation]:
    out: list[StructuralViolation] = []
    for (i, j, s), e in la.choices.items():
        if not (i < j and {e.first, e.second} == {i, j}) or not (0 <= s < line.n_stations):
            out.append(StructuralViolation("malformed", li, (i, j), s, f"{e} stored under {(i, j, s)}"))
            continue
        if e.kind == OVERTAKES:
            if line.stations[s].capacity < 2:
                out.append(StructuralViolation("overtake-at-capacity-1", li, (e.first, e.second), s))
            if forbidden and (e.second, e.first, s) in forbidden:
                out.append(StructuralViolation("masked", li, (e.first, e.second), s))
    for (a, b, s), v in la.overlaps.items():
        if not v:
            continue
        e = la.choices.get((min(a, b), max(a, b), s))
        if e != Precedes(a, b) or line.stations[s].capacity < 2:
            out.append(StructuralViolation("overlap-without-precedence", li, (a, b), s))
    for s, st in enumerate(line.stations):
        if st.capacity < 2:
            continue
        edges = {frozenset((i, j)) for (i, j, ss), e in la.choices.items()
                 if ss == s and e.kind == OVERTAKES}
        if edges:
            clique = has_clique(range(line.n_trains), edges, st.capacity + 1)
            if clique:
                out.append(StructuralViolation("clique", li, tuple(clique), s,
                                               f"{st.capacity + 1} trains pairwise overtaking"))
        for t, ps in budget_usage(line, la, s).items():
            if len(ps) > st.capacity - 1:
                out.append(StructuralViolation("budget", li, (t, *sorted(ps)), s,
                                               f"{len(ps)} partners > {st.capacity - 1}"))
    for (i, j) in line.pairs():
        for s in range(line.last):
            e, f = la.choices.get((i, j, s)), la.choices.get((i, j, s + 1))
            if e is not None and f is not None and e.departs_first != f.arrives_first:
                out.append(StructuralViolation("linking", li, (i, j), s,
                                               f"{e} at {s} then {f} at {s + 1}"))
        if require_complete:
            for s in range(line.n_stations):
                if (i, j, s) not in la.choices:
                    out.append(StructuralViolation("incomplete", li, (i, j), s))
    return out


def check_assignment(instance: Instance, assignment: EventAssignment,
                     require_complete: bool = False,
                     mask: FixedVariableMask | None = None) -> list[StructuralViolation]:
    """Every breached structural invariant; an empty list means consistent."""
    out = []
    for li, (line, la) in enumerate(zip(instance.lines, assignment.lines)):
        forbidden = mask.line_forbidden(li) if mask is not None else None
        out.extend(check_line(line, la, li, require_complete, forbidden))
    return out


# --------------------------------------------------------------------------
# inference from times

def infer_line(line: Line, arr: list | tuple, dep: list | tuple, strict: bool = True) -> LineAssignment:
    choices: dict[Key, Event] = {}
    overlaps: dict[Key, bool] = {}
    for (i, j) in line.pairs():
        for s, st in enumerate(line.stations):
            ai, aj, di, dj = arr[i][s], arr[j][s], dep[i][s], dep[j][s]
            if strict and (ai == aj or di == dj):
                raise AmbiguousOrder(f"trains {i} and {j} tie at station {s}")
            a, b = (i, j) if ai <= aj else (j, i)
            if dep[a][s] <= dep[b][s]:
                e = Precedes(a, b)
                if st.capacity >= 2 and arr[b][s] < dep[a][s] + st.safety_time:
                    overlaps[(a, b, s)] = True
            else:
                e = Overtakes(a, b)
            choices[(i, j, s)] = e
    return LineAssignment(choices, overlaps)


def infer_assignment(instance: Instance, timetable: Timetable, strict: bool = True) -> EventAssignment:
    """Read the event of every pair and station off a timetable.

    An overlap flag is set only where it is needed, i.e. where the follower
    enters before the leader's departure plus the safety time.
    """
    return EventAssignment(tuple(
        infer_line(line, lt.arrival, lt.departure, strict)
        for line, lt in zip(instance.lines, timetable.lines)
    ))


def subset_form_ok(n_trains: int, edges: set[frozenset], capacity: int) -> bool:
    """Literal subset family of the overtake-capacity rows; exponential, for tests."""
    k = capacity + 1
    rhs = k * (k - 1) // 2 - 1
    for combo in itertools.combinations(range(n_trains), k):
        lhs = sum(1 for p in itertools.combinations(combo, 2) if frozenset(p) in edges)
        if lhs > rhs:
            return False
    return True
