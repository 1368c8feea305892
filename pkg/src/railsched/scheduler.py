"""Exact evaluation of (partial) event assignments.

Once every binary is fixed, each model constraint is a difference
inequality ``time(v) >= time(u) + w``. The earliest feasible timetable is the
longest-path labelling from an origin fixed at zero; a positive cycle means
the assignment is infeasible.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from functools import lru_cache
from typing import Mapping, NamedTuple, Sequence

from railsched.events import (
    PRECEDES,
    EventAssignment,
    Key,
    Event,
    check_assignment,
)
from railsched.model import Instance, Line, LineTimetable, Timetable

NEG = -(1 << 60)
ORIGIN = 0


class Arc(NamedTuple):
    tail: int
    head: int
    weight: int
    label: str


def arr_node(line: Line, t: int, s: int) -> int:
    return 1 + 2 * (t * line.n_stations + s)


def dep_node(line: Line, t: int, s: int) -> int:
    return 2 + 2 * (t * line.n_stations + s)


def node_name(line: Line, v: int) -> str:
    if v == ORIGIN:
        return "origin"
    k, kind = divmod(v - 1, 2)
    t, s = divmod(k, line.n_stations)
    return f"{'c' if kind else 's'}[{t},{s}]"


class InvalidAssignment(ValueError):
    def __init__(self, violations):
        self.violations = violations
        super().__init__("; ".join(f"{v.kind} at {v.trains}/{v.station}" for v in violations))


@dataclass(frozen=True)
class ConstraintGraph:
    line: Line
    n_nodes: int
    arcs: tuple[Arc, ...]

    def adjacency(self) -> list[list[tuple[int, int]]]:
        adj: list[list[tuple[int, int]]] = [[] for _ in range(self.n_nodes)]
        for a in self.arcs:
            adj[a.tail].append((a.head, a.weight))
        return adj


@dataclass(frozen=True)
class ScheduleResult:
    line: Line
    times: tuple[int, ...] | None
    cycle_witness: tuple[Arc, ...] | None = None

    @property
    def feasible(self) -> bool:
        return self.times is not None

    @property
    def timetable(self) -> LineTimetable:
        if self.times is None:
            raise ValueError("infeasible assignment has no timetable")
        return times_to_line_timetable(self.line, self.times)

    @property
    def objective(self) -> int:
        if self.times is None:
            raise ValueError("infeasible assignment has no objective")
        return line_objective(self.line, self.times)


def times_to_line_timetable(line: Line, times: Sequence[int]) -> LineTimetable:
    S = line.n_stations
    arr = tuple(tuple(times[1 + 2 * (t * S + s)] for s in range(S)) for t in range(line.n_trains))
    dep = tuple(tuple(times[2 + 2 * (t * S + s)] for s in range(S)) for t in range(line.n_trains))
    return LineTimetable(arr, dep)


def line_objective(line: Line, times: Sequence[int]) -> int:
    S = line.n_stations
    return sum(times[2 + 2 * (t * S + S - 1)] for t in range(line.n_trains))


# --------------------------------------------------------------------------
# arc emission

@lru_cache(maxsize=256)
def train_arcs(line: Line) -> tuple[Arc, ...]:
    """Per-train chain of window arcs, anchored at a non-negative start."""
    arcs = []
    for t, tr in enumerate(line.trains):
        arcs.append(Arc(ORIGIN, arr_node(line, t, 0), 0, "domain"))
        for s in range(line.n_stations):
            a, c = arr_node(line, t, s), dep_node(line, t, s)
            arcs.append(Arc(ORIGIN, c, tr.earliest_departure[s], "18"))
            arcs.append(Arc(a, c, tr.dwell_min[s], "4"))
            arcs.append(Arc(c, a, -tr.dwell_max[s], "5"))
            if s < line.last:
                nxt = arr_node(line, t, s + 1)
                arcs.append(Arc(c, nxt, tr.travel_min[s], "2"))
                arcs.append(Arc(nxt, c, -tr.travel_max[s], "3"))
    return tuple(arcs)


@lru_cache(maxsize=256)
def base_adjacency(line: Line) -> tuple[tuple[tuple[int, int], ...], ...]:
    n = 1 + 2 * line.n_trains * line.n_stations
    adj: list[list[tuple[int, int]]] = [[] for _ in range(n)]
    for a in train_arcs(line):
        adj[a.tail].append((a.head, a.weight))
    return tuple(tuple(x) for x in adj)


def event_arcs(line: Line, e: Event, s: int, overlap: bool) -> list[Arc]:
    st = line.stations[s]
    sf = st.safety_time
    a, b = e.first, e.second
    if e.kind == PRECEDES:
        out = [
            Arc(arr_node(line, a, s), arr_node(line, b, s), sf, "6"),
            Arc(dep_node(line, a, s), dep_node(line, b, s), sf, "7"),
        ]
        if st.capacity < 2:
            out.append(Arc(dep_node(line, a, s), arr_node(line, b, s), sf, "13"))
        elif not overlap:
            out.append(Arc(dep_node(line, a, s), arr_node(line, b, s), sf, "15"))
        return out
    return [
        Arc(arr_node(line, a, s), arr_node(line, b, s), sf, "9"),
        Arc(dep_node(line, b, s), dep_node(line, a, s), sf, "10"),
    ]


def pairwise_arcs(line: Line, choices: Mapping[Key, Event], overlaps: Mapping[Key, bool],
                  overlap_default: bool = False) -> list[Arc]:
    arcs = []
    for key in sorted(choices):
        e = choices[key]
        s = key[2]
        y = overlaps.get((e.first, e.second, s), overlap_default) if e.kind == PRECEDES else False
        arcs.extend(event_arcs(line, e, s, bool(y)))
    return arcs


def build_line_graph(line: Line, choices: Mapping[Key, Event], overlaps: Mapping[Key, bool],
                     overlap_default: bool = False) -> ConstraintGraph:
    n = 1 + 2 * line.n_trains * line.n_stations
    arcs = train_arcs(line) + tuple(pairwise_arcs(line, choices, overlaps, overlap_default))
    return ConstraintGraph(line, n, arcs)


def build_graph(instance: Instance, assignment: EventAssignment, line: int = 0,
                overlap_default: bool = False, validate: bool = True) -> ConstraintGraph:
    """Difference-constraint graph of one line under a (partial) assignment.

    Undecided pairs contribute no pairwise arcs. An overlap flag absent from
    the assignment counts as ``overlap_default``.
    """
    if validate:
        sub = Instance((instance.lines[line],))
        viol = check_assignment(sub, EventAssignment((assignment.lines[line],)))
        if viol:
            raise InvalidAssignment(viol)
    la = assignment.lines[line]
    return build_line_graph(instance.lines[line], la.choices, la.overlaps, overlap_default)


# --------------------------------------------------------------------------
# longest paths

def propagate(n: int, base: Sequence[Sequence[tuple[int, int]]],
              extra: Mapping[int, list[tuple[int, int]]],
              dist: list[int], sources: Sequence[int]) -> bool:
    """Label-correcting longest paths, FIFO queue, warm-started from ``dist``.

    ``dist`` must hold values achievable in the graph (e.g. the labels of a
    subgraph). Returns False when some node is enqueued more than ``n``
    times, which certifies a positive cycle.
    """
    queue = deque(sources)
    inq = [False] * n
    for v in sources:
        inq[v] = True
    count = [0] * n
    get = extra.get
    while queue:
        u = queue.popleft()
        inq[u] = False
        du = dist[u]
        for v, w in base[u]:
            if du + w > dist[v]:
                dist[v] = du + w
                if not inq[v]:
                    count[v] += 1
                    if count[v] > n:
                        return False
                    inq[v] = True
                    queue.append(v)
        ex = get(u)
        if ex:
            for v, w in ex:
                if du + w > dist[v]:
                    dist[v] = du + w
                    if not inq[v]:
                        count[v] += 1
                        if count[v] > n:
                            return False
                        inq[v] = True
                        queue.append(v)
    return True


def positive_cycle(n: int, arcs: Sequence[Arc]) -> tuple[Arc, ...]:
    """Bellman-Ford with predecessor arcs; returns a positive cycle."""
    dist = [NEG] * n
    dist[ORIGIN] = 0
    pred: list[Arc | None] = [None] * n
    last = -1
    for _ in range(n):
        last = -1
        for a in arcs:
            if dist[a.tail] != NEG and dist[a.tail] + a.weight > dist[a.head]:
                dist[a.head] = dist[a.tail] + a.weight
                pred[a.head] = a
                last = a.head
        if last == -1:
            return ()
    v = last
    for _ in range(n):
        v = pred[v].tail
    cycle = []
    u = v
    while True:
        a = pred[u]
        cycle.append(a)
        u = a.tail
        if u == v:
            break
    cycle.reverse()
    return tuple(cycle)


def earliest_schedule(graph: ConstraintGraph) -> ScheduleResult:
    """Componentwise-minimal timetable, or a positive-cycle witness."""
    n = graph.n_nodes
    dist = [NEG] * n
    dist[ORIGIN] = 0
    ok = propagate(n, graph.adjacency(), {}, dist, [ORIGIN])
    if not ok:
        return ScheduleResult(graph.line, None, positive_cycle(n, graph.arcs))
    return ScheduleResult(graph.line, tuple(dist))


def solve_line_times(line: Line, choices: Mapping[Key, Event], overlaps: Mapping[Key, bool],
                     overlap_default: bool = False) -> list[int] | None:
    """Fast path used by search: base chains cached, pairwise arcs added."""
    n = 1 + 2 * line.n_trains * line.n_stations
    extra: dict[int, list[tuple[int, int]]] = {}
    for a in pairwise_arcs(line, choices, overlaps, overlap_default):
        extra.setdefault(a.tail, []).append((a.head, a.weight))
    dist = [NEG] * n
    dist[ORIGIN] = 0
    if not propagate(n, base_adjacency(line), extra, dist, [ORIGIN]):
        return None
    return dist


def lower_bound(instance: Instance, assignment: EventAssignment) -> int | None:
    """Objective of the earliest schedule with undecided pairs dropped.

    Overlap flags absent from the assignment are treated as undecided, i.e.
    permitted. Returns None when the decided part is already infeasible.
    """
    total = 0
    for line, la in zip(instance.lines, assignment.lines):
        times = solve_line_times(line, la.choices, la.overlaps, overlap_default=True)
        if times is None:
            return None
        total += line_objective(line, times)
    return total


def schedule_assignment(instance: Instance, assignment: EventAssignment,
                        overlap_default: bool = False) -> Timetable | None:
    """Earliest timetable of every line; None if any line is infeasible."""
    lines = []
    for line, la in zip(instance.lines, assignment.lines):
        times = solve_line_times(line, la.choices, la.overlaps, overlap_default)
        if times is None:
            return None
        lines.append(times_to_line_timetable(line, times))
    return Timetable(tuple(lines))
