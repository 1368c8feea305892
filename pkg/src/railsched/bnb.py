"""Best-first branch-and-bound over the event choices of every train pair.

A node fixes some events (and some overlap flags). Its bound is the
objective of the earliest schedule with only the decided events' arcs, which
relaxes every completion. When the relaxed schedule already respects all
undecided pairs it is feasible, hence optimal for the subtree; otherwise the
earliest conflicting pair (or overlap flag) is branched on.
"""

from __future__ import annotations

import heapq
import itertools
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Mapping

from railsched.events import (
    OVERTAKES,
    PRECEDES,
    EMPTY_MASK,
    Event,
    EventAssignment,
    FixedVariableMask,
    Key,
    LineAssignment,
    Overtakes,
    Precedes,
    dispatch_mask,
    has_clique,
    line_allowed,
)
from railsched.model import Instance, Line, Timetable
from railsched.rules import InfeasibleTotalOrder, lexicographic_line
from railsched.scheduler import (
    NEG,
    ORIGIN,
    base_adjacency,
    build_line_graph,
    earliest_schedule,
    event_arcs,
    line_objective,
    propagate,
    times_to_line_timetable,
)

log = logging.getLogger(__name__)

OPTIMAL = "optimal"
BUDGET_EXHAUSTED = "budget_exhausted"
INFEASIBLE = "infeasible"

TRACE_EVERY = 64


class Infeasible(Exception):
    pass


class TooLarge(ValueError):
    pass


@dataclass(frozen=True)
class SolverConfig:
    node_budget: int | None = None
    time_budget: float | None = None
    use_rules_mask: bool = False
    deterministic: bool = True
    gap_tolerance: float = 0.0
    workers: int = 1

    def __post_init__(self) -> None:
        if self.node_budget is not None and self.node_budget <= 0:
            raise ValueError("node_budget must be positive")
        if self.time_budget is not None and self.time_budget <= 0:
            raise ValueError("time_budget must be positive")
        if self.gap_tolerance < 0:
            raise ValueError("gap_tolerance must be >= 0")


@dataclass(frozen=True)
class TraceEntry:
    time: float
    nodes: int
    ub: float
    lb: float


@dataclass
class SearchStats:
    opened_nodes: int = 0
    wall_time: float = 0.0
    gap_trace: list[TraceEntry] = field(default_factory=list)
    status: str = OPTIMAL

    @property
    def xi(self) -> float:
        return self.wall_time / self.opened_nodes if self.opened_nodes else 0.0


@dataclass
class SolveResult:
    objective: int | None
    timetable: Timetable | None
    assignment: EventAssignment | None
    stats: SearchStats
    lower_bound: float = 0.0


# --------------------------------------------------------------------------
# per-line search

@dataclass
class _Node:
    choices: dict
    ydec: dict
    dist: list
    bound: float
    depth: int = 0
    off: frozenset = frozenset()
    offcost: float = 0.0


@dataclass
class _LineOutcome:
    objective: int | None
    times: list | None
    assignment: LineAssignment | None
    status: str
    opened: int
    lower_bound: float
    trace: list


class _LineSearch:
    def __init__(self, line: Line, forbidden: set, fixed: Mapping[Key, Event],
                 config: SolverConfig, deadline: float | None,
                 on_trace: Callable[[int, float, float], None] | None = None,
                 pair_cost: Mapping[tuple[int, int], float] | None = None):
        self.line = line
        # Lagrangian subproblems may leave a whole pair without any event at
        # a price; ``pair_cost`` maps such pairs to that price.
        self.pair_cost = dict(pair_cost or {})
        self.forbidden = forbidden
        self.fixed = dict(fixed)
        self.config = config
        self.deadline = deadline
        self.on_trace = on_trace
        self.S = line.n_stations
        self.n = 1 + 2 * line.n_trains * line.n_stations
        self.pairs = line.pairs()
        self.base = base_adjacency(line)
        self.opened = 0
        self.trace: list = []

    # -- helpers ---------------------------------------------------------
    def allowed(self, choices: dict, key: Key) -> list[Event]:
        i, j, s = key
        return line_allowed(self.line, self.forbidden, self.fixed, choices, i, j, s)

    def extra_adj(self, choices: dict, ydec: dict) -> dict:
        extra: dict[int, list] = {}
        line = self.line
        for (i, j, s), e in choices.items():
            y = ydec.get((e.first, e.second, s), True) if e.kind == PRECEDES else False
            for a in event_arcs(line, e, s, y):
                extra.setdefault(a.tail, []).append((a.head, a.weight))
        return extra

    def unit_propagate(self, choices: dict, start: list[Key]) -> list[Key] | None:
        """Decide every neighbour left with a single admissible event."""
        added: list[Key] = []
        stack = list(start)
        while stack:
            i, j, s = stack.pop()
            for s2 in (s - 1, s + 1):
                if not 0 <= s2 < self.S or (i, j, s2) in choices:
                    continue
                opts = self.allowed(choices, (i, j, s2))
                if not opts:
                    return None
                if len(opts) == 1:
                    choices[(i, j, s2)] = opts[0]
                    added.append((i, j, s2))
                    stack.append((i, j, s2))
        return added

    def evaluate(self, parent_dist: list | None, choices: dict, ydec: dict,
                 new_keys: list[Key], new_y: list[Key]) -> list | None:
        self.opened += 1
        line = self.line
        extra = self.extra_adj(choices, ydec)
        if parent_dist is None:
            dist = [NEG] * self.n
            dist[ORIGIN] = 0
            sources = [ORIGIN]
        else:
            dist = list(parent_dist)
            sources = set()
            for (i, j, s) in new_keys:
                e = choices[(i, j, s)]
                y = ydec.get((e.first, e.second, s), True) if e.kind == PRECEDES else False
                sources.update(a.tail for a in event_arcs(line, e, s, y))
            for (a, b, s) in new_y:
                if not ydec[(a, b, s)]:
                    sources.add(2 + 2 * (a * self.S + s))
            sources = sorted(sources)
        if not propagate(self.n, self.base, extra, dist, sources):
            return None
        return dist

    # -- conflict analysis ---------------------------------------------------
    def analyze(self, node: _Node):
        """Return ("leaf", assignment) or ("pair", key) / ("y", key) / ("dead", None)."""
        line, S, d = self.line, self.S, node.dist
        choices = node.choices
        conflicts = []
        full = dict(choices)
        for s, st in enumerate(line.stations):
            sf = st.safety_time
            for p, (i, j) in enumerate(self.pairs):
                key = (i, j, s)
                if key in choices or (i, j) in node.off:
                    continue
                ai, aj = d[1 + 2 * (i * S + s)], d[1 + 2 * (j * S + s)]
                di, dj = d[2 + 2 * (i * S + s)], d[2 + 2 * (j * S + s)]
                when = min(ai, aj)
                if ai == aj or di == dj:
                    conflicts.append((when, s, p, key))
                    full[key] = Precedes(i, j)
                    continue
                a, b = (i, j) if ai < aj else (j, i)
                arr_a, arr_b = min(ai, aj), max(ai, aj)
                dep_a, dep_b = (di, dj) if a == i else (dj, di)
                ok = arr_b - arr_a >= sf
                if dep_a < dep_b:
                    e = Precedes(a, b)
                    ok = ok and dep_b - dep_a >= sf
                    if st.capacity < 2:
                        ok = ok and arr_b - dep_a >= sf
                else:
                    e = Overtakes(a, b)
                    ok = ok and dep_a - dep_b >= sf
                if ok and e not in self.allowed(choices, key):
                    ok = False
                full[key] = e
                if not ok:
                    conflicts.append((when, s, p, key))
        # open-track FIFO between consecutive stations
        for p, (i, j) in enumerate(self.pairs):
            if (i, j) in node.off:
                continue
            for s in range(S - 1):
                e, f = full[(i, j, s)], full[(i, j, s + 1)]
                if e.departs_first != f.arrives_first:
                    key = (i, j, s) if (i, j, s) not in choices else (i, j, s + 1)
                    if key in choices:
                        return ("dead", None)
                    ks = key[2]
                    when = min(d[1 + 2 * (i * S + ks)], d[1 + 2 * (j * S + ks)])
                    conflicts.append((when, ks, p, key))
        if conflicts:
            return ("pair", min(conflicts)[3])

        # capacity: overtake cliques and per-train budgets
        overlaps = {}
        y_candidates = {}
        for (i, j, s), e in full.items():
            st = line.stations[s]
            if e.kind != PRECEDES or st.capacity < 2:
                continue
            a, b = e.first, e.second
            yd = node.ydec.get((a, b, s))
            if yd is False:
                continue
            if d[1 + 2 * (b * S + s)] < d[2 + 2 * (a * S + s)] + st.safety_time:
                overlaps[(a, b, s)] = True
                if yd is None:
                    y_candidates[(a, b, s)] = True
        pair_index = {pr: k for k, pr in enumerate(self.pairs)}
        for s, st in enumerate(line.stations):
            if st.capacity < 2:
                continue
            partners: dict[int, list] = {t: [] for t in range(line.n_trains)}
            edges = set()
            for (i, j) in self.pairs:
                e = full.get((i, j, s))
                if e is not None and e.kind == OVERTAKES:
                    partners[i].append(("pair", (i, j, s)))
                    partners[j].append(("pair", (i, j, s)))
                    edges.add(frozenset((i, j)))
            for (a, b, ss) in overlaps:
                if ss == s:
                    partners[a].append(("y", (a, b, s)))
                    partners[b].append(("y", (a, b, s)))
            involved = []
            if edges:
                clique = has_clique(range(line.n_trains), edges, st.capacity + 1)
                if clique:
                    involved.extend(("pair", (min(u, v), max(u, v), s))
                                    for u, v in itertools.combinations(clique, 2))
            for t, items in partners.items():
                if len(items) > st.capacity - 1:
                    involved.extend(items)
            if not involved:
                continue
            free_pairs = [k for kind, k in involved if kind == "pair" and k not in choices]
            if not free_pairs:
                free_pairs = [(min(a, b), max(a, b), ss) for kind, (a, b, ss) in involved
                              if kind == "y" and (min(a, b), max(a, b), ss) not in choices]
            if free_pairs:
                k = min(free_pairs, key=lambda k: (k[2], pair_index[(k[0], k[1])]))
                return ("pair", k)
            free_y = sorted(k for kind, k in involved if kind == "y" and k in y_candidates)
            if free_y:
                return ("y", free_y[0])
            return ("dead", None)
        return ("leaf", LineAssignment(full, overlaps))

    # -- main loop -----------------------------------------------------------
    def run(self, incumbent: int | None, incumbent_assign: LineAssignment | None,
            incumbent_times: list | None) -> _LineOutcome:
        cfg = self.config
        t0 = time.perf_counter()
        best = incumbent if incumbent is not None else math.inf
        best_assign, best_times = incumbent_assign, incumbent_times

        def prunable(bound: float) -> bool:
            if best == math.inf:
                return False
            return bound >= best - cfg.gap_tolerance * abs(best)

        choices: dict = {}
        seeds = []
        for key, e in self.fixed.items():
            choices[key] = e
            seeds.append(key)
        pinned = {(i, j) for (i, j, _) in self.fixed}
        off = frozenset(p for p, c in self.pair_cost.items() if c <= 0 and p not in pinned)
        offcost = sum(self.pair_cost[p] for p in off)
        for (i, j) in self.pairs:
            if (i, j) in off:
                continue
            for s in range(self.S):
                if (i, j, s) not in choices:
                    opts = self.allowed(choices, (i, j, s))
                    if len(opts) == 1:
                        choices[(i, j, s)] = opts[0]
                        seeds.append((i, j, s))
        if self.unit_propagate(choices, seeds) is None:
            return _LineOutcome(None, None, None, INFEASIBLE, 0, math.inf, [])
        root_dist = self.evaluate(None, choices, {}, [], [])
        if root_dist is None:
            return _LineOutcome(None, None, None, INFEASIBLE, self.opened, math.inf, [])
        root = _Node(choices, {}, root_dist, line_objective(self.line, root_dist) + offcost,
                     off=off, offcost=offcost)
        heap = [(root.bound, 0, root)]
        seq = itertools.count(1)
        lb = root.bound
        last = [None, -TRACE_EVERY]

        def record(force: bool = False) -> None:
            if force or (best, lb) != last[0] or self.opened - last[1] >= TRACE_EVERY:
                self.trace.append(TraceEntry(time.perf_counter() - t0, self.opened, best, lb))
                if self.on_trace:
                    self.on_trace(self.opened, best, lb)
                last[0], last[1] = (best, lb), self.opened

        record(force=True)
        status = OPTIMAL
        while heap:
            bound, _, node = heapq.heappop(heap)
            if prunable(bound):
                heap.clear()
                break
            lb = max(lb, bound)
            if cfg.node_budget is not None and self.opened >= cfg.node_budget:
                heapq.heappush(heap, (bound, next(seq), node))
                status = BUDGET_EXHAUSTED
                break
            if self.deadline is not None and time.perf_counter() > self.deadline:
                heapq.heappush(heap, (bound, next(seq), node))
                status = BUDGET_EXHAUSTED
                break
            kind, payload = self.analyze(node)
            if kind == "dead":
                continue
            if kind == "leaf":
                if bound < best:
                    best, best_assign, best_times = bound, payload, node.dist
                    log.debug("incumbent %s after %d nodes", best, self.opened)
                    record(force=True)
                continue
            children = []
            off, offcost = node.off, node.offcost
            if kind == "pair":
                for e in self.allowed(node.choices, payload):
                    ch = dict(node.choices)
                    ch[payload] = e
                    added = self.unit_propagate(ch, [payload])
                    if added is None:
                        continue
                    children.append((ch, dict(node.ydec), [payload] + added, [], off, offcost))
                pair = payload[:2]
                if pair in self.pair_cost and not any(
                        (pair[0], pair[1], s) in node.choices for s in range(self.S)):
                    children.append((dict(node.choices), dict(node.ydec), [], [],
                                     off | {pair}, offcost + self.pair_cost[pair]))
            else:
                for val in (False, True):
                    yd = dict(node.ydec)
                    yd[payload] = val
                    children.append((dict(node.choices), yd, [], [payload], off, offcost))
            for ch, yd, new_keys, new_y, ch_off, ch_cost in children:
                dist = self.evaluate(node.dist, ch, yd, new_keys, new_y)
                if dist is None:
                    continue
                b = line_objective(self.line, dist) + ch_cost
                if prunable(b):
                    continue
                heapq.heappush(heap, (b, next(seq), _Node(ch, yd, dist, b, node.depth + 1,
                                                          ch_off, ch_cost)))
            if heap:
                lb = max(lb, min(bound, heap[0][0]))
            record()

        if status == OPTIMAL:
            lb = best if best != math.inf else math.inf
        else:
            lb = min(best, heap[0][0]) if heap else best
        record(force=True)
        if best == math.inf:
            if status == OPTIMAL:
                status = INFEASIBLE
            return _LineOutcome(None, None, None, status, self.opened, lb, self.trace)
        best = int(best) if float(best).is_integer() else best
        return _LineOutcome(best, best_times, best_assign, status, self.opened, lb, self.trace)


def _seed(line: Line, forbidden: set, fixed: Mapping) -> tuple[int | None, LineAssignment | None, list | None]:
    try:
        times, la = lexicographic_line(line)
    except InfeasibleTotalOrder:
        return None, None, None
    if any(la.choices.get(k) != e for k, e in fixed.items()):
        return None, None, None
    return line_objective(line, times), la, times


def _solve_one(args) -> _LineOutcome:
    line, forbidden, fixed, config, deadline = args
    inc, inc_assign, inc_times = _seed(line, forbidden, fixed)
    return _LineSearch(line, forbidden, fixed, config, deadline).run(inc, inc_assign, inc_times)


def solve(instance: Instance, mask: FixedVariableMask | None = None,
          config: SolverConfig | None = None) -> SolveResult:
    """Optimal timetable under ``mask`` (dispatch orders always apply)."""
    config = config or SolverConfig()
    if mask is None:
        if config.use_rules_mask:
            from railsched.rules import apply_rules
            mask = apply_rules(instance)
        else:
            mask = EMPTY_MASK
    mask = mask.union(dispatch_mask(instance))
    t0 = time.perf_counter()
    deadline = t0 + config.time_budget if config.time_budget else None
    n_lines = len(instance.lines)
    jobs = [(line, mask.line_forbidden(li), mask.line_fixed(li), config, deadline)
            for li, line in enumerate(instance.lines)]

    stats = SearchStats()
    outcomes: list[_LineOutcome]
    if config.workers > 1 and not config.deterministic and n_lines > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as ex:
            outcomes = list(ex.map(_solve_one, jobs))
    else:
        # Lines are independent: the running trace adds finished lines'
        # optima to the current line's bounds and the pending lines' seeds.
        pending_ub, pending_lb = [], []
        for line, forbidden, fixed, _, _ in jobs:
            inc, _, _ = _seed(line, forbidden, fixed)
            pending_ub.append(inc if inc is not None else math.inf)
            from railsched.scheduler import solve_line_times
            rt = solve_line_times(line, {}, {}, overlap_default=True)
            pending_lb.append(line_objective(line, rt) if rt is not None else math.inf)
        done_ub, done_lb, done_nodes = 0.0, 0.0, 0
        outcomes = []
        for k, (line, forbidden, fixed, cfg, dl) in enumerate(jobs):
            rest_ub = sum(pending_ub[k + 1:])
            rest_lb = sum(pending_lb[k + 1:])

            def on_trace(nodes, ub, lb, _k=k, _ru=rest_ub, _rl=rest_lb, _du=done_ub, _dl=done_lb,
                         _dn=done_nodes):
                stats.gap_trace.append(TraceEntry(
                    time.perf_counter() - t0, _dn + nodes, _du + ub + _ru, _dl + lb + _rl))

            inc, inc_assign, inc_times = _seed(line, forbidden, fixed)
            out = _LineSearch(line, forbidden, fixed, cfg, dl, on_trace).run(inc, inc_assign, inc_times)
            outcomes.append(out)
            done_ub += out.objective if out.objective is not None else math.inf
            done_lb += out.lower_bound
            done_nodes += out.opened

    stats.opened_nodes = sum(o.opened for o in outcomes)
    stats.wall_time = time.perf_counter() - t0
    statuses = {o.status for o in outcomes}
    if INFEASIBLE in statuses:
        stats.status = INFEASIBLE
    elif BUDGET_EXHAUSTED in statuses:
        stats.status = BUDGET_EXHAUSTED
    else:
        stats.status = OPTIMAL
    _monotone_trace(stats)
    lb = sum(o.lower_bound for o in outcomes)
    if any(o.objective is None for o in outcomes):
        return SolveResult(None, None, None, stats, lb)
    tt = Timetable(tuple(times_to_line_timetable(line, o.times)
                         for line, o in zip(instance.lines, outcomes)))
    assign = EventAssignment(tuple(o.assignment for o in outcomes))
    return SolveResult(sum(o.objective for o in outcomes), tt, assign, stats, lb)


def _monotone_trace(stats: SearchStats) -> None:
    best_ub, best_lb = math.inf, -math.inf
    fixed = []
    for e in stats.gap_trace:
        best_ub = min(best_ub, e.ub)
        best_lb = max(best_lb, e.lb)
        if fixed and (fixed[-1].nodes, fixed[-1].ub, fixed[-1].lb) == (e.nodes, best_ub, best_lb):
            continue
        fixed.append(TraceEntry(e.time, e.nodes, best_ub, best_lb))
    stats.gap_trace = fixed


# --------------------------------------------------------------------------
# exhaustive oracle

DEFAULT_CEILING = 5_000_000


def enumeration_size(instance: Instance) -> int:
    """Crude upper bound on the oracle's leaves."""
    total = 1
    for line in instance.lines:
        p = len(line.pairs())
        multi = sum(1 for st in line.stations if st.capacity >= 2)
        total *= (2 ** p) * (3 ** (p * multi))
    return total


def _oracle_line(line: Line, forbidden: set, fixed: Mapping[Key, Event]):
    pairs = line.pairs()
    S = line.n_stations
    slots = [(i, j, s) for s in range(S) for (i, j) in pairs]
    best = [math.inf, None, None]
    choices: dict = {}
    overt_used: dict = {}

    def consistent(key: Key, e: Event) -> bool:
        i, j, s = key
        st = line.stations[s]
        if key in fixed and fixed[key] != e:
            return False
        if e.kind == OVERTAKES:
            if st.capacity < 2 or (e.second, e.first, s) in forbidden:
                return False
            if overt_used.get((i, s), 0) >= st.capacity - 1 or overt_used.get((j, s), 0) >= st.capacity - 1:
                return False
        if s > 0 and choices[(i, j, s - 1)].departs_first != e.arrives_first:
            return False
        return True

    def leaf() -> None:
        cands = [(e.first, e.second, s) for (i, j, s), e in choices.items()
                 if e.kind == PRECEDES and line.stations[s].capacity >= 2]
        relaxed = earliest_schedule(build_line_graph(line, choices, {k: True for k in cands}))
        if not relaxed.feasible or relaxed.objective >= best[0]:
            return
        used = dict(overt_used)
        chosen: dict = {}

        def walk(k: int) -> None:
            if k == len(cands):
                res = earliest_schedule(build_line_graph(line, choices, chosen))
                if res.feasible and res.objective < best[0]:
                    best[0] = res.objective
                    best[1] = LineAssignment(dict(choices), dict(chosen))
                    best[2] = list(res.times)
                return
            a, b, s = cands[k]
            cap = line.stations[s].capacity
            if used.get((a, s), 0) < cap - 1 and used.get((b, s), 0) < cap - 1:
                used[(a, s)] = used.get((a, s), 0) + 1
                used[(b, s)] = used.get((b, s), 0) + 1
                chosen[(a, b, s)] = True
                walk(k + 1)
                del chosen[(a, b, s)]
                used[(a, s)] -= 1
                used[(b, s)] -= 1
            walk(k + 1)

        walk(0)

    def dfs(k: int) -> None:
        if k == len(slots):
            leaf()
            return
        key = slots[k]
        i, j, s = key
        for e in (Precedes(i, j), Precedes(j, i), Overtakes(i, j), Overtakes(j, i)):
            if not consistent(key, e):
                continue
            choices[key] = e
            if e.kind == OVERTAKES:
                overt_used[(i, s)] = overt_used.get((i, s), 0) + 1
                overt_used[(j, s)] = overt_used.get((j, s), 0) + 1
            dfs(k + 1)
            if e.kind == OVERTAKES:
                overt_used[(i, s)] -= 1
                overt_used[(j, s)] -= 1
            del choices[key]

    dfs(0)
    return best


def brute_force_optimum(instance: Instance, mask: FixedVariableMask | None = None,
                        ceiling: int = DEFAULT_CEILING) -> SolveResult:
    """Exhaustive minimum over all consistent assignments and overlap subsets."""
    size = enumeration_size(instance)
    if size > ceiling:
        raise TooLarge(f"enumeration estimate {size} exceeds ceiling {ceiling}")
    mask = (mask or EMPTY_MASK).union(dispatch_mask(instance))
    t0 = time.perf_counter()
    total, lines, assigns = 0, [], []
    for li, line in enumerate(instance.lines):
        obj, la, times = _oracle_line(line, mask.line_forbidden(li), mask.line_fixed(li))
        if la is None:
            stats = SearchStats(0, time.perf_counter() - t0, [], INFEASIBLE)
            return SolveResult(None, None, None, stats, math.inf)
        total += obj
        lines.append(times_to_line_timetable(line, times))
        assigns.append(la)
    stats = SearchStats(0, time.perf_counter() - t0, [], OPTIMAL)
    return SolveResult(total, Timetable(tuple(lines)), EventAssignment(tuple(assigns)), stats, total)
