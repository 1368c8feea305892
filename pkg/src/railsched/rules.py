"""Parameter-only rules that ban non-beneficial overtakes before search.

For an ordered pair ``(t, t2)`` on segment ``s -> q = s + 1``, the test
asks whether ``t2`` overtaking ``t`` at ``q`` can pay off. Only minimum dwell
and travel times enter the tests.
"""

from __future__ import annotations

from dataclasses import dataclass

from railsched.events import (
    EventAssignment,
    FixedVariableMask,
    LineAssignment,
    Precedes,
    dispatch_mask,
)
from railsched.model import Instance, Line, Timetable
from railsched.scheduler import solve_line_times, times_to_line_timetable

NOT_FORBIDDEN = "NotForbidden"


class InfeasibleTotalOrder(RuntimeError):
    pass


@dataclass(frozen=True)
class RuleOutcome:
    rule: str
    branch: tuple[str, str] | None = None

    @property
    def forbidden(self) -> bool:
        return self.rule != NOT_FORBIDDEN


def classify_line_pair(line: Line, t: int, t2: int, s: int) -> RuleOutcome:
    q = s + 1
    sf_s = line.stations[s].safety_time
    sf_q = line.stations[q].safety_time
    lead, follow = line.trains[t], line.trains[t2]
    dw_follow_s = follow.dwell_min[s]
    dw_lead_q, dw_follow_q = lead.dwell_min[q], follow.dwell_min[q]
    run_lead, run_follow = lead.travel_min[s], follow.travel_min[s]

    # catch-up window: can the follower reach q before the leader has left?
    if dw_follow_s + sf_s > run_lead - run_follow + dw_lead_q + sf_q:
        return RuleOutcome("Rule23")

    a1 = sf_s + dw_follow_s + run_follow - run_lead <= sf_q
    b1 = dw_follow_q + 2 * sf_q >= dw_lead_q
    branch = ("A1" if a1 else "A2", "B1" if b1 else "B2")
    if a1 and b1:
        hit, rule = 2 * dw_lead_q <= 2 * sf_q + dw_follow_q, "Rule33"
    elif a1:
        hit, rule = dw_follow_q == 0, "Rule34"
    elif b1:
        hit, rule = 0 <= dw_follow_q + sf_q, "Rule35"
    else:
        hit, rule = dw_lead_q <= dw_follow_q, "Rule36"
    return RuleOutcome(rule if hit else NOT_FORBIDDEN, branch)


def classify_pair(instance: Instance, t: int, t2: int, s: int, line: int = 0) -> RuleOutcome:
    """Is ``t2`` overtaking ``t`` at station ``s + 1`` ruled out?"""
    ln = instance.lines[line]
    if not 0 <= s < ln.last:
        raise IndexError(f"segment {s} out of range")
    return classify_line_pair(ln, t, t2, s)


def apply_rules(instance: Instance) -> FixedVariableMask:
    """Mask with every rule-banned overtake plus dispatch-order fixes."""
    forbidden = set()
    for li, line in enumerate(instance.lines):
        for t in range(line.n_trains):
            for t2 in range(line.n_trains):
                if t == t2:
                    continue
                for s in range(line.last):
                    if classify_line_pair(line, t, t2, s).forbidden:
                        forbidden.add((li, t2, t, s + 1))
    return FixedVariableMask(frozenset(forbidden)).union(dispatch_mask(instance))


def lexicographic_line(line: Line) -> tuple[list[int], LineAssignment]:
    order = list(line.dispatch_order) if line.dispatch_order is not None else list(range(line.n_trains))
    choices = {}
    for x in range(len(order)):
        for y in range(x + 1, len(order)):
            a, b = order[x], order[y]
            for s in range(line.n_stations):
                choices[(min(a, b), max(a, b), s)] = Precedes(a, b)
    overlaps = {}
    for s, st in enumerate(line.stations):
        if st.capacity < 2:
            continue
        used = {t: 0 for t in range(line.n_trains)}
        for x in range(len(order)):
            for y in range(x + 1, len(order)):
                a, b = order[x], order[y]
                if used[a] < st.capacity - 1 and used[b] < st.capacity - 1:
                    overlaps[(a, b, s)] = True
                    used[a] += 1
                    used[b] += 1
    la = LineAssignment(choices, overlaps)
    times = solve_line_times(line, choices, overlaps)
    if times is None:
        raise InfeasibleTotalOrder("no-overtake schedule in dispatch order has a positive cycle")
    return times, la


def lexicographic_timetable(instance: Instance) -> tuple[Timetable, EventAssignment]:
    """No-overtake timetable with trains in index (or dispatch) order.

    Overlap flags are granted greedily in order while the station budget
    admits them.
    """
    lines, assigns = [], []
    for line in instance.lines:
        times, la = lexicographic_line(line)
        lines.append(times_to_line_timetable(line, times))
        assigns.append(la)
    return Timetable(tuple(lines)), EventAssignment(tuple(assigns))
