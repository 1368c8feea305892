"""Lagrangian lower bounds by relaxing the one-event-per-pair constraint.

Every (line, pair, station) slot carries a multiplier ``u``. The penalized
problem keeps all timing, capacity and linking constraints but lets each slot
hold no event at all, paying ``-u`` for the empty slot. Since linking forces a
pair's departure order at one station to match its arrival order at the
next, an empty slot empties the whole pair; the subproblem is therefore the
ordinary search with one extra branch per pair ("no events, pay the summed
penalty"). Any multiplier vector gives a valid lower bound on the optimum.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction

from railsched.audit import audit_timetable
from railsched.bnb import BUDGET_EXHAUSTED, INFEASIBLE, OPTIMAL, SolverConfig, _LineSearch, _seed
from railsched.events import EMPTY_MASK, EventAssignment, FixedVariableMask, dispatch_mask
from railsched.model import Instance, Timetable, objective
from railsched.rules import lexicographic_timetable
from railsched.scheduler import line_objective, solve_line_times, times_to_line_timetable

log = logging.getLogger(__name__)

ConstraintKey = tuple[int, int, int, int]  # (line, i, j, station) with i < j

STOP_ZERO_SUBGRADIENT = "zero_subgradient"
STOP_MULTIPLIER_CHANGE = "multiplier_change"
STOP_ITERATION_CAP = "iteration_cap"
STOP_NO_INCUMBENT = "subproblem_without_solution"


class ZeroSubgradient(Exception):
    """Every relaxed constraint holds: the subproblem solution is feasible."""


class LagrangianInfeasible(RuntimeError):
    pass


@dataclass(frozen=True)
class LRConfig:
    max_iterations: int = 100
    theta0: float = 2.0
    ub_factor: Fraction = Fraction(105, 100)
    change_tolerance: float = 0.005
    node_budget: int | None = 50_000
    time_budget: float | None = None
    mask: FixedVariableMask | None = None

    def __post_init__(self) -> None:
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.theta0 <= 0:
            raise ValueError("theta0 must be positive")


@dataclass
class LRState:
    multipliers: dict[ConstraintKey, float]
    theta: float
    ub: float
    best_bound: float = -math.inf
    iteration: int = 0


@dataclass(frozen=True)
class LRIteration:
    iteration: int
    bound: float
    exact: bool
    theta: float
    step: float
    norm2: int
    status: str


@dataclass
class LRTrace:
    rmip: int
    ub: float
    iterations: list[LRIteration] = field(default_factory=list)
    best_bound: float = -math.inf
    stop_reason: str = ""
    multipliers: dict[ConstraintKey, float] = field(default_factory=dict)
    feasible_value: int | None = None

    @property
    def bounds(self) -> list[float]:
        return [it.bound for it in self.iterations]


@dataclass(frozen=True)
class SubproblemResult:
    value: float
    proven_lb: float
    exact: bool
    assignment: EventAssignment | None
    timetable: Timetable | None
    gamma: dict[ConstraintKey, int]
    status: str
    opened_nodes: int


def relaxed_constraints(instance: Instance) -> list[ConstraintKey]:
    return [(li, i, j, s)
            for li, line in enumerate(instance.lines)
            for (i, j) in line.pairs()
            for s in range(line.n_stations)]


def rmip_bound(instance: Instance) -> int:
    """Sum of every train's unobstructed earliest arrival at its last station."""
    total = 0
    for line in instance.lines:
        times = solve_line_times(line, {}, {})
        if times is None:
            raise LagrangianInfeasible("a train's own time windows are inconsistent")
        total += line_objective(line, times)
    return total


def lr_subproblem(instance: Instance, multipliers: dict[ConstraintKey, float],
                  config: LRConfig | None = None) -> SubproblemResult:
    config = config or LRConfig()
    mask = (config.mask or EMPTY_MASK).union(dispatch_mask(instance))
    solver_cfg = SolverConfig(node_budget=config.node_budget, time_budget=config.time_budget)
    value = lb = 0.0
    exact = True
    opened = 0
    gamma: dict[ConstraintKey, int] = {}
    lines, assigns = [], []
    for li, line in enumerate(instance.lines):
        price = {}
        for (i, j) in line.pairs():
            price[(i, j)] = -sum(multipliers.get((li, i, j, s), 0.0) for s in range(line.n_stations))
        forbidden, fixed = mask.line_forbidden(li), mask.line_fixed(li)
        inc, inc_assign, inc_times = _seed(line, forbidden, fixed)
        search = _LineSearch(line, forbidden, fixed, solver_cfg, None, pair_cost=price)
        out = search.run(inc, inc_assign, inc_times)
        opened += out.opened
        if out.status == INFEASIBLE:
            raise LagrangianInfeasible(f"line {li} has no feasible penalized solution")
        exact = exact and out.status == OPTIMAL
        lb += out.lower_bound
        if out.objective is None:
            value = math.inf
            lines, assigns = None, None
            continue
        value += out.objective
        active = {(i, j) for (i, j, _) in out.assignment.choices}
        for (i, j) in line.pairs():
            for s in range(line.n_stations):
                gamma[(li, i, j, s)] = 0 if (i, j) in active else -1
        if lines is not None:
            lines.append(times_to_line_timetable(line, out.times))
            assigns.append(out.assignment)
    status = OPTIMAL if exact else BUDGET_EXHAUSTED
    return SubproblemResult(
        value=value,
        proven_lb=value if exact else lb,
        exact=exact,
        assignment=EventAssignment(tuple(assigns)) if assigns is not None else None,
        timetable=Timetable(tuple(lines)) if lines is not None else None,
        gamma=gamma,
        status=status,
        opened_nodes=opened,
    )


def subgradient_step(state: LRState, gamma: dict[ConstraintKey, int],
                     value: float) -> tuple[dict[ConstraintKey, float], float]:
    """New multipliers and the step length used."""
    norm2 = sum(g * g for g in gamma.values())
    if norm2 == 0:
        raise ZeroSubgradient()
    step = state.theta * (state.ub - value) / norm2
    u = dict(state.multipliers)
    for k, g in gamma.items():
        u[k] = u.get(k, 0.0) + g * step
    return u, step


def run_lr(instance: Instance, config: LRConfig | None = None) -> LRTrace:
    config = config or LRConfig()
    lex_tt, _ = lexicographic_timetable(instance)
    lex_obj = objective(instance, lex_tt)
    ub = float(Fraction(lex_obj) * config.ub_factor)
    keys = relaxed_constraints(instance)
    state = LRState({k: 0.0 for k in keys}, config.theta0, ub)
    trace = LRTrace(rmip=rmip_bound(instance), ub=ub)

    for k in range(1, config.max_iterations + 1):
        state.iteration = k
        sub = lr_subproblem(instance, state.multipliers, config)
        bound = sub.value if sub.exact else sub.proven_lb
        if bound > state.best_bound:
            state.best_bound = bound
        elif k > 1:
            state.theta /= 2
        norm2 = sum(g * g for g in sub.gamma.values())
        if sub.assignment is None:
            trace.iterations.append(LRIteration(k, bound, sub.exact, state.theta, 0.0, norm2, sub.status))
            trace.stop_reason = STOP_NO_INCUMBENT
            break
        try:
            new_u, step = subgradient_step(state, sub.gamma, bound)
        except ZeroSubgradient:
            trace.iterations.append(LRIteration(k, bound, sub.exact, state.theta, 0.0, 0, sub.status))
            if sub.exact and audit_timetable(instance, sub.timetable, sub.assignment).ok:
                trace.feasible_value = int(sub.value)
            trace.stop_reason = STOP_ZERO_SUBGRADIENT
            break
        trace.iterations.append(LRIteration(k, bound, sub.exact, state.theta, step, norm2, sub.status))
        change = max((abs(new_u[c] - state.multipliers[c]) for c in keys), default=0.0)
        log.debug("LR iteration %d bound %.3f step %.3f", k, bound, step)
        state.multipliers = new_u
        if change < config.change_tolerance:
            trace.stop_reason = STOP_MULTIPLIER_CHANGE
            break
    else:
        trace.stop_reason = STOP_ITERATION_CAP
    trace.best_bound = state.best_bound
    trace.multipliers = state.multipliers
    return trace


__all__ = [
    "LRConfig",
    "LRIteration",
    "LRState",
    "LRTrace",
    "LagrangianInfeasible",
    "SubproblemResult",
    "ZeroSubgradient",
    "lr_subproblem",
    "relaxed_constraints",
    "rmip_bound",
    "run_lr",
    "subgradient_step",
]
