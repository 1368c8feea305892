import dataclasses
import math

import pytest

from desk import i2, single_train, two_lines
from railsched.audit import audit_timetable
from railsched.bnb import (
    BUDGET_EXHAUSTED,
    OPTIMAL,
    SolverConfig,
    TooLarge,
    brute_force_optimum,
    solve,
)
from railsched.events import Precedes
from railsched.interchange.generator import random_desk_instance
from railsched.model import Instance, Line, objective
from railsched.rules import apply_rules


def test_i2_optimum():
    res = solve(i2())
    assert res.objective == 2040
    assert res.stats.status == OPTIMAL
    assert all(res.assignment.lines[0].choices[(0, 1, s)] == Precedes(1, 0) for s in range(3))
    assert objective(i2(), res.timetable) == 2040


def test_i2_masked_matches_and_opens_no_more_nodes():
    free = solve(i2())
    masked = solve(i2(), config=SolverConfig(use_rules_mask=True))
    assert masked.objective == free.objective
    assert masked.stats.opened_nodes <= free.stats.opened_nodes


def test_single_train_is_one_node():
    res = solve(single_train())
    assert res.objective == 660
    assert res.stats.opened_nodes == 1


def test_oracle_i2():
    assert brute_force_optimum(i2()).objective == 2040


def test_oracle_identical_pair():
    t2 = i2().lines[0].trains[1]
    inst = Instance((Line(i2().lines[0].stations, (t2, dataclasses.replace(t2, name="t3"))),))
    # leader leaves C at 660; follower trails by SF everywhere and leaves C at 720
    assert brute_force_optimum(inst).objective == 660 + 720
    assert solve(inst).objective == 660 + 720


def test_oracle_refuses_large_instances():
    inst = random_desk_instance(1, n_trains=4, n_stations=6, max_capacity=3)
    with pytest.raises(TooLarge):
        brute_force_optimum(inst, ceiling=1000)


@pytest.mark.parametrize("seed", range(12))
def test_solver_matches_oracle(seed):
    inst = random_desk_instance(seed, n_trains=3, n_stations=3, max_capacity=2)
    oracle = brute_force_optimum(inst).objective
    res = solve(inst)
    assert res.objective == oracle
    assert audit_timetable(inst, res.timetable, res.assignment).ok


@pytest.mark.parametrize("seed", range(8))
def test_trace_brackets_the_optimum(seed):
    inst = random_desk_instance(100 + seed, n_trains=3, n_stations=4, max_capacity=2)
    opt = brute_force_optimum(inst).objective
    res = solve(inst)
    trace = res.stats.gap_trace
    assert trace
    for entry in trace:
        assert entry.lb <= opt + 1e-9
        assert entry.ub >= opt - 1e-9
    ubs = [e.ub for e in trace]
    lbs = [e.lb for e in trace]
    assert ubs == sorted(ubs, reverse=True)
    assert lbs == sorted(lbs)
    assert trace[-1].ub == trace[-1].lb == opt


def test_deterministic_repeat():
    inst = random_desk_instance(7, n_trains=4, n_stations=4, max_capacity=2)
    a, b = solve(inst), solve(inst)
    assert a.objective == b.objective
    assert a.stats.opened_nodes == b.stats.opened_nodes
    assert a.timetable == b.timetable
    assert [(e.nodes, e.ub, e.lb) for e in a.stats.gap_trace] == \
        [(e.nodes, e.ub, e.lb) for e in b.stats.gap_trace]


def test_node_budget_returns_incumbent():
    inst = random_desk_instance(3, n_trains=4, n_stations=5, max_capacity=3)
    res = solve(inst, config=SolverConfig(node_budget=2))
    assert res.stats.status == BUDGET_EXHAUSTED
    assert res.objective is not None
    assert res.lower_bound <= res.objective
    assert audit_timetable(inst, res.timetable, res.assignment).ok


def test_bad_budget_rejected():
    with pytest.raises(ValueError):
        SolverConfig(node_budget=0)


def test_lines_solved_independently():
    both = two_lines(i2(), single_train())
    res = solve(both)
    assert res.objective == 2040 + 660
    assert len(res.timetable.lines) == 2
    assert res.stats.gap_trace[-1].ub == 2040 + 660


def test_mask_keeps_solver_output_audit_clean():
    for seed in range(10):
        inst = random_desk_instance(200 + seed, n_trains=3, n_stations=4, max_capacity=3)
        res = solve(inst, apply_rules(inst))
        assert res.objective is not None
        assert audit_timetable(inst, res.timetable, res.assignment).ok
        assert not math.isinf(res.lower_bound)
