"""Audit examples and targeted perturbations."""

import random

import pytest

from desk import i2, i2_no_overtake
from perturb import STRUCTURAL, TIMING, perturb
from railsched.audit import audit_timetable
from railsched.bnb import solve
from railsched.events import EventAssignment, Overtakes
from railsched.interchange.generator import random_desk_instance
from railsched.model import Instance, Line, Station, Timetable, Train
from railsched.scheduler import schedule_assignment


def test_solver_output_on_i2_is_clean():
    res = solve(i2())
    assert audit_timetable(i2(), res.timetable, res.assignment).ok
    assert audit_timetable(i2(), res.timetable).ok


def test_short_dwell_reports_eq4_slack():
    st = (Station("A", 60, 1), Station("B", 60, 1))
    tr = Train("t", (0, 60), (0, 600), (300,), (600,), (0, 0))
    inst = Instance((Line(st, (tr,)),))
    tt = Timetable.from_lists([[[0, 300]]], [[[0, 330]]])
    rep = audit_timetable(inst, tt)
    assert [(v.constraint, v.slack) for v in rep.violations] == [("4", -30)]


def test_overlap_at_single_track_station():
    tt = schedule_assignment(i2(), i2_no_overtake())
    lt = tt.lines[0]
    arr = [list(r) for r in lt.arrival]
    dep = [list(r) for r in lt.departure]
    # t2 now stands at C until 1400; t1 still enters at 1380
    dep[1][2] = 1400
    rep = audit_timetable(i2(), Timetable.from_lists([arr], [dep]), i2_no_overtake())
    # the departure order at C breaks too, by the same 80 s
    got = sorted((v.constraint, v.slack) for v in rep.violations)
    assert got == [("13", 1380 - (1400 + 60)), ("7", 1380 - (1400 + 60))]


def test_clique_family():
    st = (Station("A", 60, 3), Station("B", 60, 2))
    tr = tuple(Train(f"t{k}", (0, 0), (5000, 5000), (300,), (5000,), (0, 0)) for k in range(3))
    inst = Instance((Line(st, tr),))
    a = EventAssignment.single({
        (0, 1, 1): Overtakes(0, 1), (0, 2, 1): Overtakes(0, 2), (1, 2, 1): Overtakes(1, 2),
    })
    tt = Timetable.from_lists([[[0, 0]] * 3], [[[0, 0]] * 3])
    fams = audit_timetable(inst, tt, a).families()
    assert {"14", "16", "12"} <= fams


def test_slacks_are_negative():
    res = solve(i2())
    lt = res.timetable.lines[0]
    arr = [list(r) for r in lt.arrival]
    dep = [[v + 5000 for v in r] for r in lt.departure]
    rep = audit_timetable(i2(), Timetable.from_lists([arr], [dep]), res.assignment)
    assert rep.violations
    assert all(v.slack < 0 for v in rep.violations)


@pytest.fixture(scope="module")
def solved():
    out = []
    for seed in range(25):
        inst = random_desk_instance(700 + seed, n_trains=3, n_stations=4, max_capacity=3)
        out.append((inst, solve(inst)))
    return out


def test_all_solver_outputs_clean(solved):
    for inst, res in solved:
        assert audit_timetable(inst, res.timetable, res.assignment).ok
        assert audit_timetable(inst, res.timetable).ok


@pytest.mark.parametrize("family", TIMING + STRUCTURAL)
def test_perturbation_names_family(solved, family):
    rng = random.Random(family)
    hits = 0
    for _ in range(400):
        inst, res = rng.choice(solved)
        p = perturb(inst, res.timetable, res.assignment, rng, family)
        if p is None:
            continue
        tt, a = p
        assert family in audit_timetable(inst, tt, a).families()
        hits += 1
    assert hits > 0
