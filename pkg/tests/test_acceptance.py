"""Acceptance criteria, one test each.

Every test prints a single ``[criterion k] PASS|FAIL ...`` line with the
measured quantity next to its threshold. Run with ``pytest -s`` to see them,
or ``python tests/test_acceptance.py`` for the summary alone.
"""

import random
import subprocess
import sys
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent))

from desk import i2, random_complete_assignment  # noqa: E402
from geometry import band_of, crossings  # noqa: E402
from perturb import STRUCTURAL, TIMING, perturb  # noqa: E402
from railsched.audit import audit_timetable  # noqa: E402
from railsched.bnb import OPTIMAL, SolverConfig, brute_force_optimum, solve  # noqa: E402
from railsched.interchange import (  # noqa: E402
    GeneratorOptions,
    generate_instance,
    random_desk_instance,
)
from railsched.interchange.svg import layout  # noqa: E402
from railsched.lagrangian import LRConfig, LRState, lr_subproblem, relaxed_constraints, run_lr, subgradient_step  # noqa: E402
from railsched.model import Timetable, objective, validate_instance  # noqa: E402
from railsched.rules import lexicographic_timetable  # noqa: E402
from railsched.scheduler import schedule_assignment  # noqa: E402


LINES = []  # echoed in the pytest terminal summary by conftest.py


def note(text):
    LINES.append(text)
    print(text, flush=True)


def report(k, ok, detail):
    note(f"[criterion {k}] {'PASS' if ok else 'FAIL'} {detail}")
    assert ok, detail


def oracle_suite():
    """100 seeded instances: 2-3 trains, 2-4 stations, capacity <= 2, SF in {60, 120}."""
    out = []
    for k in range(100):
        out.append(random_desk_instance(10_000 + k, n_trains=2 + k % 2, n_stations=2 + k % 3,
                                        max_capacity=2, safety_times=(60, 120)))
    return out


def rule_suite():
    """Pre-committed 50-instance suite: 2-4 trains, 3-6 stations."""
    return [random_desk_instance(20_000 + k, n_trains=2 + k % 3, n_stations=3 + k % 4, max_capacity=2)
            for k in range(50)]


def test_criterion_1_oracle_equivalence():
    t0 = time.perf_counter()
    mismatches = []
    for k, inst in enumerate(oracle_suite()):
        got = solve(inst).objective
        want = brute_force_optimum(inst).objective
        if got != want:
            mismatches.append((k, got, want))
    elapsed = time.perf_counter() - t0
    report(1, not mismatches and elapsed < 300,
           f"100 instances, {len(mismatches)} mismatches (need 0), {elapsed:.1f}s (need < 300s)")


def test_criterion_2_rule_gap_zero():
    gaps, with_nodes, without_nodes = [], 0, 0
    for k, inst in enumerate(rule_suite()):
        free = solve(inst)
        masked = solve(inst, config=SolverConfig(use_rules_mask=True))
        without_nodes += free.stats.opened_nodes
        with_nodes += masked.stats.opened_nodes
        if free.objective != masked.objective:
            gaps.append((k, free.objective, masked.objective))
    detail = (f"{len(gaps)}/50 instances with masked != unmasked (need 0): {gaps}; "
              f"aggregate nodes {with_nodes} masked vs {without_nodes} unmasked (need <=)")
    report(2, not gaps and with_nodes <= without_nodes, detail)


def test_criterion_3_i2_truths():
    t0 = time.perf_counter()
    inst = i2()
    opt = solve(inst).objective
    lex_tt, _ = lexicographic_timetable(inst)
    lex = objective(inst, lex_tt)
    tr = run_lr(inst, LRConfig(max_iterations=1))
    keys = relaxed_constraints(inst)
    sub = lr_subproblem(inst, {c: 0.0 for c in keys})
    u, step = subgradient_step(LRState({c: 0.0 for c in keys}, 2.0, tr.ub), sub.gamma, sub.value)
    elapsed = time.perf_counter() - t0
    got = (opt, lex, tr.rmip, tr.ub, step, tuple(u[c] for c in keys))
    want = (2040, 2700, 1980, 2835, 570, (-570, -570, -570))
    report(3, got == want and elapsed < 1.0, f"got {got}, want {want}, {elapsed:.3f}s (need < 1s)")


def test_criterion_4_lr_soundness():
    unsound = []
    for k, inst in enumerate(oracle_suite()):
        opt = brute_force_optimum(inst).objective
        tr = run_lr(inst, LRConfig(max_iterations=25))
        bounds = tr.bounds
        running = [max(bounds[:n + 1]) for n in range(len(bounds))]
        ok = (all(b <= opt + 1e-9 for b in bounds)
              and running == sorted(running) and tr.best_bound == running[-1]
              and tr.rmip <= tr.best_bound + 1e-9 <= opt + 2e-9 <= tr.ub + 2e-9)
        if not ok:
            unsound.append(k)
    reached = 0
    for seed in range(50):
        inst = random_desk_instance(seed, n_trains=2, n_stations=4)
        opt = brute_force_optimum(inst).objective
        if abs(run_lr(inst, LRConfig(max_iterations=25)).best_bound - opt) < 1e-6:
            reached += 1
    note(f"[criterion 4] info: best_bound reached the optimum on {reached}/50 two-train instances "
          f"(target >= 40, reported only)")
    report(4, not unsound, f"soundness violated on {len(unsound)}/100 oracle instances (need 0)")


def test_criterion_5_audit_completeness():
    rng = random.Random(5)
    solved = []
    for seed in range(40):
        inst = random_desk_instance(300 + seed, n_trains=3, n_stations=4, max_capacity=3)
        res = solve(inst)
        solved.append((inst, res))
    dirty = sum(not audit_timetable(inst, r.timetable, r.assignment).ok for inst, r in solved)
    families = TIMING + STRUCTURAL
    done = missed = 0
    while done < 10_000:
        inst, res = rng.choice(solved)
        fam = rng.choice(families)
        p = perturb(inst, res.timetable, res.assignment, rng, fam)
        if p is None:
            continue
        done += 1
        if fam not in audit_timetable(inst, p[0], p[1]).families():
            missed += 1
    report(5, missed == 0 and dirty == 0,
           f"{missed}/10000 perturbations not named (need 0); {dirty}/40 solver outputs dirty (need 0)")


def test_criterion_6_minimality():
    rng = random.Random(6)
    checked = broken = seed = 0
    while checked < 50:
        inst = random_desk_instance(600 + seed, n_trains=3, n_stations=4, max_capacity=2)
        seed += 1
        a = random_complete_assignment(inst, rng)
        tt = schedule_assignment(inst, a) if a is not None else None
        if tt is None:
            continue
        checked += 1
        lt = tt.lines[0]
        for t in range(inst.lines[0].n_trains):
            for s in range(inst.lines[0].n_stations):
                for grid in ("arrival", "departure"):
                    arr = [list(r) for r in lt.arrival]
                    dep = [list(r) for r in lt.departure]
                    target = arr if grid == "arrival" else dep
                    if target[t][s] == 0:
                        continue
                    target[t][s] -= 1
                    if audit_timetable(inst, Timetable.from_lists([arr], [dep]), a).ok:
                        broken += 1
    report(6, broken == 0, f"{broken} single 1-s decreases stayed feasible over 50 schedules (need 0)")


def _cli(*args):
    proc = subprocess.run([sys.executable, "-m", "railsched.cli", *args], capture_output=True, check=False)
    return proc.returncode, proc.stdout


def test_criterion_7_determinism(tmp_path):
    outputs = []
    for run_no in range(2):
        path = tmp_path / f"gen{run_no}.json"
        code_g, gen = _cli("generate", "--seed", "77", "--trains", "4", "--stations", "8")
        path.write_bytes(gen)
        code_s, sol = _cli("solve", str(path), "--json")
        outputs.append((code_g, gen, code_s, sol))
    same = outputs[0] == outputs[1]
    codes = (outputs[0][0], outputs[0][2])
    report(7, same and codes == (0, 0), f"two runs byte-identical: {same}; exit codes {codes}")


def test_criterion_8_tehran_demo():
    doc = generate_instance(GeneratorOptions(seed=2024, trains=6, stations=12, base_headway_s=480))
    inst = validate_instance(doc)
    t0 = time.perf_counter()
    res = solve(inst, config=SolverConfig(time_budget=600))
    elapsed = time.perf_counter() - t0
    lay = layout(inst, res.timetable)
    hits = crossings(lay)
    outside = [h for h in hits if band_of(lay, h[1]) is None]
    # at 480 s headway the optimum never overtakes, so the crossing check is
    # repeated on a tighter corridor whose optimum does
    tight = validate_instance(generate_instance(GeneratorOptions(seed=2, trains=6, stations=12,
                                                                 base_headway_s=120)))
    tight_lay = layout(tight, solve(tight).timetable)
    tight_hits = crossings(tight_lay)
    tight_outside = [h for h in tight_hits if band_of(tight_lay, h[1]) is None]
    ok = res.stats.status == OPTIMAL and elapsed < 600 and not outside and not tight_outside
    report(8, ok, f"status {res.stats.status}, objective {res.objective}, {elapsed:.1f}s (need < 600s); "
                  f"{len(hits)} crossings, {len(outside)} outside station bands (need 0); "
                  f"120 s variant {len(tight_hits)} crossings, {len(tight_outside)} outside (need 0)")


if __name__ == "__main__":
    import tempfile

    tests = [v for k, v in sorted(globals().items()) if k.startswith("test_criterion_")]
    failed = 0
    for fn in tests:
        try:
            if "tmp_path" in fn.__code__.co_varnames[:fn.__code__.co_argcount]:
                with tempfile.TemporaryDirectory() as d:
                    fn(Path(d))
            else:
                fn()
        except AssertionError:
            failed += 1
    sys.exit(1 if failed else 0)
