import json
import re

import pytest
from hypothesis import given, settings, strategies as st

from desk import i2, i2_overtake_at_b, single_train
from geometry import band_of, crossings
from railsched.bnb import solve
from railsched.interchange import (
    GeneratorOptions,
    InstanceSyntaxError,
    SubsetExplosion,
    TimetableFormatError,
    build_mip,
    export_mip,
    generate_instance,
    instance_to_dict,
    parse_instance,
    random_desk_instance,
    read_timetable_csv,
    render_time_distance_svg,
    write_instance,
    write_timetable_csv,
)
from railsched.interchange.svg import EmptyTimetable, TimetableWarning, layout
from railsched.model import Instance, Line, Timetable, validate_instance
from railsched.scheduler import schedule_assignment

# ---------------------------------------------------------------- JSON / CSV


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 32), st.integers(0, 8), st.integers(2, 14))
def test_generator_round_trip(seed, trains, stations):
    doc = generate_instance(GeneratorOptions(seed=seed, trains=trains, stations=stations))
    inst = validate_instance(doc)
    again = parse_instance(write_instance(inst))
    assert again == inst
    assert write_instance(again) == write_instance(inst)


def test_desk_round_trip():
    for seed in range(20):
        inst = random_desk_instance(seed, n_trains=3, n_stations=4, n_lines=2)
        assert parse_instance(write_instance(inst)) == inst


def test_syntax_error_position():
    text = '{\n  "lines": [\n    {"stations": ]\n}'
    with pytest.raises(InstanceSyntaxError) as exc:
        parse_instance(text)
    assert (exc.value.lineno, exc.value.colno) == (3, 18)


def test_generator_is_deterministic():
    a = generate_instance(GeneratorOptions(seed=42))
    b = generate_instance(GeneratorOptions(seed=42))
    assert json.dumps(a) == json.dumps(b)
    assert json.dumps(a) != json.dumps(generate_instance(GeneratorOptions(seed=43)))


def test_generator_shape():
    doc = generate_instance(GeneratorOptions(seed=5))
    line = doc["lines"][0]
    assert len(line["stations"]) == 12
    assert len(line["trains"]) == 6
    assert {s["capacity"] for s in line["stations"]} <= {1, 2, 3}
    assert line["stations"][0]["capacity"] == line["stations"][-1]["capacity"] == 1
    assert all(s["safety_time_s"] == 480 for s in line["stations"])
    for factor in doc["meta"]["travel_scale"].values():
        assert 1 < factor <= 2
    assert len(doc["meta"]["express"]) == 2


def test_generator_trip_lengths():
    doc = generate_instance(GeneratorOptions(seed=9, travel_inflation_fraction=0.0))
    for tr in doc["lines"][0]["trains"]:
        trip = sum(tr["travel_min_s"]) + sum(tr["dwell_min_s"][1:-1])
        assert trip == (32 * 60 if tr["name"].startswith("E") else 52 * 60)


def test_generator_rejects_bad_fraction():
    with pytest.raises(ValueError):
        GeneratorOptions(express_fraction=1.5)


def test_csv_round_trip():
    inst = i2()
    tt = solve(inst).timetable
    text = write_timetable_csv(inst, tt)
    assert text.splitlines()[0] == "line,train,station,arrival_s,departure_s"
    assert len(text.splitlines()) == 1 + 2 * 3
    assert read_timetable_csv(inst, text) == tt


def test_csv_unknown_train():
    text = "line,train,station,arrival_s,departure_s\n0,zz,A,0,0\n"
    with pytest.raises(TimetableFormatError):
        read_timetable_csv(i2(), text)


def test_csv_missing_rows():
    text = write_timetable_csv(i2(), solve(i2()).timetable)
    with pytest.raises(TimetableFormatError):
        read_timetable_csv(i2(), "\n".join(text.splitlines()[:-1]) + "\n")


# ---------------------------------------------------------------- LP export


def test_lp_counts_i2():
    m = build_mip(i2())
    # four ordered binaries per station plus two overlap flags at B
    assert len(m.binaries) == 14
    assert len(m.rows_named("part_")) == 3
    assert len(m.rows_named("fifo_")) == 2
    assert len(m.continuous) == 12
    # single-track A and C each forbid the pair from overtaking
    assert [r.name for r in m.rows_named("clique_")] == ["clique_0_0_0_1", "clique_0_2_0_1"]


def test_lp_single_train_has_no_binaries():
    m = build_mip(single_train())
    assert m.binaries == []
    assert "Binaries" in m.to_lp()


def test_lp_capacity_one_has_no_overlap_machinery():
    inst = random_desk_instance(3, n_trains=3, n_stations=3, max_capacity=1)
    m = build_mip(inst)
    assert not any(v.startswith("y_") for v in m.binaries)
    for prefix in ("pclr_", "budget_", "ylink_"):
        assert m.rows_named(prefix) == []
    # every pair at every station gets a two-train clique row
    assert len(m.rows_named("clique_")) == 3 * 3


def test_lp_mask_becomes_bounds():
    from railsched.rules import apply_rules

    m = build_mip(i2(), apply_rules(i2()))
    # xo_a_b means b overtakes a: t1 may not pass t2 at B or C, t2 may not pass t1 at C
    assert m.fixed == {"xo_0_1_0_1": 0, "xo_0_1_0_2": 0, "xo_0_0_1_2": 0}
    assert " xo_0_1_0_1 = 0" in m.to_lp()


def test_subset_explosion_warns():
    inst = random_desk_instance(2, n_trains=8, n_stations=2, max_capacity=1)
    with pytest.warns(SubsetExplosion):
        text = export_mip(inst, subset_ceiling=5)
    assert "clique_" not in text


def _highs_optimum(text, tmp_path):
    highspy = pytest.importorskip("highspy")
    path = tmp_path / "model.lp"
    path.write_text(text)
    h = highspy.Highs()
    h.setOptionValue("output_flag", False)
    h.readModel(str(path))
    h.run()
    return round(h.getInfo().objective_function_value)


def test_lp_optimum_matches_native_i2(tmp_path):
    assert _highs_optimum(export_mip(i2()), tmp_path) == 2040


@pytest.mark.parametrize("seed", range(6))
def test_lp_optimum_matches_native(seed, tmp_path):
    inst = random_desk_instance(400 + seed, n_trains=3, n_stations=4, max_capacity=2)
    assert _highs_optimum(export_mip(inst), tmp_path) == solve(inst).objective


# ---------------------------------------------------------------- SVG


def test_single_train_staircase():
    inst = single_train()
    tt = Timetable.from_lists([[[0, 300, 660]]], [[[0, 360, 660]]])
    lay = layout(inst, tt)
    (_, _, pts), = lay.polylines
    xs = [p[0] for p in pts]
    ys = [p[1] for p in pts]
    assert xs == sorted(xs) and ys == sorted(ys)
    svg = render_time_distance_svg(inst, tt)
    assert svg.count("<polyline") == 1
    assert svg.count('class="band"') == 3


def test_i2_overtake_crosses_once_inside_b():
    inst = i2()
    tt = schedule_assignment(inst, i2_overtake_at_b())
    lay = layout(inst, tt)
    hits = crossings(lay)
    assert len(hits) == 1
    assert band_of(lay, hits[0][1]).station == 1


def test_no_trains_is_empty():
    inst = Instance((Line(i2().lines[0].stations, ()),))
    with pytest.raises(EmptyTimetable):
        render_time_distance_svg(inst, Timetable.from_lists([[]], [[]]))


def test_infeasible_timetable_warns_but_renders():
    tt = Timetable.from_lists([[[0, 0, 0]]], [[[0, 0, 0]]])
    with pytest.warns(TimetableWarning):
        svg = render_time_distance_svg(single_train(), tt)
    assert svg.startswith("<?xml")


def test_svg_is_well_formed():
    import xml.etree.ElementTree as ET

    root = ET.fromstring(render_time_distance_svg(i2(), solve(i2()).timetable))
    assert root.tag.endswith("svg")
    assert root.get("version") == "1.1"


@pytest.mark.parametrize("seed", range(10))
def test_solver_output_crosses_only_inside_bands(seed):
    inst = random_desk_instance(50 + seed, n_trains=4, n_stations=4, max_capacity=3)
    lay = layout(inst, solve(inst).timetable)
    for _, y in crossings(lay):
        assert band_of(lay, y) is not None


def test_km_posts_scale_the_axis():
    inst = single_train()
    tt = Timetable.from_lists([[[0, 300, 660]]], [[[0, 360, 660]]])
    lay = layout(inst, tt, km_posts=[[0.0, 1.0, 4.0]])
    tops = [b.top for b in lay.bands]
    assert (tops[2] - tops[1]) == pytest.approx(3 * (tops[1] - tops[0]))
    with pytest.raises(ValueError):
        layout(inst, tt, km_posts=[[0.0, 2.0, 1.0]])


def test_json_keys_stable():
    doc = instance_to_dict(i2())
    assert list(doc["lines"][0]["trains"][0]) == [
        "name", "dwell_min_s", "dwell_max_s", "travel_min_s", "travel_max_s", "earliest_departure_s"]
    assert re.fullmatch(r"\d+", str(doc["lines"][0]["stations"][1]["capacity"]))
