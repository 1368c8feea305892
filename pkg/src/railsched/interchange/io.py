"""JSON instance files and CSV timetables."""

from __future__ import annotations

import csv
import io
import json
from typing import Any

from railsched.model import (
    Instance,
    InstanceValidationError,
    LineTimetable,
    Timetable,
    validate_instance,
)

CSV_COLUMNS = ("line", "train", "station", "arrival_s", "departure_s")


class InstanceSyntaxError(ValueError):
    def __init__(self, msg: str, lineno: int, colno: int):
        self.lineno, self.colno = lineno, colno
        super().__init__(f"{msg} (line {lineno}, column {colno})")


class TimetableFormatError(ValueError):
    pass


def instance_to_dict(instance: Instance) -> dict[str, Any]:
    out: dict[str, Any] = {"lines": []}
    for line in instance.lines:
        d: dict[str, Any] = {
            "stations": [
                {"name": st.name, "safety_time_s": st.safety_time, "capacity": st.capacity}
                for st in line.stations
            ],
            "trains": [
                {
                    "name": tr.name,
                    "dwell_min_s": list(tr.dwell_min),
                    "dwell_max_s": list(tr.dwell_max),
                    "travel_min_s": list(tr.travel_min),
                    "travel_max_s": list(tr.travel_max),
                    "earliest_departure_s": list(tr.earliest_departure),
                }
                for tr in line.trains
            ],
        }
        if line.dispatch_order is not None:
            d["dispatch_order"] = [line.trains[t].name for t in line.dispatch_order]
        out["lines"].append(d)
    if instance.big_m is not None:
        out["big_m_s"] = instance.big_m
    return out


def write_instance(instance: Instance) -> str:
    return json.dumps(instance_to_dict(instance), indent=2) + "\n"


def parse_instance(text: str) -> Instance:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InstanceSyntaxError(exc.msg, exc.lineno, exc.colno) from None
    return validate_instance(raw)


def load_instance(path) -> Instance:
    with open(path, encoding="utf-8") as fh:
        return parse_instance(fh.read())


def write_timetable_csv(instance: Instance, timetable: Timetable) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for li, (line, lt) in enumerate(zip(instance.lines, timetable.lines)):
        for t, tr in enumerate(line.trains):
            for s, st in enumerate(line.stations):
                w.writerow([li, tr.name, st.name, lt.arrival[t][s], lt.departure[t][s]])
    return buf.getvalue()


def read_timetable_csv(instance: Instance, text: str) -> Timetable:
    """Parse a timetable CSV; trains and stations are matched by name."""
    rows = list(csv.DictReader(io.StringIO(text)))
    if rows and set(CSV_COLUMNS) - set(rows[0]):
        raise TimetableFormatError(f"expected columns {','.join(CSV_COLUMNS)}")
    grids = []
    for line in instance.lines:
        T, S = line.n_trains, line.n_stations
        grids.append(([[None] * S for _ in range(T)], [[None] * S for _ in range(T)]))
    for k, row in enumerate(rows, start=2):
        try:
            li = int(row["line"])
            line = instance.lines[li]
            t = [tr.name for tr in line.trains].index(row["train"])
            s = [st.name for st in line.stations].index(row["station"])
            arr, dep = int(row["arrival_s"]), int(row["departure_s"])
        except (ValueError, IndexError, KeyError, TypeError) as exc:
            raise TimetableFormatError(f"row {k}: {exc}") from None
        grids[li][0][t][s] = arr
        grids[li][1][t][s] = dep
    for li, (arr, dep) in enumerate(grids):
        for t, row in enumerate(arr):
            if any(v is None for v in row) or any(v is None for v in dep[t]):
                raise TimetableFormatError(f"line {li}: train {instance.lines[li].trains[t].name} incomplete")
    try:
        return Timetable(tuple(
            LineTimetable(tuple(map(tuple, arr)), tuple(map(tuple, dep))) for arr, dep in grids
        ))
    except ValueError as exc:
        raise TimetableFormatError(str(exc)) from None


__all__ = [
    "CSV_COLUMNS",
    "InstanceSyntaxError",
    "InstanceValidationError",
    "TimetableFormatError",
    "instance_to_dict",
    "load_instance",
    "parse_instance",
    "read_timetable_csv",
    "write_instance",
    "write_timetable_csv",
]
