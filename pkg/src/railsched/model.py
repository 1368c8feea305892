"""Instance and timetable types for double-track, uni-directional lines.

All times are integer seconds. Indices are zero-based: station ``0`` is the
first station of a line and ``len(stations) - 1`` the last one. Lines are
independent of each other; every per-line quantity is indexed ``[line]``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Mapping, Sequence


class ModelError(Exception):
    """Base class for errors raised by the model layer."""


class MissingTrain(ModelError):
    pass


@dataclass(frozen=True)
class ValidationIssue:
    code: str
    path: str
    message: str

    def __str__(self) -> str:
        return f"{self.code} at {self.path}: {self.message}"


class InstanceValidationError(ModelError):
    """Raised with every invariant breach found in an instance description."""

    def __init__(self, issues: Sequence[ValidationIssue]):
        self.issues = list(issues)
        super().__init__("; ".join(str(i) for i in self.issues))

    @property
    def codes(self) -> list[str]:
        return [i.code for i in self.issues]


@dataclass(frozen=True)
class Station:
    name: str
    safety_time: int
    capacity: int


@dataclass(frozen=True)
class Train:
    name: str
    dwell_min: tuple[int, ...]
    dwell_max: tuple[int, ...]
    travel_min: tuple[int, ...]
    travel_max: tuple[int, ...]
    earliest_departure: tuple[int, ...]


@dataclass(frozen=True)
class Line:
    stations: tuple[Station, ...]
    trains: tuple[Train, ...]
    dispatch_order: tuple[int, ...] | None = None

    @property
    def n_stations(self) -> int:
        return len(self.stations)

    @property
    def n_trains(self) -> int:
        return len(self.trains)

    @property
    def last(self) -> int:
        return len(self.stations) - 1

    def pairs(self) -> list[tuple[int, int]]:
        n = len(self.trains)
        return [(i, j) for i in range(n) for j in range(i + 1, n)]


@dataclass(frozen=True)
class Instance:
    lines: tuple[Line, ...]
    big_m: int | None = None

    def default_big_m(self) -> int:
        """A horizon that dominates every feasible time of the instance."""
        total = 0
        max_release = 0
        max_sf = 0
        max_stations = 0
        for line in self.lines:
            for tr in line.trains:
                total += sum(tr.travel_max) + sum(tr.dwell_max)
                max_release = max(max_release, *tr.earliest_departure, 0)
            for st in line.stations:
                max_sf = max(max_sf, st.safety_time)
            max_stations = max(max_stations, line.n_stations)
        return total + max_release + max_stations * max_sf

    @property
    def effective_big_m(self) -> int:
        return self.big_m if self.big_m is not None else self.default_big_m()


@dataclass(frozen=True)
class LineTimetable:
    arrival: tuple[tuple[int, ...], ...]
    departure: tuple[tuple[int, ...], ...]


@dataclass(frozen=True)
class Timetable:
    """Arrival and departure seconds, indexed ``[line][train][station]``."""

    lines: tuple[LineTimetable, ...]

    def __post_init__(self) -> None:
        for lt in self.lines:
            for rows in (lt.arrival, lt.departure):
                for row in rows:
                    for v in row:
                        if v < 0:
                            raise ValueError("timetable times must be non-negative")

    def arrival(self, line: int, train: int, station: int) -> int:
        return self.lines[line].arrival[train][station]

    def departure(self, line: int, train: int, station: int) -> int:
        return self.lines[line].departure[train][station]

    @classmethod
    def from_lists(cls, arrivals: Sequence, departures: Sequence) -> "Timetable":
        return cls(tuple(
            LineTimetable(
                tuple(tuple(int(v) for v in row) for row in arr),
                tuple(tuple(int(v) for v in row) for row in dep),
            )
            for arr, dep in zip(arrivals, departures)
        ))


# --------------------------------------------------------------------------
# validation

_REQUIRED_TRAIN_ARRAYS = (
    ("dwell_min_s", "station"),
    ("dwell_max_s", "station"),
    ("travel_min_s", "segment"),
    ("travel_max_s", "segment"),
    ("earliest_departure_s", "station"),
)


def _is_int(v: Any) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def validate_instance(raw: Mapping[str, Any]) -> Instance:
    """Build an :class:`Instance` from a JSON-shaped mapping.

    Every breach is collected before raising, so callers see all problems at
    once in :class:`InstanceValidationError`. Paths follow the JSON layout,
    e.g. ``lines[0].trains[1].dwell_min_s[2]``.
    """
    issues: list[ValidationIssue] = []

    def bad(code: str, path: str, msg: str) -> None:
        issues.append(ValidationIssue(code, path, msg))

    if not isinstance(raw, Mapping):
        raise InstanceValidationError([ValidationIssue("SchemaError", "$", "expected an object")])
    raw_lines = raw.get("lines")
    if not isinstance(raw_lines, list):
        raise InstanceValidationError([ValidationIssue("MissingField", "lines", "expected a list of lines")])

    big_m = raw.get("big_m_s")
    if big_m is not None and (not _is_int(big_m) or big_m <= 0):
        bad("SchemaError", "big_m_s", "must be a positive integer")

    lines: list[Line] = []
    for li, rl in enumerate(raw_lines):
        lp = f"lines[{li}]"
        if not isinstance(rl, Mapping):
            bad("SchemaError", lp, "expected an object")
            continue
        stations: list[Station] = []
        raw_stations = rl.get("stations")
        if not isinstance(raw_stations, list) or not raw_stations:
            bad("MissingField", f"{lp}.stations", "expected a non-empty list")
            raw_stations = []
        for si, rs in enumerate(raw_stations):
            sp = f"{lp}.stations[{si}]"
            if not isinstance(rs, Mapping):
                bad("SchemaError", sp, "expected an object")
                continue
            name = rs.get("name", f"S{si}")
            ok = True
            for key in ("safety_time_s", "capacity"):
                if key not in rs:
                    bad("MissingField", f"{sp}.{key}", "required")
                    ok = False
                elif not _is_int(rs[key]):
                    bad("SchemaError", f"{sp}.{key}", "must be an integer")
                    ok = False
            if not ok:
                continue
            if rs["capacity"] < 1:
                bad("NonPositiveCapacity", f"{sp}.capacity", f"capacity {rs['capacity']} < 1")
            if rs["safety_time_s"] < 0:
                bad("NegativeDuration", f"{sp}.safety_time_s", "safety time must be >= 0")
            stations.append(Station(str(name), rs["safety_time_s"], rs["capacity"]))

        n_st = len(raw_stations)
        trains: list[Train] = []
        names: list[str] = []
        raw_trains = rl.get("trains", [])
        if not isinstance(raw_trains, list):
            bad("SchemaError", f"{lp}.trains", "expected a list")
            raw_trains = []
        for ti, rt in enumerate(raw_trains):
            tp = f"{lp}.trains[{ti}]"
            if not isinstance(rt, Mapping):
                bad("SchemaError", tp, "expected an object")
                continue
            arrays: dict[str, tuple[int, ...]] = {}
            for key, kind in _REQUIRED_TRAIN_ARRAYS:
                want = n_st if kind == "station" else max(n_st - 1, 0)
                arr = rt.get(key)
                if arr is None:
                    if key == "earliest_departure_s":
                        arrays[key] = (0,) * n_st
                        continue
                    bad("MissingField", f"{tp}.{key}", "required")
                    continue
                if not isinstance(arr, list) or not all(_is_int(v) for v in arr):
                    bad("SchemaError", f"{tp}.{key}", "expected a list of integers")
                    continue
                if len(arr) != want:
                    bad("ArrayLengthMismatch", f"{tp}.{key}",
                        f"length {len(arr)}, expected {want} ({kind} count)")
                    continue
                for k, v in enumerate(arr):
                    if v < 0:
                        bad("NegativeDuration", f"{tp}.{key}[{k}]", f"{v} < 0")
                arrays[key] = tuple(arr)
            if len(arrays) != len(_REQUIRED_TRAIN_ARRAYS):
                continue
            for s in range(n_st):
                lo, hi = arrays["dwell_min_s"][s], arrays["dwell_max_s"][s]
                if lo > hi:
                    bad("DwellBoundsInverted", f"{tp}.dwell_min_s[{s}]",
                        f"train {ti}, station {s}: min {lo} > max {hi}")
            for s in range(n_st - 1):
                lo, hi = arrays["travel_min_s"][s], arrays["travel_max_s"][s]
                if lo > hi:
                    bad("TravelBoundsInverted", f"{tp}.travel_min_s[{s}]",
                        f"train {ti}, segment {s}: min {lo} > max {hi}")
                if lo < 1:
                    bad("NonPositiveTravel", f"{tp}.travel_min_s[{s}]",
                        f"train {ti}, segment {s}: minimum travel must be >= 1")
            name = str(rt.get("name", f"T{ti}"))
            names.append(name)
            trains.append(Train(
                name,
                arrays["dwell_min_s"], arrays["dwell_max_s"],
                arrays["travel_min_s"], arrays["travel_max_s"],
                arrays["earliest_departure_s"],
            ))

        order = None
        raw_order = rl.get("dispatch_order")
        if raw_order is not None:
            if (not isinstance(raw_order, list) or sorted(map(str, raw_order)) != sorted(names)
                    or len(set(names)) != len(names)):
                bad("BadDispatchOrder", f"{lp}.dispatch_order",
                    "must list every train name of the line exactly once")
            else:
                order = tuple(names.index(str(n)) for n in raw_order)
        lines.append(Line(tuple(stations), tuple(trains), order))

    if issues:
        raise InstanceValidationError(issues)
    return Instance(tuple(lines), big_m)


def check_instance(instance: Instance) -> Instance:
    """Re-validate an instance built directly from dataclasses."""
    from railsched.interchange.io import instance_to_dict

    return validate_instance(instance_to_dict(instance))


# --------------------------------------------------------------------------
# calculators

def _check_shape(instance: Instance, timetable: Timetable) -> None:
    if len(timetable.lines) != len(instance.lines):
        raise MissingTrain(f"timetable has {len(timetable.lines)} lines, instance {len(instance.lines)}")
    for li, (line, lt) in enumerate(zip(instance.lines, timetable.lines)):
        for rows in (lt.arrival, lt.departure):
            if len(rows) != line.n_trains:
                raise MissingTrain(f"line {li}: timetable covers {len(rows)} of {line.n_trains} trains")
            for t, row in enumerate(rows):
                if len(row) != line.n_stations:
                    raise MissingTrain(f"line {li}, train {t}: {len(row)} stations, expected {line.n_stations}")


def objective(instance: Instance, timetable: Timetable) -> int:
    """Sum over lines and trains of the departure time at the last station."""
    _check_shape(instance, timetable)
    return sum(
        dep[line.last]
        for line, lt in zip(instance.lines, timetable.lines)
        for dep in lt.departure
    )


def intervals(timetable: Timetable, t: int, t2: int, s: int, line: int = 0) -> tuple[int, int]:
    """Return ``(psi, theta)`` for trains ``t`` and ``t2`` at station ``s``.

    ``psi`` is the arrival of ``t2`` minus the departure of ``t``; ``theta``
    is the difference of their departures. Both can be negative.
    """
    lt = timetable.lines[line]
    psi = lt.arrival[t2][s] - lt.departure[t][s]
    theta = lt.departure[t2][s] - lt.departure[t][s]
    return psi, theta
