"""Seeded instance generators.

``generate_instance`` builds a metro-corridor template (regular trains
stopping everywhere, express trains stopping at the ends and the middle
station) and then randomizes station capacities and train speeds. Per-
segment values are synthetic; only the corridor totals are meaningful.

``random_desk_instance`` draws small instances for property tests.
"""

from __future__ import annotations

import random
from dataclasses import asdict, dataclass
from typing import Any, Sequence

from railsched.interchange.io import instance_to_dict
from railsched.model import Instance, Line, Station, Train

REGULAR_TRIP_S = 52 * 60
EXPRESS_TRIP_S = 32 * 60
STOP_DWELL_S = 30
DWELL_SLACK_S = 300
TRAVEL_SLACK = 0.5


@dataclass(frozen=True)
class GeneratorOptions:
    seed: int = 0
    stations: int = 12
    trains: int = 6
    base_headway_s: int = 480
    express_fraction: float = 1 / 3
    capacity_boost_fraction: float = 0.4
    travel_inflation_fraction: float = 0.5
    max_inflation: float = 1.0
    max_capacity: int = 3

    def __post_init__(self) -> None:
        for name in ("express_fraction", "capacity_boost_fraction", "travel_inflation_fraction"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if self.max_capacity < 1:
            raise ValueError("max_capacity must be >= 1")
        if self.stations < 2:
            raise ValueError("need at least two stations")
        for name in ("trains", "max_inflation", "base_headway_s"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError("seed must be a 64-bit unsigned integer")


def _split(total: int, weights: Sequence[float]) -> list[int]:
    """Integer parts proportional to ``weights`` summing exactly to ``total``."""
    w = sum(weights)
    raw = [total * x / w for x in weights]
    parts = [max(1, int(r)) for r in raw]
    order = sorted(range(len(raw)), key=lambda k: raw[k] - int(raw[k]), reverse=True)
    k = 0
    while sum(parts) < total:
        parts[order[k % len(order)]] += 1
        k += 1
    return parts


def generate_instance(options: GeneratorOptions) -> dict[str, Any]:
    """Metro-corridor instance as an instance-file document."""
    rng = random.Random(options.seed)
    n = options.stations
    hw = options.base_headway_s
    middle = n // 2

    capacities = [1] * n
    inner = list(range(1, n - 1))
    if options.max_capacity >= 2 and inner:
        boosted = rng.sample(inner, round(options.capacity_boost_fraction * len(inner)))
        for s in sorted(boosted):
            capacities[s] = rng.randint(2, options.max_capacity)
    stations = [
        {"name": f"S{s + 1:02d}", "safety_time_s": hw, "capacity": capacities[s]}
        for s in range(n)
    ]

    weights = [rng.uniform(0.8, 1.2) for _ in range(n - 1)]
    regular_stops = list(range(1, n - 1))
    express_stops = [middle] if 0 < middle < n - 1 else []
    regular_run = _split(max(REGULAR_TRIP_S - STOP_DWELL_S * len(regular_stops), n - 1), weights)
    express_run = _split(max(EXPRESS_TRIP_S - STOP_DWELL_S * len(express_stops), n - 1), weights)

    n_express = round(options.express_fraction * options.trains)
    express = set(rng.sample(range(options.trains), n_express)) if options.trains else set()
    n_inflated = round(options.travel_inflation_fraction * options.trains)
    inflated = sorted(rng.sample(range(options.trains), n_inflated)) if options.trains else []
    factors = {t: 1.0 + options.max_inflation * (1.0 - rng.random()) for t in inflated}

    trains = []
    for t in range(options.trains):
        is_express = t in express
        stops = express_stops if is_express else regular_stops
        run = express_run if is_express else regular_run
        f = factors.get(t, 1.0)
        travel_min = [max(1, round(x * f)) for x in run]
        travel_max = [round(x * (1 + TRAVEL_SLACK)) for x in travel_min]
        dwell_min = [STOP_DWELL_S if s in stops else 0 for s in range(n)]
        dwell_max = [d + DWELL_SLACK_S if s in stops else 0 for s, d in enumerate(dwell_min)]
        dwell_max[0] = DWELL_SLACK_S
        release = [0] * n
        release[0] = t * hw
        trains.append({
            "name": f"{'E' if is_express else 'R'}{t + 1}",
            "dwell_min_s": dwell_min,
            "dwell_max_s": dwell_max,
            "travel_min_s": travel_min,
            "travel_max_s": travel_max,
            "earliest_departure_s": release,
        })

    return {
        "lines": [{"stations": stations, "trains": trains}],
        "meta": {
            "generator": "corridor",
            "options": asdict(options),
            "express": sorted(trains[t]["name"] for t in express),
            "travel_scale": {trains[t]["name"]: factors[t] for t in inflated},
        },
    }


def random_desk_instance(seed: int, n_trains: int = 3, n_stations: int = 4,
                         max_capacity: int = 2, safety_times: Sequence[int] = (60, 120),
                         n_lines: int = 1) -> Instance:
    """Small random instance with tight interactions between trains."""
    rng = random.Random(seed)
    lines = []
    for _ in range(n_lines):
        stations = tuple(
            Station(f"S{s}", rng.choice(list(safety_times)), rng.randint(1, max_capacity))
            for s in range(n_stations)
        )
        trains = []
        for t in range(n_trains):
            travel_min = tuple(rng.randint(120, 600) for _ in range(n_stations - 1))
            travel_max = tuple(x + rng.choice((0, 60, 300, 900)) for x in travel_min)
            dwell_min = tuple(rng.choice((0, 30, 60, 120)) for _ in range(n_stations))
            dwell_max = tuple(d + rng.choice((0, 120, 600, 1800)) for d in dwell_min)
            release = (rng.randint(0, 400),) + (0,) * (n_stations - 1)
            trains.append(Train(f"t{t + 1}", dwell_min, dwell_max, travel_min, travel_max, release))
        lines.append(Line(stations, tuple(trains)))
    return Instance(tuple(lines))


def desk_instance_file(seed: int, **kw) -> dict[str, Any]:
    return instance_to_dict(random_desk_instance(seed, **kw))
