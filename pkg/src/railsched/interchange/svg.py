"""Static SVG time-distance diagram.

Time runs left to right; stations run top to bottom, each drawn as a shaded
band. A train enters a band at its top edge at the arrival time and leaves at
the bottom edge at the departure time, so two trains' polylines cross inside
a band exactly when one overtakes the other there. Between bands they never
cross for a feasible timetable.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Sequence
from xml.sax.saxutils import escape

from railsched.audit import audit_timetable
from railsched.model import Instance, Timetable, _check_shape

WIDTH = 960
LEFT, RIGHT, TOP, BOTTOM = 90, 30, 40, 40
STATION_PITCH = 60
BAND = 20
PANEL_GAP = 40
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf")


class EmptyTimetable(ValueError):
    pass


class TimetableWarning(UserWarning):
    pass


@dataclass(frozen=True)
class Band:
    line: int
    station: int
    top: float
    bottom: float


@dataclass(frozen=True)
class Layout:
    height: int
    bands: tuple[Band, ...]
    polylines: tuple[tuple[int, int, tuple[tuple[float, float], ...]], ...]  # (line, train, points)


def layout(instance: Instance, timetable: Timetable,
           km_posts: Sequence[Sequence[float]] | None = None) -> Layout:
    _check_shape(instance, timetable)
    if not any(line.n_trains for line in instance.lines):
        raise EmptyTimetable("nothing to draw: no trains")
    times = [v for lt in timetable.lines for rows in (lt.arrival, lt.departure) for r in rows for v in r]
    t0, t1 = min(times), max(times)
    span = max(t1 - t0, 1)
    plot_w = WIDTH - LEFT - RIGHT

    def x(t: int) -> float:
        return round(LEFT + (t - t0) * plot_w / span, 2)

    bands, polys = [], []
    y0 = TOP
    for li, (line, lt) in enumerate(zip(instance.lines, timetable.lines)):
        S = line.n_stations
        if km_posts is not None:
            km = list(km_posts[li])
            if len(km) != S or any(b <= a for a, b in zip(km, km[1:])):
                raise ValueError("kilometer posts must be increasing, one per station")
        else:
            km = list(range(S))
        scale = STATION_PITCH * (S - 1) / max(km[-1] - km[0], 1e-9) if S > 1 else 0
        centers = [y0 + BAND / 2 + (k - km[0]) * scale for k in km]
        line_bands = [Band(li, s, round(c - BAND / 2, 2), round(c + BAND / 2, 2)) for s, c in enumerate(centers)]
        bands.extend(line_bands)
        for t in range(line.n_trains):
            pts = []
            for s, b in enumerate(line_bands):
                pts.append((x(lt.arrival[t][s]), b.top))
                pts.append((x(lt.departure[t][s]), b.bottom))
            polys.append((li, t, tuple(pts)))
        y0 = line_bands[-1].bottom + PANEL_GAP
    height = int(y0 - PANEL_GAP + BOTTOM)
    return Layout(height, tuple(bands), tuple(polys))


def render_time_distance_svg(instance: Instance, timetable: Timetable,
                             km_posts: Sequence[Sequence[float]] | None = None) -> str:
    """SVG 1.1 document with one polyline per train."""
    lay = layout(instance, timetable, km_posts)
    report = audit_timetable(instance, timetable)
    if not report.ok:
        warnings.warn(f"timetable has {len(report.violations)} constraint violations", TimetableWarning,
                      stacklevel=2)
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" height="{lay.height}" '
        f'viewBox="0 0 {WIDTH} {lay.height}">',
        '<rect x="0" y="0" width="100%" height="100%" fill="white"/>',
        '<g id="stations" font-family="sans-serif" font-size="11">',
    ]
    for b in lay.bands:
        name = escape(instance.lines[b.line].stations[b.station].name)
        out.append(f'<rect class="band" data-line="{b.line}" data-station="{b.station}" x="{LEFT}" '
                   f'y="{b.top}" width="{WIDTH - LEFT - RIGHT}" height="{round(b.bottom - b.top, 2)}" '
                   f'fill="#e8e8e8"/>')
        out.append(f'<text x="{LEFT - 6}" y="{round((b.top + b.bottom) / 2 + 4, 2)}" '
                   f'text-anchor="end">{name}</text>')
    out.append("</g>")
    out.append('<g id="trains" fill="none" stroke-width="1.5">')
    for li, t, pts in lay.polylines:
        name = escape(instance.lines[li].trains[t].name)
        color = COLORS[t % len(COLORS)]
        coords = " ".join(f"{px},{py}" for px, py in pts)
        out.append(f'<polyline class="train" data-line="{li}" data-train="{name}" stroke="{color}" '
                   f'points="{coords}"><title>{name}</title></polyline>')
    out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"


__all__ = ["Band", "EmptyTimetable", "Layout", "TimetableWarning", "layout", "render_time_distance_svg"]
