"""Big-M MILP export in LP file format, for cross-checks with external solvers.

Variable names:

* ``s_<l>_<t>_<s>`` / ``c_<l>_<t>_<s>``: arrival and departure times.
* ``xp_<l>_<a>_<b>_<s>``: ``a`` precedes ``b``.
* ``xo_<l>_<a>_<b>_<s>``: ``a`` arrives first and ``b`` overtakes it.
* ``y_<l>_<a>_<b>_<s>``: ``a`` and ``b`` may overlap at a multi-track station.

The station-capacity clique family needs one row per ``capacity + 1`` trains
at each station; above ``subset_ceiling`` rows it is skipped with a warning.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field

from railsched.events import EMPTY_MASK, FixedVariableMask, dispatch_mask, OVERTAKES
from railsched.model import Instance

DEFAULT_SUBSET_CEILING = 20_000


class SubsetExplosion(UserWarning):
    pass


@dataclass(frozen=True)
class Row:
    name: str
    terms: tuple[tuple[str, int], ...]
    sense: str  # ">=", "<=" or "="
    rhs: int


@dataclass
class MipModel:
    objective: list[str] = field(default_factory=list)
    rows: list[Row] = field(default_factory=list)
    continuous: list[str] = field(default_factory=list)
    binaries: list[str] = field(default_factory=list)
    fixed: dict[str, int] = field(default_factory=dict)
    upper: dict[str, int] = field(default_factory=dict)

    def rows_named(self, prefix: str) -> list[Row]:
        return [r for r in self.rows if r.name.startswith(prefix)]

    def to_lp(self) -> str:
        out = ["\\ railsched timetabling model", "Minimize"]
        out.extend(_wrap(" obj:", [(v, 1) for v in self.objective]))
        out.append("Subject To")
        for r in self.rows:
            out.extend(_wrap(f" {r.name}:", list(r.terms), f" {r.sense} {r.rhs}"))
        out.append("Bounds")
        for v in self.continuous:
            if v in self.upper:
                out.append(f" 0 <= {v} <= {self.upper[v]}")
        for v in self.binaries:
            if v in self.fixed:
                out.append(f" {v} = {self.fixed[v]}")
        out.append("Binaries")
        for k in range(0, len(self.binaries), 8):
            out.append(" " + " ".join(self.binaries[k:k + 8]))
        out.append("End")
        return "\n".join(out) + "\n"


def _wrap(head: str, terms: list[tuple[str, int]], tail: str = "") -> list[str]:
    parts = []
    for k, (v, c) in enumerate(terms):
        sign = "-" if c < 0 else "+"
        mag = abs(c)
        coef = f"{mag} " if mag != 1 else ""
        parts.append(f"{sign} {coef}{v}" if k or c < 0 else f"{coef}{v}")
    if not parts:
        parts = ["0 " + (terms[0][0] if terms else "")]
    lines, cur = [], head
    for p in parts:
        if len(cur) + len(p) + 1 > 200:
            lines.append(cur)
            cur = "   "
        cur += " " + p
    lines.append(cur + tail)
    return lines


def build_mip(instance: Instance, mask: FixedVariableMask | None = None,
              subset_ceiling: int = DEFAULT_SUBSET_CEILING) -> MipModel:
    mask = (mask or EMPTY_MASK).union(dispatch_mask(instance))
    M = instance.effective_big_m
    m = MipModel()
    rows = m.rows

    def row(name, terms, sense, rhs):
        rows.append(Row(name, tuple(terms), sense, rhs))

    for li, line in enumerate(instance.lines):
        S, T = line.n_stations, line.n_trains

        def s_(t, s):
            return f"s_{li}_{t}_{s}"

        def c_(t, s):
            return f"c_{li}_{t}_{s}"

        def xp(a, b, s):
            return f"xp_{li}_{a}_{b}_{s}"

        def xo(a, b, s):
            return f"xo_{li}_{a}_{b}_{s}"

        def y(a, b, s):
            return f"y_{li}_{a}_{b}_{s}"

        for t, tr in enumerate(line.trains):
            for s in range(S):
                m.continuous += [s_(t, s), c_(t, s)]
                row(f"dwmin_{li}_{t}_{s}", [(c_(t, s), 1), (s_(t, s), -1)], ">=", tr.dwell_min[s])
                row(f"dwmax_{li}_{t}_{s}", [(c_(t, s), 1), (s_(t, s), -1)], "<=", tr.dwell_max[s])
                if tr.earliest_departure[s]:
                    row(f"rel_{li}_{t}_{s}", [(c_(t, s), 1)], ">=", tr.earliest_departure[s])
                if s < line.last:
                    d = [(s_(t, s + 1), 1), (c_(t, s), -1)]
                    row(f"trmin_{li}_{t}_{s}", d, ">=", tr.travel_min[s])
                    row(f"trmax_{li}_{t}_{s}", d, "<=", tr.travel_max[s])
            m.objective.append(c_(t, line.last))

        for s, st in enumerate(line.stations):
            sf = st.safety_time
            multi = st.capacity >= 2
            for (i, j) in line.pairs():
                for a, b in ((i, j), (j, i)):
                    m.binaries += [xp(a, b, s), xo(a, b, s)]
                    if multi:
                        m.binaries.append(y(a, b, s))
                for a, b in ((i, j), (j, i)):
                    tag = f"{li}_{a}_{b}_{s}"
                    # a precedes b
                    row(f"parr_{tag}", [(s_(b, s), 1), (s_(a, s), -1), (xp(a, b, s), -M)], ">=", sf - M)
                    row(f"pdep_{tag}", [(c_(b, s), 1), (c_(a, s), -1), (xp(a, b, s), -M)], ">=", sf - M)
                    clear = [(s_(b, s), 1), (c_(a, s), -1), (xp(a, b, s), -M)]
                    if multi:
                        row(f"pclr_{tag}", clear + [(y(a, b, s), M)], ">=", sf - M)
                        row(f"ylink_{tag}", [(y(a, b, s), 1), (xp(a, b, s), -1)], "<=", 0)
                    else:
                        row(f"pcap_{tag}", clear, ">=", sf - M)
                    # b overtakes a
                    row(f"oarr_{tag}", [(s_(b, s), 1), (s_(a, s), -1), (xo(a, b, s), -M)], ">=", sf - M)
                    row(f"odep_{tag}", [(c_(a, s), 1), (c_(b, s), -1), (xo(a, b, s), -M)], ">=", sf - M)
                row(f"part_{li}_{i}_{j}_{s}",
                    [(xp(i, j, s), 1), (xp(j, i, s), 1), (xo(i, j, s), 1), (xo(j, i, s), 1)], "=", 1)
                if s < line.last:
                    row(f"fifo_{li}_{i}_{j}_{s}",
                        [(xp(i, j, s), 1), (xo(j, i, s), 1), (xp(i, j, s + 1), -1), (xo(i, j, s + 1), -1)],
                        "=", 0)

            if multi:
                for t in range(T):
                    terms = []
                    for t2 in range(T):
                        if t2 != t:
                            terms += [(xo(t, t2, s), 1), (xo(t2, t, s), 1), (y(t, t2, s), 1), (y(t2, t, s), 1)]
                    if terms:
                        row(f"budget_{li}_{t}_{s}", terms, "<=", st.capacity - 1)

            k = st.capacity + 1
            n_subsets = math.comb(T, k)
            if n_subsets == 0:
                continue
            if n_subsets > subset_ceiling:
                warnings.warn(
                    f"line {li} station {s}: {n_subsets} capacity subsets exceed ceiling {subset_ceiling}; "
                    "only cuts for fixed overtakes are emitted", SubsetExplosion, stacklevel=2)
                fixed_edges = {frozenset((a, b)) for (l2, a, b, s2), e in mask.fixed.items()
                               if l2 == li and s2 == s and e.kind == OVERTAKES}
                subsets = [c for c in itertools.combinations(range(T), k)
                           if all(frozenset(p) in fixed_edges for p in itertools.combinations(c, 2))] \
                    if fixed_edges else []
            else:
                subsets = itertools.combinations(range(T), k)
            for sub in subsets:
                terms = []
                for a, b in itertools.combinations(sub, 2):
                    terms += [(xo(a, b, s), 1), (xo(b, a, s), 1)]
                row(f"clique_{li}_{s}_" + "_".join(map(str, sub)), terms, "<=", math.comb(k, 2) - 1)

        for (ov, od, s) in sorted(mask.line_forbidden(li)):
            m.fixed[xo(od, ov, s)] = 0
        for (i, j, s), e in sorted(mask.line_fixed(li).items()):
            name = xp(e.first, e.second, s) if e.kind != OVERTAKES else xo(e.first, e.second, s)
            m.fixed[name] = 1
    return m


def export_mip(instance: Instance, mask: FixedVariableMask | None = None,
               subset_ceiling: int = DEFAULT_SUBSET_CEILING) -> str:
    """The instance as an LP-format MILP."""
    return build_mip(instance, mask, subset_ceiling).to_lp()


__all__ = ["DEFAULT_SUBSET_CEILING", "MipModel", "Row", "SubsetExplosion", "build_mip", "export_mip"]
