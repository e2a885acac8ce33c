"""Aligned multi-granularity cell grid and trajectory-to-cell rollup."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, NamedTuple

import numpy as np

from ._npz import savez
from .errors import DomainError, StoreFormatError
from .trajectory import KNOT, Trajectory

GRANULARITIES = (50, 200, 1000, 5000)
ANCHOR = 5000
DAY = 86_400

CELLS_FORMAT = "aiswh-cells"
CELLS_VERSION = 1

# break times closer than this (seconds, relative to trajectory start) are one instant
TIME_TOL = 1e-9


class CellKey(NamedTuple):
    granularity: int
    col: int
    row: int


@dataclass(frozen=True)
class Domain:
    """Rectangle of planar meters; sides must be multiples of 5000 m."""

    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self):
        problems = self.problems()
        if problems:
            raise DomainError("; ".join(problems))

    def problems(self) -> list[str]:
        out = []
        for name, side in (("width", self.width), ("height", self.height)):
            if side <= 0:
                out.append(f"domain {name} must be positive")
            elif side % ANCHOR:
                out.append(f"domain {name} {side} is not a multiple of {ANCHOR} m")
        return out

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    @property
    def rect(self) -> tuple[float, float, float, float]:
        return (self.x_min, self.y_min, self.x_max, self.y_max)

    def shape(self, granularity: int) -> tuple[int, int]:
        """``(cols, rows)`` of cells at ``granularity``."""
        return int(round(self.width / granularity)), int(round(self.height / granularity))

    def contains(self, x, y):
        x = np.asarray(x)
        y = np.asarray(y)
        return (x >= self.x_min) & (x < self.x_max) & (y >= self.y_min) & (y < self.y_max)

    @classmethod
    def covering(cls, x_min, y_min, x_max, y_max, origin=(0.0, 0.0)) -> "Domain":
        """Smallest 5000 m aligned domain (lattice through ``origin``) containing the box."""
        ox, oy = origin
        x0 = ox + math.floor((x_min - ox) / ANCHOR) * ANCHOR
        y0 = oy + math.floor((y_min - oy) / ANCHOR) * ANCHOR
        x1 = ox + (math.floor((x_max - ox) / ANCHOR) + 1) * ANCHOR
        y1 = oy + (math.floor((y_max - oy) / ANCHOR) + 1) * ANCHOR
        return cls(x0, y0, x1, y1)


def _check_granularity(g):
    if g not in GRANULARITIES:
        raise ValueError(f"granularity must be one of {GRANULARITIES}, got {g}")


def cell_index(x, y, granularity: int, domain: Domain):
    """Vectorized ``(col, row)`` arrays; raises :class:`DomainError` if any point is outside."""
    _check_granularity(granularity)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if not np.all(domain.contains(x, y)):
        raise DomainError("point outside the spatial domain")
    cols = np.floor((x - domain.x_min) / granularity).astype(np.int64)
    rows = np.floor((y - domain.y_min) / granularity).astype(np.int64)
    return cols, rows


def cell_of(x: float, y: float, granularity: int, domain: Domain) -> CellKey:
    cols, rows = cell_index(x, y, granularity, domain)
    return CellKey(granularity, int(cols), int(rows))


def parent(cell: CellKey) -> CellKey:
    g = cell.granularity
    _check_granularity(g)
    if g == GRANULARITIES[-1]:
        raise ValueError("a 5000 m cell has no parent")
    up = GRANULARITIES[GRANULARITIES.index(g) + 1]
    ratio = up // g
    return CellKey(up, cell.col // ratio, cell.row // ratio)


def ancestor(cell: CellKey, granularity: int) -> CellKey:
    _check_granularity(granularity)
    if granularity < cell.granularity:
        raise ValueError("target granularity is finer than the cell")
    while cell.granularity != granularity:
        cell = parent(cell)
    return cell


def cell_rect(cell: CellKey, domain: Domain) -> tuple[float, float, float, float]:
    g = cell.granularity
    x0 = domain.x_min + cell.col * g
    y0 = domain.y_min + cell.row * g
    return (x0, y0, x0 + g, y0 + g)


def date_ids(t) -> np.ndarray:
    """YYYYMMDD integers for epoch seconds (UTC)."""
    return date_ids_from_days(np.floor(np.asarray(t, dtype=float) / DAY).astype(np.int64))


def date_ids_from_days(days) -> np.ndarray:
    d = np.asarray(days, dtype=np.int64).astype("datetime64[D]")
    months = d.astype("datetime64[M]")
    year = months.astype("datetime64[Y]").astype(np.int64) + 1970
    month = months.astype(np.int64) % 12 + 1
    day = (d - months).astype(np.int64) + 1
    return (year * 10000 + month * 100 + day).astype(np.int32)


def day_of_date_id(date_id: int) -> int:
    s = f"{int(date_id):08d}"
    return int(np.datetime64(f"{s[:4]}-{s[4:6]}-{s[6:]}", "D").astype(np.int64))


EVENT_DTYPE = np.dtype([
    ("granularity", np.int32),
    ("col", np.int32),
    ("row", np.int32),
    ("traj_id", np.int64),
    ("mmsi", np.int64),
    ("t_enter", np.float64),
    ("t_exit", np.float64),
    ("duration", np.float64),
    ("avg_sog", np.float64),
    ("delta_cog", np.float64),
    ("delta_heading", np.float64),
    ("min_draught", np.float64),
    ("date_id", np.int32),
    ("infer_stopped", np.bool_),
])


def _line_crossings(rt, v, g):
    """Times where the path crosses lines ``v = k * g`` (``v`` relative to the domain origin)."""
    idx = np.floor(v / g).astype(np.int64)
    lo = np.minimum(idx[:-1], idx[1:])
    m = np.abs(np.diff(idx))
    total = int(m.sum())
    if total == 0:
        return np.zeros(0)
    seg = np.repeat(np.arange(len(m)), m)
    offset = np.arange(total) - np.repeat(np.cumsum(m) - m, m)
    line = (lo[seg] + 1 + offset) * float(g)
    s = (line - v[seg]) / (v[seg + 1] - v[seg])
    return rt[seg] + s * (rt[seg + 1] - rt[seg])


def _wrapped_abs(d):
    return np.abs((d + 180.0) % 360.0 - 180.0)


def _path_delta(values, event_of_vertex, n_events):
    """Sum of absolute wrapped changes between consecutive valid samples within each event."""
    out = np.zeros(n_events)
    vi = np.flatnonzero(~np.isnan(values))
    if len(vi) >= 2:
        a, b = vi[:-1], vi[1:]
        same = event_of_vertex[a] == event_of_vertex[b]
        np.add.at(out, event_of_vertex[a[same]], _wrapped_abs(values[b[same]] - values[a[same]]))
    return out


def rollup_cells(traj: Trajectory, granularity: int, domain: Domain) -> np.ndarray:
    """Cell events of one trajectory at one granularity (array of :data:`EVENT_DTYPE`).

    The path is cut at every crossing of a grid line, computed per segment by
    walking the lines between its end cells (the x and y line sequences of a
    DDA traversal), and at every UTC midnight. Consecutive pieces in the same
    cell and day form one event.
    """
    _check_granularity(granularity)
    g = granularity
    t0 = float(traj.t[0])
    rt = traj.t - t0
    x = traj.x - domain.x_min
    y = traj.y - domain.y_min
    if not np.all(domain.contains(traj.x, traj.y)):
        raise DomainError(f"trajectory {traj.id} leaves the spatial domain")

    first_day = math.floor(t0 / DAY)
    last_day = math.floor(float(traj.t[-1]) / DAY)
    midnights = np.arange(first_day + 1, last_day + 1, dtype=float) * DAY - t0

    breaks = np.concatenate([rt, _line_crossings(rt, x, g), _line_crossings(rt, y, g), midnights])
    breaks = np.clip(np.sort(breaks), 0.0, rt[-1])
    keep = np.concatenate([[True], np.diff(breaks) > TIME_TOL])
    breaks = breaks[keep]
    if breaks[-1] != rt[-1]:
        if rt[-1] - breaks[-1] > TIME_TOL:
            breaks = np.append(breaks, rt[-1])
        else:
            breaks[-1] = rt[-1]

    a, b = breaks[:-1], breaks[1:]
    mid = 0.5 * (a + b)
    xm = np.interp(mid, rt, x)
    ym = np.interp(mid, rt, y)
    col = np.floor(xm / g).astype(np.int64)
    row = np.floor(ym / g).astype(np.int64)
    day = np.floor((t0 + mid) / DAY).astype(np.int64)

    change = np.ones(len(mid), dtype=bool)
    change[1:] = (col[1:] != col[:-1]) | (row[1:] != row[:-1]) | (day[1:] != day[:-1])
    starts = np.flatnonzero(change)
    n_ev = len(starts)
    piece_event = np.cumsum(change) - 1
    enter = a[starts]
    exit_ = np.append(a[starts[1:]], b[-1])

    # time-weighted SOG: linear between valid samples, implied speed otherwise
    seg = np.clip(np.searchsorted(rt, mid, side="right") - 1, 0, len(rt) - 2)
    s0, s1 = traj.sog[seg], traj.sog[seg + 1]
    implied = np.hypot(np.diff(x), np.diff(y))[seg] / np.diff(rt)[seg] / KNOT
    both = ~(np.isnan(s0) | np.isnan(s1))
    span = rt[seg + 1] - rt[seg]
    va = np.where(both, s0 + (s1 - s0) * (a - rt[seg]) / span, implied)
    vb = np.where(both, s0 + (s1 - s0) * (b - rt[seg]) / span, implied)
    sog_int = np.zeros(n_ev)
    np.add.at(sog_int, piece_event, 0.5 * (va + vb) * (b - a))
    duration = exit_ - enter

    vertex_event = np.clip(np.searchsorted(enter, rt, side="right") - 1, 0, n_ev - 1)

    draught = traj.draught
    valid = ~np.isnan(draught)
    last_valid = np.maximum.accumulate(np.where(valid, np.arange(len(draught)), 0))
    filled = np.where(valid[last_valid], draught[last_valid], np.nan)
    in_force = filled[np.clip(np.searchsorted(rt, enter, side="right") - 1, 0, len(rt) - 1)]
    min_draught = np.full(n_ev, np.nan)
    np.fmin.at(min_draught, vertex_event[valid], draught[valid])
    min_draught = np.fmin(min_draught, in_force)

    out = np.zeros(n_ev, dtype=EVENT_DTYPE)
    out["granularity"] = g
    out["col"] = col[starts]
    out["row"] = row[starts]
    out["traj_id"] = traj.id
    out["mmsi"] = traj.mmsi
    out["t_enter"] = t0 + enter
    out["t_exit"] = t0 + exit_
    out["duration"] = duration
    out["avg_sog"] = sog_int / duration
    out["delta_cog"] = _path_delta(traj.cog, vertex_event, n_ev)
    out["delta_heading"] = _path_delta(traj.heading, vertex_event, n_ev)
    out["min_draught"] = min_draught
    out["date_id"] = date_ids_from_days(day[starts])
    out["infer_stopped"] = traj.infer_stopped
    return out


def rollup_all(trajectories: Iterable[Trajectory], granularity: int, domain: Domain) -> np.ndarray:
    parts = [rollup_cells(tr, granularity, domain) for tr in trajectories]
    if not parts:
        return np.zeros(0, dtype=EVENT_DTYPE)
    return np.concatenate(parts)


def count_grid_counts(events: np.ndarray, domain: Domain) -> np.ndarray:
    """``(rows, cols)`` histogram of 5000 m cell events."""
    cols, rows = domain.shape(ANCHOR)
    ev = events[events["granularity"] == ANCHOR]
    counts = np.zeros((rows, cols), dtype=np.int64)
    np.add.at(counts, (ev["row"], ev["col"]), 1)
    return counts


def write_events(path, events: np.ndarray, domain: Domain) -> None:
    """Cell-fact file: ``.npz`` with the :data:`EVENT_DTYPE` array under ``events``."""
    with open(path, "wb") as fh:
        savez(
            fh, format=np.array(CELLS_FORMAT), version=np.array(CELLS_VERSION),
            domain=np.array(domain.rect, dtype=float), events=np.asarray(events, dtype=EVENT_DTYPE),
        )


def read_events(path) -> tuple[np.ndarray, Domain]:
    with np.load(path, allow_pickle=False) as data:
        if str(data["format"]) != CELLS_FORMAT or int(data["version"]) != CELLS_VERSION:
            raise StoreFormatError(f"{path}: not a version {CELLS_VERSION} cell-fact file")
        return data["events"], Domain(*data["domain"].tolist())
