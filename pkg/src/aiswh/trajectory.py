"""Trajectory construction, outlier removal and SED line simplification."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import ConfigError, StoreFormatError
from .ingest import AisRecord, records_to_columns

KNOT = 1852.0 / 3600.0  # m/s

TRAJECTORIES_FORMAT = "aiswh-trajectories"
TRAJECTORIES_VERSION = 1

SAMPLE_FIELDS = ("sog", "cog", "heading", "draught")


@dataclass(frozen=True)
class TrajectoryParams:
    gap_split: float = 300.0
    stop_sog: float = 0.5
    stop_min_duration: float = 300.0
    outlier_speed: float = 100.0
    simplify_epsilon: float = 10.0

    def __post_init__(self):
        bad = [f"{name} must be > 0" for name, v in vars(self).items() if not v > 0]
        if bad:
            raise ConfigError(bad)


@dataclass(eq=False)
class Trajectory:
    """Time-ordered positions of one ship with per-point optional samples.

    Absent samples are NaN. ``t`` is in seconds since the epoch.
    """

    id: int
    mmsi: int
    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    sog: np.ndarray = None
    cog: np.ndarray = None
    heading: np.ndarray = None
    draught: np.ndarray = None
    infer_stopped: bool = False
    destination: str | None = None

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.x = np.asarray(self.x, dtype=float)
        self.y = np.asarray(self.y, dtype=float)
        n = len(self.t)
        for name in SAMPLE_FIELDS:
            v = getattr(self, name)
            setattr(self, name, np.full(n, np.nan) if v is None else np.asarray(v, dtype=float))
        if n < 2:
            raise ValueError("a trajectory needs at least two points")
        if not np.all(np.diff(self.t) > 0):
            raise ValueError("trajectory timestamps must be strictly increasing")

    def __len__(self):
        return len(self.t)

    @property
    def duration(self) -> float:
        return float(self.t[-1] - self.t[0])

    @property
    def length(self) -> float:
        return float(np.hypot(np.diff(self.x), np.diff(self.y)).sum())

    def take(self, index) -> "Trajectory":
        return Trajectory(
            id=self.id, mmsi=self.mmsi, t=self.t[index], x=self.x[index], y=self.y[index],
            sog=self.sog[index], cog=self.cog[index], heading=self.heading[index],
            draught=self.draught[index], infer_stopped=self.infer_stopped,
            destination=self.destination,
        )

    def position_at(self, t):
        """Linearly interpolated position at time(s) ``t``."""
        return np.interp(t, self.t, self.x), np.interp(t, self.t, self.y)

    def same_as(self, other: "Trajectory") -> bool:
        if (self.id, self.mmsi, self.infer_stopped, self.destination) != (
            other.id, other.mmsi, other.infer_stopped, other.destination
        ):
            return False
        return all(
            np.array_equal(getattr(self, f), getattr(other, f), equal_nan=True)
            for f in ("t", "x", "y") + SAMPLE_FIELDS
        )


def implied_speed(t, x, y) -> np.ndarray:
    """Speed in knots of every consecutive segment."""
    return np.hypot(np.diff(x), np.diff(y)) / np.diff(t) / KNOT


def remove_outliers(t, x, y, outlier_speed: float) -> np.ndarray:
    """Indices of the points kept by a greedy forward implied-speed filter.

    A point is dropped when the speed needed to reach it from the last kept
    point exceeds ``outlier_speed`` knots. The first point is always kept.
    """
    t = np.asarray(t, dtype=float)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = len(t)
    if n == 0:
        return np.zeros(0, dtype=np.intp)
    limit = outlier_speed * KNOT
    keep = [0]
    last = 0
    for i in range(1, n):
        if math.hypot(x[i] - x[last], y[i] - y[last]) <= limit * (t[i] - t[last]):
            keep.append(i)
            last = i
    return np.asarray(keep, dtype=np.intp)


def stopped_samples(t, x, y, sog, stop_sog: float) -> np.ndarray:
    """Per-sample stop predicate: SOG below ``stop_sog``, implied speed if SOG is absent."""
    n = len(t)
    speed = np.asarray(sog, dtype=float).copy()
    missing = np.isnan(speed)
    if missing.any():
        if n >= 2:
            seg = implied_speed(t, x, y)
            fallback = np.concatenate([seg[:1], seg])
        else:
            fallback = np.full(n, np.inf)
        speed[missing] = fallback[missing]
    return speed < stop_sog


def _runs(mask: np.ndarray) -> list[tuple[int, int]]:
    """Inclusive ``(start, end)`` index pairs of the True runs in ``mask``."""
    padded = np.concatenate([[False], mask, [False]]).astype(np.int8)
    edges = np.flatnonzero(np.diff(padded))
    return [(int(a), int(b) - 1) for a, b in zip(edges[::2], edges[1::2])]


def segment_stops(t, stopped: np.ndarray, min_duration: float) -> list[tuple[int, int, bool]]:
    """Split one gap-free piece into ``(start, end, is_stopped)`` blocks (end exclusive)."""
    n = len(t)
    blocks = []
    cursor = 0
    for a, b in _runs(stopped):
        if t[b] - t[a] >= min_duration:
            if a > cursor:
                blocks.append((cursor, a, False))
            blocks.append((a, b + 1, True))
            cursor = b + 1
    if cursor < n:
        blocks.append((cursor, n, False))
    return blocks


def _last_text(values) -> str | None:
    for v in reversed(values):
        if v:
            return str(v)
    return None


def build_trajectories(records: Sequence[AisRecord] | dict, params: TrajectoryParams | None = None,
                       first_id: int = 1) -> list[Trajectory]:
    """Group cleaned records by MMSI and cut them into stopped/moving trajectories.

    Per ship: sort by time, drop repeated timestamps (first wins), remove
    implied-speed outliers, split at silences longer than ``gap_split``, then
    carve out stop runs lasting at least ``stop_min_duration``. Blocks with a
    single point are discarded.
    """
    params = params or TrajectoryParams()
    cols = records if isinstance(records, dict) else records_to_columns(records)
    if len(cols["t"]) == 0:
        return []
    mmsi_all = np.asarray(cols["mmsi"], dtype=np.int64)
    t_all = np.asarray(cols["t"], dtype=float)
    order = np.lexsort((t_all, mmsi_all))
    mmsi_sorted = mmsi_all[order]
    bounds = np.flatnonzero(np.diff(mmsi_sorted)) + 1
    starts = np.concatenate([[0], bounds])
    ends = np.concatenate([bounds, [len(order)]])

    dest_all = cols.get("destination")
    out = []
    next_id = first_id
    for s, e in zip(starts, ends):
        idx = order[s:e]
        t = t_all[idx]
        first = np.concatenate([[True], np.diff(t) > 0])
        idx = idx[first]
        t = t[first]
        x = np.asarray(cols["x"], dtype=float)[idx]
        y = np.asarray(cols["y"], dtype=float)[idx]
        kept = remove_outliers(t, x, y, params.outlier_speed)
        idx, t, x, y = idx[kept], t[kept], x[kept], y[kept]
        samples = {f: np.asarray(cols[f], dtype=float)[idx] for f in SAMPLE_FIELDS}
        dest = dest_all[idx] if dest_all is not None else None

        cuts = np.flatnonzero(np.diff(t) > params.gap_split) + 1
        piece_bounds = np.concatenate([[0], cuts, [len(t)]])
        for ps, pe in zip(piece_bounds[:-1], piece_bounds[1:]):
            if pe - ps < 2:
                continue
            pt, px, py = t[ps:pe], x[ps:pe], y[ps:pe]
            stopped = stopped_samples(pt, px, py, samples["sog"][ps:pe], params.stop_sog)
            for bs, be, is_stop in segment_stops(pt, stopped, params.stop_min_duration):
                if be - bs < 2:
                    continue
                sl = slice(ps + bs, ps + be)
                out.append(Trajectory(
                    id=next_id, mmsi=int(mmsi_all[idx[0]]), t=t[sl], x=x[sl], y=y[sl],
                    sog=samples["sog"][sl], cog=samples["cog"][sl],
                    heading=samples["heading"][sl], draught=samples["draught"][sl],
                    infer_stopped=is_stop,
                    destination=_last_text(dest[sl]) if dest is not None else None,
                ))
                next_id += 1
    return out


def sed(t, x, y, t0, x0, y0, t1, x1, y1):
    """Synchronized Euclidean distance of points to the segment (t0,x0,y0)-(t1,x1,y1)."""
    f = (np.asarray(t) - t0) / (t1 - t0)
    return np.hypot(np.asarray(x) - (x0 + f * (x1 - x0)), np.asarray(y) - (y0 + f * (y1 - y0)))


def douglas_peucker_sed(t, x, y, epsilon: float) -> np.ndarray:
    """Indices kept by Douglas-Peucker under SED; ties split at the lowest index."""
    n = len(t)
    if n <= 2:
        return np.arange(n)
    keep = np.zeros(n, dtype=bool)
    keep[0] = keep[-1] = True
    stack = [(0, n - 1)]
    while stack:
        i, j = stack.pop()
        if j - i < 2:
            continue
        d = sed(t[i + 1:j], x[i + 1:j], y[i + 1:j], t[i], x[i], y[i], t[j], x[j], y[j])
        k = int(np.argmax(d))
        if d[k] > epsilon:
            m = i + 1 + k
            keep[m] = True
            stack.append((m, j))
            stack.append((i, m))
    return np.flatnonzero(keep)


def simplify(traj: Trajectory, epsilon: float) -> Trajectory:
    if not epsilon > 0:
        raise ValueError("epsilon must be > 0")
    return traj.take(douglas_peucker_sed(traj.t, traj.x, traj.y, epsilon))


# -- trajectory store ------------------------------------------------------

def _encode(a: np.ndarray) -> list:
    return [None if math.isnan(v) else v for v in a.tolist()]


def _decode(values) -> np.ndarray:
    return np.array([np.nan if v is None else v for v in values], dtype=float)


def write_trajectories(path, trajectories: Iterable[Trajectory]) -> int:
    """Write newline-delimited JSON: a header line, then one trajectory per line.

    Each line carries ``id, mmsi, infer_stopped, duration, length,
    destination`` and the point arrays ``t, x, y, sog, cog, heading,
    draught`` with ``null`` for absent samples. Returns the count written.
    """
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"format": TRAJECTORIES_FORMAT, "version": TRAJECTORIES_VERSION}) + "\n")
        for tr in trajectories:
            doc = {
                "id": tr.id, "mmsi": tr.mmsi, "infer_stopped": tr.infer_stopped,
                "duration": tr.duration, "length": tr.length, "destination": tr.destination,
                "t": tr.t.tolist(), "x": tr.x.tolist(), "y": tr.y.tolist(),
            }
            for f in SAMPLE_FIELDS:
                doc[f] = _encode(getattr(tr, f))
            fh.write(json.dumps(doc, allow_nan=False) + "\n")
            n += 1
    return n


def iter_trajectories(path) -> Iterator[Trajectory]:
    with open(path, encoding="utf-8") as fh:
        header = json.loads(fh.readline() or "{}")
        if header.get("format") != TRAJECTORIES_FORMAT or header.get("version") != TRAJECTORIES_VERSION:
            raise StoreFormatError(f"{path}: not a version {TRAJECTORIES_VERSION} trajectory store")
        for line in fh:
            doc = json.loads(line)
            yield Trajectory(
                id=doc["id"], mmsi=doc["mmsi"], t=doc["t"], x=doc["x"], y=doc["y"],
                infer_stopped=doc["infer_stopped"], destination=doc["destination"],
                **{f: _decode(doc[f]) for f in SAMPLE_FIELDS},
            )


def read_trajectories(path) -> list[Trajectory]:
    return list(iter_trajectories(path))
