"""Seeded synthetic AIS fleets.

``skewed_fleet`` puts most ships on a few shipping lanes between ports,
with port stops, and a minority of slow wandering vessels elsewhere, which
gives the high/low traffic contrast sea-lane data has. ``lane_grid_fleet``
gives perfectly uniform 5000 m cell coverage, one ship per grid row.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .grid import ANCHOR, Domain
from .ingest import Projection, format_timestamp
from .trajectory import KNOT

DMA_HEADER = [
    "# Timestamp", "Type of mobile", "MMSI", "Latitude", "Longitude", "Navigational status",
    "ROT", "SOG", "COG", "Heading", "IMO", "Callsign", "Name", "Ship type", "Cargo type",
    "Width", "Length", "Type of position fixing device", "Draught", "Destination", "ETA",
    "Data source type", "A", "B", "C", "D",
]

FLEET_FIELDS = ("t", "mmsi", "x", "y", "sog", "cog", "heading", "draught",
                "dim_bow", "dim_stern", "dim_port", "dim_starboard")


@dataclass(frozen=True)
class FleetConfig:
    seed: int = 0
    n_points: int = 10_000
    n_ships: int = 40
    n_lanes: int = 3
    n_days: int = 3
    start: int = 1_614_470_400  # 2021-02-28T00:00:00Z
    interval: int = 10
    wander_fraction: float = 0.15
    lane_width: float = 300.0
    outlier_fraction: float = 0.0
    margin: float = 2_000.0


def _bearing(dx, dy):
    return np.degrees(np.arctan2(dx, dy)) % 360.0


def _make_lanes(rng, domain: Domain, n_lanes: int, margin: float):
    """Random polylines between two opposite-ish edges, with two interior bends."""
    lanes = []
    w, h = domain.width - 2 * margin, domain.height - 2 * margin
    x0, y0 = domain.x_min + margin, domain.y_min + margin
    for _ in range(n_lanes):
        if rng.random() < 0.5:
            a = (x0, y0 + rng.uniform(0.1, 0.9) * h)
            b = (x0 + w, y0 + rng.uniform(0.1, 0.9) * h)
        else:
            a = (x0 + rng.uniform(0.1, 0.9) * w, y0)
            b = (x0 + rng.uniform(0.1, 0.9) * w, y0 + h)
        pts = [a]
        for f in (1 / 3, 2 / 3):
            px = a[0] + f * (b[0] - a[0]) + rng.normal(0, 0.05 * w)
            py = a[1] + f * (b[1] - a[1]) + rng.normal(0, 0.05 * h)
            pts.append((min(max(px, x0), x0 + w), min(max(py, y0), y0 + h)))
        pts.append(b)
        lanes.append(np.array(pts))
    return lanes


def _along(lane, s):
    """Positions and unit directions at arc lengths ``s`` along ``lane``."""
    seg = np.diff(lane, axis=0)
    seg_len = np.hypot(seg[:, 0], seg[:, 1])
    cum = np.concatenate([[0.0], np.cumsum(seg_len)])
    s = np.clip(s, 0.0, cum[-1])
    i = np.clip(np.searchsorted(cum, s, side="right") - 1, 0, len(seg) - 1)
    f = (s - cum[i]) / seg_len[i]
    pos = lane[i] + f[:, None] * seg[i]
    direction = seg[i] / seg_len[i][:, None]
    return pos, direction, cum[-1]


def _times(rng, start, n, interval):
    steps = np.maximum(1, interval + rng.integers(-2, 3, size=n - 1))
    return start + np.concatenate([[0], np.cumsum(steps)])


def _lane_ship(rng, lane, n, t_start, interval, lane_width):
    t = _times(rng, t_start, n, interval)
    speed = rng.uniform(8, 16) * KNOT
    offset = rng.normal(0, lane_width / 2)
    length = _along(lane, np.zeros(1))[2]
    s = rng.uniform(0, length)
    forward = rng.random() < 0.5
    stop_left = 0.0
    xs, ys, sog, cog = np.empty(n), np.empty(n), np.empty(n), np.empty(n)
    stop_pos = None
    for k in range(n):
        dt = 0.0 if k == 0 else t[k] - t[k - 1]
        if stop_left > 0:
            stop_left -= dt
            xs[k] = stop_pos[0] + rng.normal(0, 2)
            ys[k] = stop_pos[1] + rng.normal(0, 2)
            sog[k] = rng.uniform(0.0, 0.2)
            cog[k] = rng.uniform(0, 360)
            continue
        s += speed * dt if forward else -speed * dt
        if s >= length or s <= 0:
            s = min(max(s, 0.0), length)
            forward = not forward
            stop_left = rng.uniform(40, 120) * 60
        pos, d, _ = _along(lane, np.array([s]))
        normal = np.array([-d[0, 1], d[0, 0]])
        p = pos[0] + normal * offset + rng.normal(0, 3, size=2)
        if stop_left > 0:
            stop_pos = p
        xs[k], ys[k] = p
        sign = 1 if forward else -1
        sog[k] = speed / KNOT + rng.normal(0, 0.3)
        cog[k] = _bearing(sign * d[0, 0], sign * d[0, 1])
    return t, xs, ys, sog, cog


def _wanderer(rng, domain, n, t_start, interval, margin):
    t = _times(rng, t_start, n, interval)
    speed = rng.uniform(2, 6) * KNOT
    x = rng.uniform(domain.x_min + margin, domain.x_max - margin)
    y = rng.uniform(domain.y_min + margin, domain.y_max - margin)
    course = rng.uniform(0, 2 * math.pi)
    xs, ys, cog = np.empty(n), np.empty(n), np.empty(n)
    lo_x, hi_x = domain.x_min + margin, domain.x_max - margin
    lo_y, hi_y = domain.y_min + margin, domain.y_max - margin
    for k in range(n):
        dt = 0.0 if k == 0 else t[k] - t[k - 1]
        course += rng.normal(0, 0.15)
        x += math.sin(course) * speed * dt
        y += math.cos(course) * speed * dt
        if not lo_x <= x <= hi_x:
            x = min(max(x, lo_x), hi_x)
            course = -course
        if not lo_y <= y <= hi_y:
            y = min(max(y, lo_y), hi_y)
            course = math.pi - course
        xs[k], ys[k] = x, y
        cog[k] = math.degrees(course) % 360
    sog = np.full(n, speed / KNOT) + rng.normal(0, 0.2, size=n)
    return t, xs, ys, np.abs(sog), cog


def skewed_fleet(domain: Domain, config: FleetConfig | None = None) -> dict[str, np.ndarray]:
    """Column dict of AIS reports in planar meters (``t`` in epoch seconds)."""
    cfg = config or FleetConfig()
    rng = np.random.default_rng(cfg.seed)
    lanes = _make_lanes(rng, domain, cfg.n_lanes, cfg.margin)
    per_ship = max(2, cfg.n_points // cfg.n_ships)
    cols = {f: [] for f in FLEET_FIELDS}
    cols["destination"] = []
    horizon = cfg.n_days * 86_400
    for i in range(cfg.n_ships):
        n = per_ship if i < cfg.n_ships - 1 else max(2, cfg.n_points - per_ship * (cfg.n_ships - 1))
        span = n * cfg.interval
        t_start = cfg.start + int(rng.uniform(0, max(1, horizon - span)))
        if rng.random() < cfg.wander_fraction:
            t, x, y, sog, cog = _wanderer(rng, domain, n, t_start, cfg.interval, cfg.margin)
            destination = "FISHING GROUND"
        else:
            lane = int(rng.integers(len(lanes)))
            t, x, y, sog, cog = _lane_ship(rng, lanes[lane], n, t_start, cfg.interval, cfg.lane_width)
            destination = f"PORT {lane}"
        if rng.random() < 0.3 and n > 20:
            # an AIS silence of one to three hours
            k = int(rng.integers(5, n - 5))
            t[k:] += int(rng.uniform(3600, 3 * 3600))
        x = np.clip(x, domain.x_min + 1.0, domain.x_max - 1.0)
        y = np.clip(y, domain.y_min + 1.0, domain.y_max - 1.0)
        length = rng.uniform(20, 300)
        beam = rng.uniform(5, 40)
        bow = rng.uniform(0.3, 0.7) * length
        port = rng.uniform(0.3, 0.7) * beam
        cols["t"].append(t)
        cols["mmsi"].append(np.full(n, 219_000_000 + i))
        cols["x"].append(x)
        cols["y"].append(y)
        cols["sog"].append(np.round(np.abs(sog), 1))
        cols["cog"].append(np.round(cog, 1) % 360)
        cols["heading"].append(np.round(cog + rng.normal(0, 2, size=n)) % 360)
        cols["draught"].append(np.full(n, round(rng.uniform(3, 12), 1)))
        cols["dim_bow"].append(np.full(n, round(bow)))
        cols["dim_stern"].append(np.full(n, round(length - bow)))
        cols["dim_port"].append(np.full(n, round(port)))
        cols["dim_starboard"].append(np.full(n, round(beam - port)))
        cols["destination"].append(np.full(n, destination))
    out = {k: np.concatenate(v) for k, v in cols.items()}
    out["t"] = out["t"].astype(np.int64)
    if cfg.outlier_fraction > 0:
        k = rng.choice(len(out["t"]), size=int(cfg.outlier_fraction * len(out["t"])), replace=False)
        out["x"][k] = np.where(out["x"][k] + 50_000 < domain.x_max, out["x"][k] + 50_000, out["x"][k] - 50_000)
    return out


def lane_grid_fleet(domain: Domain, start: int = 1_614_470_400, speed_knots: float = 10.0,
                    interval: int = 60) -> dict[str, np.ndarray]:
    """One ship per 5000 m row sailing west to east along the row centre line."""
    cols_n, rows_n = domain.shape(ANCHOR)
    speed = speed_knots * KNOT
    parts = {f: [] for f in FLEET_FIELDS}
    parts["destination"] = []
    for r in range(rows_n):
        x = np.arange(domain.x_min + 1.0, domain.x_max - 1.0, speed * interval)
        n = len(x)
        t = start + np.arange(n) * interval
        parts["t"].append(t)
        parts["mmsi"].append(np.full(n, 219_500_000 + r))
        parts["x"].append(x)
        parts["y"].append(np.full(n, domain.y_min + (r + 0.5) * ANCHOR))
        parts["sog"].append(np.full(n, speed_knots))
        parts["cog"].append(np.full(n, 90.0))
        parts["heading"].append(np.full(n, 90.0))
        parts["draught"].append(np.full(n, 6.0))
        for f, v in (("dim_bow", 60.0), ("dim_stern", 40.0), ("dim_port", 8.0), ("dim_starboard", 8.0)):
            parts[f].append(np.full(n, v))
        parts["destination"].append(np.full(n, "EAST"))
    out = {k: np.concatenate(v) for k, v in parts.items()}
    out["t"] = out["t"].astype(np.int64)
    return out


def write_dma_csv(path, fleet: dict[str, np.ndarray], proj: Projection) -> int:
    """Write a fleet as a DMA-style CSV export, sorted by time. Returns the row count."""
    lat, lng = proj.inverse(fleet["x"], fleet["y"])
    order = np.argsort(fleet["t"], kind="stable")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(DMA_HEADER)
        for i in order:
            row = dict.fromkeys(DMA_HEADER, "")
            row["# Timestamp"] = format_timestamp(fleet["t"][i])
            row["Type of mobile"] = "Class A"
            row["MMSI"] = str(int(fleet["mmsi"][i]))
            row["Latitude"] = f"{lat[i]:.8f}"
            row["Longitude"] = f"{lng[i]:.8f}"
            row["Navigational status"] = "Under way using engine"
            row["SOG"] = f"{fleet['sog'][i]:.1f}"
            row["COG"] = f"{fleet['cog'][i]:.1f}"
            row["Heading"] = f"{fleet['heading'][i]:.0f}"
            row["Ship type"] = "Cargo"
            row["Draught"] = f"{fleet['draught'][i]:.1f}"
            row["Destination"] = str(fleet["destination"][i])
            row["Data source type"] = "AIS"
            for f, col in (("dim_bow", "A"), ("dim_stern", "B"), ("dim_port", "C"), ("dim_starboard", "D")):
                row[col] = f"{fleet[f][i]:.0f}"
            w.writerow([row[h] for h in DMA_HEADER])
    return len(order)

