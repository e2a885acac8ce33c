"""Independent reference implementations used to check the library.

Nothing here calls into the code under test except for plain data
containers; each oracle recomputes its answer by brute force.
"""

import math
import re
from datetime import datetime

import numpy as np

KNOT = 1852.0 / 3600.0
DAY = 86_400


# -- ingest ----------------------------------------------------------------

_TS = re.compile(r"^\d{2}/\d{2}/\d{4} \d{2}:\d{2}:\d{2}$")
_NUM = re.compile(r"^-?\d+(\.\d+)?$")


def _valid_ts(text):
    if not _TS.match(text):
        return False
    try:
        datetime.strptime(text, "%d/%m/%Y %H:%M:%S")
    except ValueError:
        return False
    return True


def classify_lines(text: str, n_fields: int) -> tuple[int, int]:
    """(well-formed, malformed) data rows of a DMA-style CSV, by regex only.

    Assumes no quoted commas, which holds for the generated files.
    """
    good = bad = 0
    for line in text.splitlines()[1:]:
        f = line.split(",")
        ok = (len(f) == n_fields and _valid_ts(f[0]) and f[2].isdigit()
              and _NUM.match(f[3]) and _NUM.match(f[4]))
        if ok:
            good += 1
        else:
            bad += 1
    return good, bad


# -- trajectories ------------------------------------------------------------

def max_pairwise_speed(t, x, y) -> float:
    """Largest implied speed (knots) between consecutive points."""
    best = 0.0
    for i in range(1, len(t)):
        d = math.hypot(x[i] - x[i - 1], y[i] - y[i - 1])
        best = max(best, d / (t[i] - t[i - 1]) / KNOT)
    return best


def sed_violations(t, x, y, kept, epsilon) -> list[int]:
    """Removed indices whose SED to the simplified path exceeds ``epsilon``."""
    kept = list(kept)
    out = []
    for a, b in zip(kept[:-1], kept[1:]):
        for i in range(a + 1, b):
            f = (t[i] - t[a]) / (t[b] - t[a])
            px = x[a] + f * (x[b] - x[a])
            py = y[a] + f * (y[b] - y[a])
            if math.hypot(x[i] - px, y[i] - py) > epsilon:
                out.append(i)
    return out


def stop_blocks(t, sog, stop_sog, min_duration):
    """Sample-by-sample walk producing (start, end_exclusive, stopped) blocks."""
    n = len(t)
    flags = [s < stop_sog for s in sog]
    runs = []
    i = 0
    while i < n:
        j = i
        while j + 1 < n and flags[j + 1] == flags[i]:
            j += 1
        runs.append((i, j, flags[i]))
        i = j + 1
    blocks = []
    for a, b, stopped in runs:
        is_stop = stopped and t[b] - t[a] >= min_duration
        if blocks and not is_stop and not blocks[-1][2]:
            blocks[-1] = (blocks[-1][0], b + 1, False)
        else:
            blocks.append((a, b + 1, is_stop))
    return blocks


# -- grid ----------------------------------------------------------------------

def dense_cells(t, x, y, granularity, origin, step=1.0):
    """Sample the interpolated path every ``step`` seconds: (times, cols, rows, days)."""
    t = np.asarray(t, dtype=float)
    ts = t[0] + np.arange(0.0, t[-1] - t[0] + 1e-12, step)
    xs = np.interp(ts, t, x)
    ys = np.interp(ts, t, y)
    cols = [math.floor((v - origin[0]) / granularity) for v in xs]
    rows = [math.floor((v - origin[1]) / granularity) for v in ys]
    days = [math.floor(v / DAY) for v in ts]
    return ts, cols, rows, days


def runs(keys):
    """Run-length start indices of a key sequence."""
    return [i for i in range(len(keys)) if i == 0 or keys[i] != keys[i - 1]]


# -- partition ---------------------------------------------------------------

def population_sd(values):
    m = sum(values) / len(values)
    return math.sqrt(sum((v - m) ** 2 for v in values) / len(values))


def reference_quadtree(counts, max_divisions):
    """Recursive-by-rounds quad-tree: list of (c0, r0, c1, r1) squares in the
    order a heaviest-first splitter would leave them (as a set)."""
    h, w = counts.shape
    side = 1
    while side < max(w, h):
        side *= 2

    def total(sq):
        c0, r0, c1, r1 = sq
        return int(counts[r0:min(r1, h), c0:min(c1, w)].sum()) if c0 < w and r0 < h else 0

    leaves = [(0, (0, 0, side, side))]
    next_id = 1
    while len(leaves) + 3 <= max_divisions:
        best = None
        for nid, sq in leaves:
            key = (-total(sq), nid)
            if best is None or key < best[0]:
                best = (key, nid, sq)
        _, nid, sq = best
        c0, r0, c1, r1 = sq
        if c1 - c0 == 1:
            break
        half = (c1 - c0) // 2
        leaves = [(i, s) for i, s in leaves if i != nid]
        for dr in (0, 1):
            for dc in (0, 1):
                leaves.append((next_id, (c0 + dc * half, r0 + dr * half,
                                         c0 + (dc + 1) * half, r0 + (dr + 1) * half)))
                next_id += 1
    return {sq for _, sq in leaves}


def covers_exactly(rects, domain_rect, lattice=5000):
    """Lattice-cell coverage check: every cell covered once, nothing outside."""
    x0, y0, x1, y1 = domain_rect
    cols = int(round((x1 - x0) / lattice))
    rows = int(round((y1 - y0) / lattice))
    cover = np.zeros((rows, cols), dtype=int)
    for a, b, c, d in rects:
        for v in (a - x0, c - x0, b - y0, d - y0):
            if v % lattice:
                return False
        if a < x0 or b < y0 or c > x1 or d > y1 or c <= a or d <= b:
            return False
        cover[int((b - y0) // lattice):int((d - y0) // lattice), int((a - x0) // lattice):int((c - x0) // lattice)] += 1
    return bool((cover == 1).all())


# -- heatmap -----------------------------------------------------------------

def centralized_query(tiles, area, dates, resolution, domain_rect, kind, nbands):
    """Single pass over (anchor_col, anchor_row, date_id, bands) tiles in date order,
    ignoring divisions. Returns bands over the area's pixel window."""
    dx0, dy0 = domain_rect[0], domain_rect[1]
    ax0, ay0, ax1, ay1 = area
    c0 = math.floor((ax0 - dx0) / resolution)
    r0 = math.floor((ay0 - dy0) / resolution)
    c1 = math.ceil((ax1 - dx0) / resolution)
    r1 = math.ceil((ay1 - dy0) / resolution)
    out = np.full((nbands, r1 - r0, c1 - c0), np.nan)
    side = 5000 // resolution
    for col, row, date, bands in sorted(tiles, key=lambda t: t[2]):
        if not dates[0] <= date <= dates[1]:
            continue
        # overlap of this tile's pixel block with the window, in global pixel indices
        gr0, gc0 = row * side, col * side
        lo_r, hi_r = max(gr0, r0), min(gr0 + side, r1)
        lo_c, hi_c = max(gc0, c0), min(gc0 + side, c1)
        if lo_r >= hi_r or lo_c >= hi_c:
            continue
        v = bands[:, lo_r - gr0:hi_r - gr0, lo_c - gc0:hi_c - gc0]
        cur = out[:, lo_r - r0:hi_r - r0, lo_c - c0:hi_c - c0]
        if kind == "MIN":
            merged = np.fmin(cur, v)
        else:
            merged = np.where(np.isnan(cur), v, np.where(np.isnan(v), cur, cur + v))
        out[:, lo_r - r0:hi_r - r0, lo_c - c0:hi_c - c0] = merged
    # nodata outside the area (pixel centres)
    cx = dx0 + (np.arange(c0, c1) + 0.5) * resolution
    cy = dy0 + (np.arange(r0, r1) + 0.5) * resolution
    inside = ((cy >= ay0) & (cy < ay1))[:, None] & ((cx >= ax0) & (cx < ax1))[None, :]
    out[:, ~inside] = np.nan
    return out


# -- cluster -------------------------------------------------------------------

def wif_reference(times):
    m = max(times)
    per = [(m - t) / m for t in times]
    n = len(times)
    if n == 1:
        return per, 0.0
    return per, sum(per) / n / (1 - 1 / n) * 100.0


def random_track(rng, domain_rect, n=500, t0=None, margin=200.0):
    """Random-walk positions inside the domain with random spacing and speeds.

    Returns (t, x, y, sog, cog, heading, draught) arrays.
    """
    x0, y0, x1, y1 = domain_rect
    t0 = float(rng.integers(1_614_470_400, 1_614_470_400 + 5 * DAY)) if t0 is None else t0
    dt = rng.uniform(1.0, 90.0, n)
    dt[0] = 0.0
    t = t0 + np.cumsum(dt)
    heading = rng.uniform(0, 2 * math.pi) + np.cumsum(rng.normal(0, 0.3, n))
    speed = rng.uniform(0.0, 12.0, n)
    x = np.empty(n)
    y = np.empty(n)
    x[0] = rng.uniform(x0 + margin, x1 - margin)
    y[0] = rng.uniform(y0 + margin, y1 - margin)
    for i in range(1, n):
        nx = x[i - 1] + speed[i] * dt[i] * math.cos(heading[i])
        ny = y[i - 1] + speed[i] * dt[i] * math.sin(heading[i])
        if not (x0 + margin < nx < x1 - margin and y0 + margin < ny < y1 - margin):
            heading[i:] += math.pi
            nx = x[i - 1] - speed[i] * dt[i] * math.cos(heading[i] - math.pi)
            ny = y[i - 1] - speed[i] * dt[i] * math.sin(heading[i] - math.pi)
            nx = min(max(nx, x0 + margin), x1 - margin)
            ny = min(max(ny, y0 + margin), y1 - margin)
        x[i], y[i] = nx, ny
    sog = np.where(rng.random(n) < 0.1, np.nan, speed / KNOT)
    cog = np.where(rng.random(n) < 0.1, np.nan, np.degrees(heading) % 360)
    hdg = np.where(rng.random(n) < 0.1, np.nan, (np.degrees(heading) + rng.normal(0, 3, n)) % 360)
    draught = np.where(rng.random(n) < 0.5, np.nan, np.round(rng.uniform(3, 12, n), 1))
    return t, x, y, sog, cog, hdg, draught


def _epoch_day(date_id):
    d = datetime.strptime(str(date_id), "%Y%m%d")
    return (d - datetime(1970, 1, 1)).days


def dense_agreement(events, t, x, y, granularity, origin):
    """Compare rollup events with 1 s dense sampling. Returns a list of problems."""
    problems = []
    ts, cols, rows, days = dense_cells(t, x, y, granularity, origin)
    keys = list(zip(cols, rows, days))
    starts = runs(keys)
    seq = [keys[i] for i in starts]

    # events that contain at least one sample instant; the others must be short
    ev_keys, ev_enter = [], []
    last = len(events) - 1
    for k, e in enumerate(events):
        lo = np.searchsorted(ts, e["t_enter"], side="left")
        hi = np.searchsorted(ts, e["t_exit"], side="right" if k == last else "left")
        key = (int(e["col"]), int(e["row"]), _epoch_day(int(e["date_id"])))
        if hi > lo:
            if ev_keys and ev_keys[-1] == key:
                continue
            ev_keys.append(key)
            ev_enter.append(float(e["t_enter"]))
        elif e["duration"] >= 1.0:
            problems.append(f"event {k} lasts {e['duration']} s but holds no sample")
    if ev_keys != seq:
        problems.append(f"cell sequences differ ({len(ev_keys)} vs {len(seq)} runs)")
        return problems
    for i, s in enumerate(starts[1:], start=1):
        if not (ts[s - 1] - 1e-6 <= ev_enter[i] <= ts[s] + 1e-6):
            problems.append(f"boundary {i} at {ev_enter[i]} outside ({ts[s - 1]}, {ts[s]}]")
    return problems
