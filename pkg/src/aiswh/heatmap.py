"""Per-day heatmap tiles anchored at 5000 m cells, and two-phase raster queries.

A tile covers one 5000 m anchor cell for one day, heatmap type and spatial
resolution, with ``(5000 / resolution)**2`` pixels. Tiles are kept sparse in
the store (only pixels that received events) and made dense on demand.
Nodata is NaN throughout.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from ._npz import savez
from .errors import ConfigError, DomainError, StoreFormatError
from .grid import ANCHOR, DAY, GRANULARITIES, CellKey, Domain
from .partition import DivisionSet

TILES_FORMAT = "aiswh-tiles"
TILES_VERSION = 1
NODATA = -9999.0


class Aggregation(str, Enum):
    SUM = "SUM"
    MIN = "MIN"
    AVG = "AVG"


@dataclass(frozen=True)
class HeatmapType:
    id: int
    name: str
    kind: Aggregation
    measure: str | None  # cell-event field; None counts events
    description: str = ""

    def __post_init__(self):
        object.__setattr__(self, "kind", Aggregation(self.kind))
        if self.kind is not Aggregation.SUM and self.measure is None:
            raise ConfigError(f"heatmap type {self.name!r}: {self.kind.value} needs a measure")

    @property
    def bands(self) -> int:
        return 2 if self.kind is Aggregation.AVG else 1

    def to_dict(self) -> dict:
        return {"id": self.id, "name": self.name, "kind": self.kind.value,
                "measure": self.measure, "description": self.description}


BUILTIN_TYPES = (
    HeatmapType(1, "count", Aggregation.SUM, None, "number of ships crossing a cell"),
    HeatmapType(2, "time", Aggregation.SUM, "duration", "accumulated seconds spent in a cell"),
    HeatmapType(3, "delta_heading", Aggregation.AVG, "delta_heading", "average change in heading in a cell"),
    HeatmapType(4, "delta_cog", Aggregation.AVG, "delta_cog", "average change in COG in a cell"),
    HeatmapType(5, "min_draught", Aggregation.MIN, "min_draught", "minimum draught in a cell"),
)


@dataclass
class Raster:
    """Georeferenced bands ``(n_bands, height, width)``; row 0 is the southern edge."""

    origin_x: float
    origin_y: float
    resolution: float
    bands: np.ndarray

    @property
    def width(self) -> int:
        return self.bands.shape[2]

    @property
    def height(self) -> int:
        return self.bands.shape[1]

    @property
    def values(self) -> np.ndarray:
        return self.bands[0]

    @property
    def nodata(self) -> np.ndarray:
        return np.isnan(self.bands[0])

    @property
    def rect(self):
        return (self.origin_x, self.origin_y,
                self.origin_x + self.width * self.resolution, self.origin_y + self.height * self.resolution)


@dataclass
class HeatmapTile:
    anchor: CellKey
    type_id: int
    resolution: int
    temporal_resolution: int
    date_id: int
    bands: np.ndarray

    @property
    def nodata(self) -> np.ndarray:
        return np.isnan(self.bands[0])


def finalize(raster):
    """Collapse a (sum, count) two-band raster or tile into mean values."""
    bands = raster.bands
    if bands.shape[0] != 2:
        raise ValueError("finalize needs a two-band raster")
    total, count = bands
    with np.errstate(divide="ignore", invalid="ignore"):
        mean = np.where(count > 0, total / count, np.nan)
    if isinstance(raster, HeatmapTile):
        return HeatmapTile(raster.anchor, raster.type_id, raster.resolution,
                           raster.temporal_resolution, raster.date_id, mean[None])
    return Raster(raster.origin_x, raster.origin_y, raster.resolution, mean[None])


@dataclass
class TileGroup:
    """All tiles of one (heatmap type, resolution).

    ``tiles`` is a structured array ``(division, anchor_col, anchor_row, date_id)``
    sorted in that key order (division, row, col, date). ``pixels`` holds one
    entry per non-nodata pixel: owning tile index, ``px``/``py`` inside the
    tile, and ``v0``/``v1`` band values, ordered by tile.
    """

    type: HeatmapType
    resolution: int
    temporal_resolution: int
    tiles: np.ndarray
    pixels: np.ndarray

    @property
    def side(self) -> int:
        return ANCHOR // self.resolution

    def tile_slices(self) -> np.ndarray:
        """``[start, stop)`` pixel-entry offsets per tile."""
        bounds = np.searchsorted(self.pixels["tile"], np.arange(len(self.tiles) + 1))
        return bounds


TILE_DTYPE = np.dtype([("division", np.int32), ("anchor_col", np.int32),
                       ("anchor_row", np.int32), ("date_id", np.int32)])
PIXEL_DTYPE = np.dtype([("tile", np.int64), ("px", np.int16), ("py", np.int16),
                        ("v0", np.float64), ("v1", np.float64)])


class TileStore:
    def __init__(self, domain: Domain, types: Sequence[HeatmapType]):
        self.domain = domain
        self.types = {t.id: t for t in types}
        self.groups: dict[tuple[int, int], TileGroup] = {}

    def group(self, type_id: int, resolution: int) -> TileGroup:
        try:
            return self.groups[(type_id, resolution)]
        except KeyError:
            raise ConfigError(f"no tiles for heatmap type {type_id} at {resolution} m") from None

    def __len__(self):
        return sum(len(g.tiles) for g in self.groups.values())

    def tile(self, type_id: int, resolution: int, anchor: CellKey, date_id: int) -> HeatmapTile | None:
        g = self.group(type_id, resolution)
        hit = np.flatnonzero((g.tiles["anchor_col"] == anchor.col) & (g.tiles["anchor_row"] == anchor.row)
                             & (g.tiles["date_id"] == date_id))
        if len(hit) == 0:
            return None
        return self._dense(g, int(hit[0]))

    def iter_tiles(self, type_id: int, resolution: int):
        g = self.group(type_id, resolution)
        for i in range(len(g.tiles)):
            yield int(g.tiles["division"][i]), self._dense(g, i)

    def _dense(self, g: TileGroup, i: int) -> HeatmapTile:
        bounds = np.searchsorted(g.pixels["tile"], [i, i + 1])
        entries = g.pixels[bounds[0]:bounds[1]]
        n = g.side
        bands = np.full((g.type.bands, n, n), np.nan)
        bands[0, entries["py"], entries["px"]] = entries["v0"]
        if g.type.bands == 2:
            bands[1, entries["py"], entries["px"]] = entries["v1"]
        key = g.tiles[i]
        return HeatmapTile(CellKey(ANCHOR, int(key["anchor_col"]), int(key["anchor_row"])),
                           g.type.id, g.resolution, g.temporal_resolution, int(key["date_id"]), bands)


def _group_reduce(keys: list[np.ndarray], values: np.ndarray, how: str):
    """Sort by ``keys`` (last key is primary) and reduce ``values`` per distinct key."""
    order = np.lexsort(keys)
    sk = [k[order] for k in keys]
    v = values[order]
    change = np.zeros(len(v), dtype=bool)
    change[:1] = True
    for k in sk:
        change[1:] |= k[1:] != k[:-1]
    starts = np.flatnonzero(change)
    if how == "sum":
        red = np.add.reduceat(v, starts) if len(v) else v
    elif how == "min":
        red = np.minimum.reduceat(v, starts) if len(v) else v
    else:
        red = np.diff(np.append(starts, len(v)))
    return [k[starts] for k in sk], red


def rollup_heatmaps(events: dict[int, np.ndarray], types: Iterable[HeatmapType],
                    resolutions: Iterable[int], divisions: DivisionSet, domain: Domain) -> TileStore:
    """Aggregate cell events into daily tiles.

    ``events`` maps granularity to the cell events at that granularity; the
    tiles for resolution ``r`` are built from the ``r`` m events. Pixel values:
    SUM adds the measure (1 per event when the type has no measure), MIN takes
    the smallest non-NaN measure, AVG stores (sum, count) over events with a
    non-NaN measure.
    """
    types = list(types)
    store = TileStore(domain, types)
    for res in resolutions:
        if res not in GRANULARITIES:
            raise ConfigError(f"unknown resolution {res}")
        if res not in events:
            raise ConfigError(f"no cell events at {res} m for heatmap rollup")
        ev = events[res]
        ratio = ANCHOR // res
        for htype in types:
            if htype.measure is not None and htype.measure not in ev.dtype.names:
                raise ConfigError(f"heatmap type {htype.name!r}: unknown measure {htype.measure!r}")
            store.groups[(htype.id, res)] = _rollup_group(ev, htype, res, ratio, divisions, domain)
    return store


def _rollup_group(ev, htype, res, ratio, divisions, domain) -> TileGroup:
    if htype.measure is None:
        values = np.ones(len(ev))
    else:
        values = ev[htype.measure].astype(float)
    if htype.kind is not Aggregation.SUM or htype.measure is not None:
        ok = ~np.isnan(values)
        ev, values = ev[ok], values[ok]
    col = ev["col"].astype(np.int64)
    row = ev["row"].astype(np.int64)
    ac, ar = col // ratio, row // ratio
    px, py = col % ratio, row % ratio
    date = ev["date_id"].astype(np.int64)
    # primary key order: anchor row, anchor col, date, py, px
    keys = [px, py, date, ac, ar]
    if htype.kind is Aggregation.SUM:
        (kpx, kpy, kdate, kac, kar), v0 = _group_reduce(keys, values, "sum")
        v1 = np.zeros_like(v0, dtype=float)
    elif htype.kind is Aggregation.MIN:
        (kpx, kpy, kdate, kac, kar), v0 = _group_reduce(keys, values, "min")
        v1 = np.zeros_like(v0, dtype=float)
    else:
        (kpx, kpy, kdate, kac, kar), v0 = _group_reduce(keys, values, "sum")
        _, v1 = _group_reduce(keys, values, "count")
        v1 = v1.astype(float)

    if len(kac):
        div = divisions.division_of(domain.x_min + (kac + 0.5) * ANCHOR, domain.y_min + (kar + 0.5) * ANCHOR)
        div = np.atleast_1d(div)
    else:
        div = np.zeros(0, dtype=np.int64)
    # tiles sorted by (division, anchor_row, anchor_col, date)
    order = np.lexsort([kpx, kpy, kdate, kac, kar, div])
    div, kac, kar, kdate, kpx, kpy, v0, v1 = (a[order] for a in (div, kac, kar, kdate, kpx, kpy, v0, v1))
    new_tile = np.ones(len(order), dtype=bool)
    new_tile[1:] = (div[1:] != div[:-1]) | (kac[1:] != kac[:-1]) | (kar[1:] != kar[:-1]) | (kdate[1:] != kdate[:-1])
    starts = np.flatnonzero(new_tile)
    tiles = np.zeros(len(starts), dtype=TILE_DTYPE)
    tiles["division"] = div[starts]
    tiles["anchor_col"] = kac[starts]
    tiles["anchor_row"] = kar[starts]
    tiles["date_id"] = kdate[starts]
    pixels = np.zeros(len(order), dtype=PIXEL_DTYPE)
    pixels["tile"] = np.cumsum(new_tile) - 1
    pixels["px"] = kpx
    pixels["py"] = kpy
    pixels["v0"] = v0
    pixels["v1"] = v1
    return TileGroup(htype, res, DAY, tiles, pixels)


# -- queries -------------------------------------------------------------

@dataclass(frozen=True)
class Window:
    """Pixel window ``[c0, c1) x [r0, r1)`` in resolution units from the domain origin."""

    c0: int
    r0: int
    c1: int
    r1: int

    def intersect(self, other: "Window") -> "Window | None":
        w = Window(max(self.c0, other.c0), max(self.r0, other.r0), min(self.c1, other.c1), min(self.r1, other.r1))
        return w if w.c1 > w.c0 and w.r1 > w.r0 else None

    @property
    def shape(self):
        return (self.r1 - self.r0, self.c1 - self.c0)


def _window(rect, resolution, domain: Domain) -> Window:
    """Smallest pixel window covering ``rect``."""
    x0, y0, x1, y1 = rect
    return Window(int(np.floor((x0 - domain.x_min) / resolution)), int(np.floor((y0 - domain.y_min) / resolution)),
                  int(np.ceil((x1 - domain.x_min) / resolution)), int(np.ceil((y1 - domain.y_min) / resolution)))


def _check_area(area, domain: Domain):
    x0, y0, x1, y1 = area
    if not (x1 > x0 and y1 > y0):
        raise DomainError(f"empty query area {area}")
    if x1 <= domain.x_min or x0 >= domain.x_max or y1 <= domain.y_min or y0 >= domain.y_max:
        raise DomainError(f"query area {area} does not intersect the domain {domain.rect}")


def select_tiles(group: TileGroup, division_id: int | None, dates: tuple[int, int], window: Window) -> np.ndarray:
    """Indices of tiles in ``division_id`` (all if None) within the dates whose anchor meets ``window``."""
    tiles = group.tiles
    n = group.side
    mask = (tiles["date_id"] >= dates[0]) & (tiles["date_id"] <= dates[1])
    if division_id is not None:
        mask &= tiles["division"] == division_id
    c0 = tiles["anchor_col"].astype(np.int64) * n
    r0 = tiles["anchor_row"].astype(np.int64) * n
    mask &= (c0 < window.c1) & (c0 + n > window.c0) & (r0 < window.r1) & (r0 + n > window.r0)
    return np.flatnonzero(mask)


def aggregate_division(group: TileGroup, division_id: int, dates: tuple[int, int],
                       window: Window, bounds: np.ndarray | None = None) -> tuple[Window, np.ndarray, int]:
    """Phase 1: combine one division's matching tiles over ``window``.

    Returns the window, the ``(bands, h, w)`` array and the number of tiles used.
    """
    if bounds is None:
        bounds = group.tile_slices()
    idx = select_tiles(group, division_id, dates, window)
    nb = group.type.bands
    kind = group.type.kind
    out = np.full((nb,) + window.shape, np.nan)
    if len(idx) == 0:
        return window, out, 0
    entry_idx = np.concatenate([np.arange(bounds[i], bounds[i + 1]) for i in idx])
    e = group.pixels[entry_idx]
    t = group.tiles[e["tile"]]
    n = group.side
    gx = t["anchor_col"].astype(np.int64) * n + e["px"]
    gy = t["anchor_row"].astype(np.int64) * n + e["py"]
    inside = (gx >= window.c0) & (gx < window.c1) & (gy >= window.r0) & (gy < window.r1)
    lx, ly = gx[inside] - window.c0, gy[inside] - window.r0
    v0, v1 = e["v0"][inside], e["v1"][inside]
    hit = np.zeros(window.shape, dtype=bool)
    hit[ly, lx] = True
    if kind is Aggregation.MIN:
        np.fmin.at(out[0], (ly, lx), v0)
    else:
        acc = np.zeros((nb,) + window.shape)
        np.add.at(acc[0], (ly, lx), v0)
        if nb == 2:
            np.add.at(acc[1], (ly, lx), v1)
        out = np.where(hit, acc, np.nan)
    return window, out, len(idx)


def query_heatmap(store: TileStore, area, dates: tuple[int, int], type_id: int, resolution: int,
                  divisions: DivisionSet, finalize_avg: bool = True, max_workers: int | None = None) -> Raster:
    """Heatmap raster for ``area`` over the inclusive ``dates`` range.

    Phase 1 aggregates each intersecting division's tiles on its own (these
    run concurrently when ``max_workers`` is set); phase 2 mosaics the
    division rasters. Pixels whose centre falls outside ``area`` are nodata.
    """
    domain = store.domain
    _check_area(area, domain)
    if dates[0] > dates[1]:
        raise ValueError(f"empty date range {dates}")
    group = store.group(type_id, resolution)
    window = _window(area, resolution, domain)
    bounds = group.tile_slices()

    jobs = []
    for did in divisions.intersecting(area):
        w = window.intersect(_window(divisions[did].rect, resolution, domain))
        if w is not None:
            jobs.append((did, w))

    def run(job):
        return aggregate_division(group, job[0], dates, job[1], bounds)

    if max_workers and max_workers > 1:
        with ThreadPoolExecutor(max_workers) as pool:
            parts = list(pool.map(run, jobs))
    else:
        parts = [run(j) for j in jobs]

    bands = np.full((group.type.bands,) + window.shape, np.nan)
    for w, part, _ in parts:
        bands[:, w.r0 - window.r0:w.r1 - window.r0, w.c0 - window.c0:w.c1 - window.c0] = part

    raster = Raster(domain.x_min + window.c0 * resolution, domain.y_min + window.r0 * resolution,
                    float(resolution), bands)
    bands[:, ~area_mask(raster, area)] = np.nan
    if finalize_avg and group.type.kind is Aggregation.AVG:
        raster = finalize(raster)
    return raster


def area_mask(raster: Raster, area) -> np.ndarray:
    """True where the pixel centre lies inside ``area`` (half-open)."""
    x0, y0, x1, y1 = area
    cx = raster.origin_x + (np.arange(raster.width) + 0.5) * raster.resolution
    cy = raster.origin_y + (np.arange(raster.height) + 0.5) * raster.resolution
    return ((cy >= y0) & (cy < y1))[:, None] & ((cx >= x0) & (cx < x1))[None, :]


def matched_tiles(store: TileStore, area, dates, type_id: int, resolution: int,
                  divisions: DivisionSet) -> dict[int, int]:
    """Tiles each intersecting division would aggregate for a query (0 when none)."""
    domain = store.domain
    _check_area(area, domain)
    group = store.group(type_id, resolution)
    window = _window(area, resolution, domain)
    out = {}
    for did in divisions.intersecting(area):
        w = window.intersect(_window(divisions[did].rect, resolution, domain))
        out[did] = 0 if w is None else len(select_tiles(group, did, dates, w))
    return out


# -- output --------------------------------------------------------------

def render(raster: Raster, out_path, colormap: str = "viridis", scale: str = "linear"):
    """Write a north-up RGBA PNG (nodata transparent) and an ASCII grid next to it.

    Returns ``(png_path, asc_path)``.
    """
    from matplotlib import colormaps
    from PIL import Image

    if raster.width == 0 or raster.height == 0:
        raise ValueError("cannot render an empty raster")
    if scale not in ("linear", "log"):
        raise ValueError(f"unknown scale {scale!r}")
    out_path = Path(out_path)
    values = raster.values
    valid = ~np.isnan(values)
    norm = np.zeros(values.shape)
    if valid.any():
        lo, hi = float(values[valid].min()), float(values[valid].max())
        if scale == "log":
            span = np.log1p(hi - lo)
            if span > 0:
                norm[valid] = np.log1p(values[valid] - lo) / span
        elif hi > lo:
            norm[valid] = (values[valid] - lo) / (hi - lo)
    rgba = colormaps[colormap](norm, bytes=True)
    rgba[~valid] = 0
    Image.fromarray(np.ascontiguousarray(rgba[::-1]), mode="RGBA").save(out_path, format="PNG")

    asc_path = out_path.with_suffix(".asc")
    write_ascii_grid(asc_path, raster)
    return out_path, asc_path


def write_ascii_grid(path, raster: Raster) -> None:
    values = np.where(np.isnan(raster.values), NODATA, raster.values)
    with open(path, "w", encoding="ascii") as fh:
        fh.write(f"ncols {raster.width}\nnrows {raster.height}\n")
        fh.write(f"xllcorner {raster.origin_x!r}\nyllcorner {raster.origin_y!r}\n")
        fh.write(f"cellsize {raster.resolution!r}\nNODATA_value {NODATA!r}\n")
        for row in values[::-1]:
            fh.write(" ".join(repr(float(v)) for v in row) + "\n")


def read_ascii_grid(path) -> Raster:
    with open(path, encoding="ascii") as fh:
        header = {}
        for _ in range(6):
            k, v = fh.readline().split()
            header[k.lower()] = v
        data = np.loadtxt(fh, ndmin=2)
    nodata = float(header["nodata_value"])
    data = np.where(data == nodata, np.nan, data)[::-1]
    return Raster(float(header["xllcorner"]), float(header["yllcorner"]), float(header["cellsize"]),
                  data[None].copy())


def write_tiles(path, store: TileStore) -> None:
    """Tile store file: ``.npz`` with JSON metadata and per-group tile/pixel arrays."""
    meta = {
        "domain": list(store.domain.rect),
        "types": [t.to_dict() for t in store.types.values()],
        "groups": [{"type_id": k[0], "resolution": k[1], "temporal_resolution": g.temporal_resolution}
                   for k, g in sorted(store.groups.items())],
    }
    arrays = {}
    for (tid, res), g in store.groups.items():
        arrays[f"tiles_{tid}_{res}"] = g.tiles
        arrays[f"pixels_{tid}_{res}"] = g.pixels
    with open(path, "wb") as fh:
        savez(fh, format=np.array(TILES_FORMAT), version=np.array(TILES_VERSION),
                 meta=np.array(json.dumps(meta, sort_keys=True)), **arrays)


def read_tiles(path) -> TileStore:
    with np.load(path, allow_pickle=False) as data:
        if str(data["format"]) != TILES_FORMAT or int(data["version"]) != TILES_VERSION:
            raise StoreFormatError(f"{path}: not a version {TILES_VERSION} tile store")
        meta = json.loads(str(data["meta"]))
        types = [HeatmapType(**t) for t in meta["types"]]
        store = TileStore(Domain(*meta["domain"]), types)
        for g in meta["groups"]:
            tid, res = g["type_id"], g["resolution"]
            store.groups[(tid, res)] = TileGroup(store.types[tid], res, g["temporal_resolution"],
                                                 data[f"tiles_{tid}_{res}"], data[f"pixels_{tid}_{res}"])
    return store
