"""Spatial divisions over the 5000 m cell-count histogram.

Divisions are axis-aligned rectangles on the 5000 m lattice. Two builders
are provided: a region quad-tree over the smallest power-of-two square that
covers the grid, and a greedy kd-tree that always splits the heaviest
division at its most balanced lattice position.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DomainError, StoreFormatError, ValidationError
from .grid import ANCHOR, CellKey, Domain, ancestor

DIVISIONS_FORMAT = "aiswh-divisions"
DIVISIONS_VERSION = 1


@dataclass
class CountGrid:
    """Cell-fact counts per 5000 m cell, ``counts[row, col]`` with row 0 at the south."""

    origin: tuple[float, float]
    counts: np.ndarray

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.counts.ndim != 2:
            raise ValueError("counts must be two-dimensional")
        if (self.counts < 0).any():
            raise ValueError("counts must be non-negative")

    @property
    def width(self) -> int:
        return self.counts.shape[1]

    @property
    def height(self) -> int:
        return self.counts.shape[0]

    @property
    def domain(self) -> Domain:
        ox, oy = self.origin
        return Domain(ox, oy, ox + self.width * ANCHOR, oy + self.height * ANCHOR)

    @classmethod
    def from_events(cls, events: np.ndarray, domain: Domain) -> "CountGrid":
        cols, rows = domain.shape(ANCHOR)
        ev = events[events["granularity"] == ANCHOR]
        counts = np.zeros((rows, cols), dtype=np.int64)
        np.add.at(counts, (ev["row"], ev["col"]), 1)
        return cls((domain.x_min, domain.y_min), counts)


@dataclass(frozen=True)
class SpatialDivision:
    id: int
    rect: tuple[float, float, float, float]
    count: int

    @property
    def width(self) -> float:
        return self.rect[2] - self.rect[0]

    @property
    def height(self) -> float:
        return self.rect[3] - self.rect[1]


@dataclass(frozen=True)
class BalanceReport:
    sd: float
    cv: float  # percent
    counts: dict[int, int]


class DivisionSet:
    """An immutable partition of ``domain`` into lattice-aligned divisions."""

    def __init__(self, divisions: Sequence[SpatialDivision], domain: Domain, lattice: int = ANCHOR):
        self.divisions = tuple(sorted(divisions, key=lambda d: d.id))
        self.domain = domain
        self.lattice = lattice
        self._by_id = {d.id: d for d in self.divisions}
        self._table = None

    def __len__(self):
        return len(self.divisions)

    def __iter__(self):
        return iter(self.divisions)

    def __getitem__(self, division_id: int) -> SpatialDivision:
        return self._by_id[division_id]

    @property
    def ids(self) -> list[int]:
        return [d.id for d in self.divisions]

    def problems(self) -> list[str]:
        """Everything that keeps this set from being a valid lattice partition."""
        out = []
        cols, rows = self.domain.shape(self.lattice)
        cover = np.zeros((rows, cols), dtype=np.int64)
        for d in self.divisions:
            x0, y0, x1, y1 = d.rect
            if (x1 - x0) <= 0 or (y1 - y0) <= 0:
                out.append(f"division {d.id} has empty extent")
                continue
            rel = np.array([x0 - self.domain.x_min, y0 - self.domain.y_min,
                            x1 - self.domain.x_min, y1 - self.domain.y_min]) / self.lattice
            if not np.allclose(rel, np.round(rel), rtol=0, atol=1e-9):
                out.append(f"division {d.id} is not aligned to the {self.lattice} m lattice")
                continue
            c0, r0, c1, r1 = np.round(rel).astype(int)
            if c0 < 0 or r0 < 0 or c1 > cols or r1 > rows:
                out.append(f"division {d.id} extends outside the domain")
                continue
            cover[r0:r1, c0:c1] += 1
        if not out:
            if (cover == 0).any():
                out.append(f"{int((cover == 0).sum())} lattice cells not covered")
            if (cover > 1).any():
                out.append(f"{int((cover > 1).sum())} lattice cells covered more than once")
        return out

    def validate(self) -> None:
        problems = self.problems()
        if problems:
            raise ValidationError("; ".join(problems))

    @property
    def table(self) -> np.ndarray:
        """``[row, col]`` lattice lookup of division ids over the domain."""
        if self._table is None:
            self.validate()
            cols, rows = self.domain.shape(self.lattice)
            table = np.zeros((rows, cols), dtype=np.int64)
            for d in self.divisions:
                c0, r0, c1, r1 = self._cells(d)
                table[r0:r1, c0:c1] = d.id
            table.setflags(write=False)
            self._table = table
        return self._table

    def _cells(self, d: SpatialDivision):
        x0, y0, x1, y1 = d.rect
        L = self.lattice
        return (int(round((x0 - self.domain.x_min) / L)), int(round((y0 - self.domain.y_min) / L)),
                int(round((x1 - self.domain.x_min) / L)), int(round((y1 - self.domain.y_min) / L)))

    def division_of(self, x, y):
        """Division id(s) of planar point(s); half-open like the cell grid."""
        xa = np.asarray(x, dtype=float)
        ya = np.asarray(y, dtype=float)
        if not np.all(self.domain.contains(xa, ya)):
            raise DomainError("point outside the division domain")
        c = np.floor((xa - self.domain.x_min) / self.lattice).astype(np.int64)
        r = np.floor((ya - self.domain.y_min) / self.lattice).astype(np.int64)
        ids = self.table[r, c]
        return int(ids) if ids.ndim == 0 else ids

    def division_of_cell(self, cell: CellKey, grid_domain: Domain) -> int:
        """Division of a grid cell at any granularity (via its 5000 m ancestor)."""
        a = ancestor(cell, ANCHOR)
        x = grid_domain.x_min + (a.col + 0.5) * ANCHOR
        y = grid_domain.y_min + (a.row + 0.5) * ANCHOR
        return self.division_of(x, y)

    def intersecting(self, rect) -> list[int]:
        """Ids of divisions whose interior overlaps ``rect``."""
        x0, y0, x1, y1 = rect
        return [d.id for d in self.divisions
                if d.rect[0] < x1 and x0 < d.rect[2] and d.rect[1] < y1 and y0 < d.rect[3]]


class _Summed:
    """Summed-area table; rectangles may extend past the grid (zero outside)."""

    def __init__(self, counts):
        self.rows, self.cols = counts.shape
        self.sat = np.zeros((self.rows + 1, self.cols + 1), dtype=np.int64)
        self.sat[1:, 1:] = counts.cumsum(0).cumsum(1)

    def total(self, c0, r0, c1, r1) -> int:
        c0, c1 = min(max(c0, 0), self.cols), min(max(c1, 0), self.cols)
        r0, r1 = min(max(r0, 0), self.rows), min(max(r1, 0), self.rows)
        s = self.sat
        return int(s[r1, c1] - s[r0, c1] - s[r1, c0] + s[r0, c0])


def _finish(nodes: dict[int, tuple], grid: CountGrid, domain: Domain) -> DivisionSet:
    """Renumber surviving nodes 1..N in creation order and convert to meters."""
    ox, oy = grid.origin
    out = []
    for new_id, old_id in enumerate(sorted(nodes), start=1):
        c0, r0, c1, r1, count = nodes[old_id]
        rect = (ox + c0 * ANCHOR, oy + r0 * ANCHOR, ox + c1 * ANCHOR, oy + r1 * ANCHOR)
        out.append(SpatialDivision(new_id, tuple(float(v) for v in rect), int(count)))
    return DivisionSet(out, domain)


def quadtree_side(grid: CountGrid) -> int:
    """Side of the covering square, in 5000 m cells (a power of two)."""
    return 1 << max(0, math.ceil(math.log2(max(grid.width, grid.height))))


def build_quadtree(grid: CountGrid, max_divisions: int, max_depth: int | None = None) -> DivisionSet:
    """Region quad-tree divisions over the smallest ``2^n * 5000 m`` square.

    The heaviest division (ties to the lowest id) is split into four equal
    quadrants until another split would exceed ``max_divisions``, or the
    heaviest division is 5000 m wide or at ``max_depth``. Empty quadrants are
    kept, so the result always tiles the square.
    """
    if max_divisions < 1:
        raise ValueError("max_divisions must be >= 1")
    side = quadtree_side(grid)
    ox, oy = grid.origin
    domain = Domain(ox, oy, ox + side * ANCHOR, oy + side * ANCHOR)
    if max_depth is None:
        max_depth = int(math.log2(side))
    summed = _Summed(grid.counts)

    nodes = {1: (0, 0, side, side, summed.total(0, 0, side, side))}
    depth = {1: 0}
    heap = [(-nodes[1][4], 1)]
    next_id = 2
    while heap and len(nodes) + 3 <= max_divisions:
        _, nid = heap[0]
        c0, r0, c1, r1, _count = nodes[nid]
        half = (c1 - c0) // 2
        if half == 0 or depth[nid] >= max_depth:
            break
        heapq.heappop(heap)
        del nodes[nid]
        for dr in (0, 1):
            for dc in (0, 1):
                q = (c0 + dc * half, r0 + dr * half, c0 + (dc + 1) * half, r0 + (dr + 1) * half)
                count = summed.total(*q)
                nodes[next_id] = (*q, count)
                depth[next_id] = depth[nid] + 1
                heapq.heappush(heap, (-count, next_id))
                next_id += 1
    return _finish(nodes, grid, domain)


def _kd_split(summed: _Summed, counts: np.ndarray, node) -> tuple | None:
    """Best lattice split of ``node``: longer axis (ties to x), most balanced, lowest coordinate."""
    c0, r0, c1, r1, total = node
    w, h = c1 - c0, r1 - r0
    if max(w, h) < 2:
        return None
    block = counts[r0:r1, c0:c1]
    if w >= h:
        left = np.cumsum(block.sum(axis=0))[:-1]
        k = int(np.argmin(np.abs(2 * left - total)))
        cut = c0 + k + 1
        a, b = (c0, r0, cut, r1), (cut, r0, c1, r1)
    else:
        left = np.cumsum(block.sum(axis=1))[:-1]
        k = int(np.argmin(np.abs(2 * left - total)))
        cut = r0 + k + 1
        a, b = (c0, r0, c1, cut), (c0, cut, c1, r1)
    return (*a, summed.total(*a)), (*b, summed.total(*b))


def build_kdtree(grid: CountGrid, max_divisions: int) -> DivisionSet:
    """Greedy kd-tree divisions over the grid's own domain.

    The heaviest division (ties to the lowest id) is cut in two along its
    longer side at the 5000 m position minimizing the count difference. A
    single-cell division cannot be cut and is kept as is.
    """
    if max_divisions < 1:
        raise ValueError("max_divisions must be >= 1")
    summed = _Summed(grid.counts)
    nodes = {1: (0, 0, grid.width, grid.height, summed.total(0, 0, grid.width, grid.height))}
    heap = [(-nodes[1][4], 1)]
    next_id = 2
    while heap and len(nodes) < max_divisions:
        _, nid = heapq.heappop(heap)
        halves = _kd_split(summed, grid.counts, nodes[nid])
        if halves is None:
            continue
        del nodes[nid]
        for child in halves:
            nodes[next_id] = child
            heapq.heappush(heap, (-child[4], next_id))
            next_id += 1
    return _finish(nodes, grid, grid.domain)


def division_counts(divisions: DivisionSet, grid: CountGrid) -> dict[int, int]:
    summed = _Summed(grid.counts)
    ox, oy = grid.origin
    out = {}
    for d in divisions:
        x0, y0, x1, y1 = d.rect
        out[d.id] = summed.total(int(round((x0 - ox) / ANCHOR)), int(round((y0 - oy) / ANCHOR)),
                                 int(round((x1 - ox) / ANCHOR)), int(round((y1 - oy) / ANCHOR)))
    return out


def balance(divisions: DivisionSet, grid: CountGrid) -> BalanceReport:
    """Population SD and CV (percent) of per-division cell-fact counts."""
    divisions.validate()
    g = grid.domain
    d = divisions.domain
    if g.x_min < d.x_min or g.y_min < d.y_min or g.x_max > d.x_max or g.y_max > d.y_max:
        raise ValidationError("divisions do not cover the count grid")
    counts = division_counts(divisions, grid)
    values = np.array(list(counts.values()), dtype=float)
    sd = float(values.std())
    mean = float(values.mean())
    cv = 0.0 if mean == 0 else sd / mean * 100.0
    return BalanceReport(sd=sd, cv=cv, counts=counts)


def write_divisions(path, divisions: DivisionSet) -> None:
    """Division file: two ``#`` header lines, a column header, one line per division."""
    d = divisions.domain
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# format={DIVISIONS_FORMAT} version={DIVISIONS_VERSION} lattice={divisions.lattice}\n")
        fh.write(f"# domain={d.x_min!r},{d.y_min!r},{d.x_max!r},{d.y_max!r}\n")
        fh.write("id,x_min,y_min,x_max,y_max,count\n")
        for div in divisions:
            x0, y0, x1, y1 = div.rect
            fh.write(f"{div.id},{x0!r},{y0!r},{x1!r},{y1!r},{div.count}\n")


def read_divisions(path) -> DivisionSet:
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    try:
        meta = dict(kv.split("=", 1) for kv in lines[0].lstrip("# ").split())
        if meta["format"] != DIVISIONS_FORMAT or int(meta["version"]) != DIVISIONS_VERSION:
            raise StoreFormatError(f"{path}: not a version {DIVISIONS_VERSION} division file")
        domain = Domain(*(float(v) for v in lines[1].split("=", 1)[1].split(",")))
        divisions = []
        for line in lines[3:]:
            if not line.strip():
                continue
            i, x0, y0, x1, y1, count = line.split(",")
            divisions.append(SpatialDivision(int(i), (float(x0), float(y0), float(x1), float(y1)), int(count)))
    except (KeyError, IndexError, ValueError) as exc:
        raise StoreFormatError(f"{path}: malformed division file ({exc})") from exc
    return DivisionSet(divisions, domain, int(meta["lattice"]))
