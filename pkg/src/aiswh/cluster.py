"""Coordinator-plus-workers simulation of distributed heatmap queries.

Every spatial division is one shard. A query engages the shards whose
division overlaps the query area; a shard's execution cost is linear in the
pixels of the tiles it aggregates (``alpha * pixels + beta``). Each worker
runs its engaged shards one after another on a virtual clock (``cores``
executors per worker, one by default), so a shard's time is its completion
time and a worker's time is the latest completion among its shards.
"""

from __future__ import annotations

import heapq
import json
import zlib
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigError, DomainError
from .heatmap import TileStore, matched_tiles
from .partition import DivisionSet

SPATIAL = "spatial"
HASH = "hash"

# distribution scheme per relation; relations sharing a scheme are co-located
RELATIONS = {
    "fact_trajectory": HASH,
    "dim_trajectory": HASH,
    "fact_cell": SPATIAL,
    "dim_cell": SPATIAL,
    "fact_heatmap": SPATIAL,
}


@dataclass(frozen=True)
class CostModel:
    alpha: float = 1e-8  # seconds per pixel
    beta: float = 1e-3  # seconds per engaged shard

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise ConfigError("cost model coefficients must be >= 0")

    def shard_cost(self, pixels) -> float:
        return self.alpha * pixels + self.beta


@dataclass
class ShardMap:
    """Placement of spatial shards (one per division) and hash shards on workers."""

    workers: int
    shard_of_division: dict[int, int]
    worker_of_shard: dict[int, int]
    trajectory_shards: int = 32
    worker_of_trajectory_shard: dict[int, int] = field(default_factory=dict)

    def worker_shards(self, worker: int) -> list[int]:
        return sorted(s for s, w in self.worker_of_shard.items() if w == worker)

    def trajectory_shard(self, trajectory_id: int) -> int:
        key = int(trajectory_id).to_bytes(8, "little", signed=True)
        return zlib.crc32(key) % self.trajectory_shards + 1

    @staticmethod
    def colocated(relation_a: str, relation_b: str) -> bool:
        """Whether rows of the two relations that join are guaranteed to share a worker."""
        return RELATIONS[relation_a] == RELATIONS[relation_b]


def assign_shards(divisions: DivisionSet | Sequence[int], workers: int, policy: str = "round_robin",
                  trajectory_shards: int = 32) -> ShardMap:
    """One shard per division, dealt round-robin over workers in division-id order."""
    if workers < 1:
        raise ConfigError("workers must be >= 1")
    if policy != "round_robin":
        raise ConfigError(f"unknown shard placement policy {policy!r}")
    ids = sorted(divisions.ids if isinstance(divisions, DivisionSet) else divisions)
    shard_of_division = {d: d for d in ids}
    worker_of_shard = {d: k % workers + 1 for k, d in enumerate(ids)}
    traj = {s: (s - 1) % workers + 1 for s in range(1, trajectory_shards + 1)}
    return ShardMap(workers, shard_of_division, worker_of_shard, trajectory_shards, traj)


def worker_time(shard_times: Sequence[float]) -> float:
    """Time until the worker has finished all its shards: the latest shard time."""
    return float(max(shard_times)) if len(shard_times) else 0.0


@dataclass(frozen=True)
class WifResult:
    per_worker: list[float]
    average: float  # percent, normalized to [0, 100]
    degenerate: bool = False


def wif(worker_times: Sequence[float]) -> WifResult:
    """Worker idle fractions and their normalized average (percent)."""
    times = np.asarray(worker_times, dtype=float)
    n = len(times)
    if n < 1:
        raise ValueError("need at least one worker")
    top = times.max()
    if top <= 0:
        return WifResult([0.0] * n, 0.0, degenerate=True)
    per = (top - times) / top
    if n == 1:
        return WifResult(per.tolist(), 0.0)
    average = per.sum() / n * (1.0 / (1.0 - 1.0 / n)) * 100.0
    return WifResult(per.tolist(), float(average))


@dataclass(frozen=True)
class QuerySpec:
    area: tuple[float, float, float, float]
    dates: tuple[int, int]
    type_id: int
    resolution: int
    name: str = ""


@dataclass
class BenchmarkReport:
    query: QuerySpec
    workers: int
    shard_pixels: dict[int, int]
    shard_cost: dict[int, float]
    shard_time: dict[int, float]
    worker_time: dict[int, float]
    worker_wif: dict[int, float]
    average_wif: float
    runtime: float
    engaged_shards: int
    coordinator_time: float
    degenerate: bool = False

    def to_dict(self) -> dict:
        d = asdict(self)
        d["query"] = asdict(self.query)
        for k in ("shard_pixels", "shard_cost", "shard_time", "worker_time", "worker_wif"):
            d[k] = {str(i): v for i, v in d[k].items()}
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _schedule(costs: list[float], cores: int) -> list[float]:
    """Completion times of jobs run in order on ``cores`` identical executors."""
    free = [0.0] * cores
    heapq.heapify(free)
    done = []
    for c in costs:
        start = heapq.heappop(free)
        heapq.heappush(free, start + c)
        done.append(start + c)
    return done


def simulate_query(query: QuerySpec, shard_map: ShardMap, store: TileStore, divisions: DivisionSet,
                   cost: CostModel | None = None, cores: int = 1) -> BenchmarkReport:
    cost = cost or CostModel()
    if cores < 1:
        raise ConfigError("cores must be >= 1")
    tiles = matched_tiles(store, query.area, query.dates, query.type_id, query.resolution, divisions)
    if not tiles:
        raise DomainError(f"query area {query.area} touches no division")
    pixels_per_tile = (5000 // query.resolution) ** 2
    shard_pixels = {shard_map.shard_of_division[d]: n * pixels_per_tile for d, n in tiles.items()}
    shard_cost = {s: cost.shard_cost(p) for s, p in shard_pixels.items()}

    shard_time = {}
    for w in range(1, shard_map.workers + 1):
        mine = [s for s in shard_map.worker_shards(w) if s in shard_cost]
        for s, done in zip(mine, _schedule([shard_cost[s] for s in mine], cores)):
            shard_time[s] = done
    wtime = {w: worker_time([shard_time[s] for s in shard_map.worker_shards(w) if s in shard_time])
             for w in range(1, shard_map.workers + 1)}
    result = wif([wtime[w] for w in range(1, shard_map.workers + 1)])
    return BenchmarkReport(
        query=query,
        workers=shard_map.workers,
        shard_pixels=shard_pixels,
        shard_cost=shard_cost,
        shard_time=dict(sorted(shard_time.items())),
        worker_time=wtime,
        worker_wif={w: result.per_worker[w - 1] for w in wtime},
        average_wif=result.average,
        runtime=max(wtime.values()),
        engaged_shards=len(shard_pixels),
        # coordinator only places one division raster per engaged shard
        coordinator_time=cost.alpha * sum(
            _division_raster_pixels(divisions[d].rect, query) for d in tiles),
        degenerate=result.degenerate,
    )


def _division_raster_pixels(rect, query: QuerySpec) -> int:
    x0, y0, x1, y1 = rect
    a0, b0, a1, b1 = query.area
    w = max(0.0, min(x1, a1) - max(x0, a0))
    h = max(0.0, min(y1, b1) - max(y0, b0))
    return int(np.ceil(w / query.resolution) * np.ceil(h / query.resolution))


def scale_up(report_1w: BenchmarkReport, report_nw: BenchmarkReport) -> float:
    """Single-worker runtime over multi-worker runtime, in percent."""
    if report_1w.runtime <= 0 or report_nw.runtime <= 0:
        raise ValueError("scale-up is undefined for a zero runtime")
    return report_1w.runtime / report_nw.runtime * 100.0
