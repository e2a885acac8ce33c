"""Embedded AIS trajectory warehouse.

Stages: :mod:`~aiswh.ingest` (parse, project, clean), :mod:`~aiswh.trajectory`
(construct, simplify), :mod:`~aiswh.grid` (cell rollup), :mod:`~aiswh.partition`
(kd/quad divisions), :mod:`~aiswh.heatmap` (tiles and queries) and
:mod:`~aiswh.cluster` (sharded query simulation).
"""

from .errors import AiswhError, ConfigError, DomainError, StoreFormatError, ValidationError
from .grid import ANCHOR, GRANULARITIES, CellKey, Domain
from .heatmap import BUILTIN_TYPES, HeatmapType, Raster, TileStore, query_heatmap
from .ingest import AisRecord, CleaningRules, CsvSchema, Projection, Rule
from .partition import CountGrid, DivisionSet, SpatialDivision, balance, build_kdtree, build_quadtree
from .trajectory import Trajectory, TrajectoryParams, build_trajectories, simplify

__version__ = "0.1.0"

__all__ = [
    "AiswhError", "ConfigError", "DomainError", "StoreFormatError", "ValidationError",
    "ANCHOR", "GRANULARITIES", "CellKey", "Domain",
    "BUILTIN_TYPES", "HeatmapType", "Raster", "TileStore", "query_heatmap",
    "AisRecord", "CleaningRules", "CsvSchema", "Projection", "Rule",
    "CountGrid", "DivisionSet", "SpatialDivision", "balance", "build_kdtree", "build_quadtree",
    "Trajectory", "TrajectoryParams", "build_trajectories", "simplify",
]
