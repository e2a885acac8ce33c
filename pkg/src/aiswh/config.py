"""Pipeline configuration: one JSON file, validated as a whole.

Unknown keys and bad values are collected and reported together in a single
:class:`ConfigError`. The effective configuration (defaults filled in) is
written next to the outputs as ``config.effective.json`` and can be loaded
again unchanged.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .errors import ConfigError
from .grid import ANCHOR, GRANULARITIES, Domain
from .heatmap import BUILTIN_TYPES, HeatmapType
from .ingest import CleaningRules, CsvSchema, Projection, Rule
from .synthetic import FleetConfig
from .trajectory import TrajectoryParams

EFFECTIVE_NAME = "config.effective.json"


@dataclass
class PipelineConfig:
    input_paths: list = field(default_factory=lambda: ["fleet.csv"])
    schema: dict = field(default_factory=dict)
    projection: dict = field(default_factory=lambda: {"lat_ref": 56.0, "lng_ref": 11.0})
    cleaning: dict = field(default_factory=lambda: {
        "max_length": 500.0, "max_beam": 80.0, "land_path": None,
        "extra_invalid_mmsi": [], "disabled_rules": []})
    trajectory: dict = field(default_factory=lambda: asdict(TrajectoryParams()))
    simplify: bool = True
    domain: list = field(default_factory=lambda: [-100_000.0, -100_000.0, 100_000.0, 100_000.0])
    granularities: list = field(default_factory=lambda: list(GRANULARITIES))
    division_method: str = "kd"
    division_budget: int = 400
    heatmap_types: list = field(default_factory=lambda: [t.to_dict() for t in BUILTIN_TYPES])
    workers: list = field(default_factory=lambda: [1, 5])
    cost_model: dict = field(default_factory=lambda: {"alpha": 1e-8, "beta": 1e-3})
    cores_per_worker: int = 1
    colormap: str = "viridis"
    color_scale: str = "log"
    generator: dict = field(default_factory=lambda: asdict(FleetConfig()))
    output_dir: str = "out"
    base_dir: str = field(default=".", repr=False)  # resolves relative paths; not serialized

    # -- loading -----------------------------------------------------------

    @classmethod
    def from_dict(cls, data: dict, base_dir=".") -> "PipelineConfig":
        known = {f.name for f in fields(cls)} - {"base_dir"}
        violations = [f"unknown config key {k!r}" for k in sorted(set(data) - known)]
        cfg = cls(**{k: v for k, v in data.items() if k in known}, base_dir=str(base_dir))
        violations += cfg.problems()
        if violations:
            raise ConfigError(violations)
        return cfg

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        path = Path(path)
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError([f"{path}: invalid JSON ({exc})"]) from None
        if not isinstance(data, dict):
            raise ConfigError([f"{path}: top level must be an object"])
        return cls.from_dict(data, base_dir=path.parent)

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("base_dir")
        return d

    def write_effective(self, directory=None) -> Path:
        out = Path(directory) if directory else self.out_dir
        out.mkdir(parents=True, exist_ok=True)
        path = out / EFFECTIVE_NAME
        path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return path

    # -- validation --------------------------------------------------------

    def problems(self) -> list[str]:
        out = []
        if not isinstance(self.input_paths, list) or not self.input_paths:
            out.append("input_paths must be a non-empty list")
        try:
            CsvSchema.from_mapping(self.schema)
        except (ConfigError, TypeError) as exc:
            out.extend(getattr(exc, "violations", [str(exc)]))
        try:
            Projection(**self.projection)
        except TypeError as exc:
            out.append(f"projection: {exc}")
        else:
            if not -90 < self.projection.get("lat_ref", 56.0) < 90:
                out.append("projection.lat_ref must lie strictly between -90 and 90")
        cleaning_keys = {"max_length", "max_beam", "land_path", "extra_invalid_mmsi", "disabled_rules"}
        for k in sorted(set(self.cleaning) - cleaning_keys):
            out.append(f"unknown cleaning key {k!r}")
        for k in ("max_length", "max_beam"):
            if not _positive(self.cleaning.get(k, 1)):
                out.append(f"cleaning.{k} must be > 0")
        for name in self.cleaning.get("disabled_rules", []):
            if name not in Rule.__members__:
                out.append(f"cleaning.disabled_rules: unknown rule {name!r}")
        try:
            TrajectoryParams(**self.trajectory)
        except ConfigError as exc:
            out.extend(f"trajectory: {v}" for v in exc.violations)
        except TypeError as exc:
            out.append(f"trajectory: {exc}")

        if not (isinstance(self.domain, list) and len(self.domain) == 4):
            out.append("domain must be [x_min, y_min, x_max, y_max]")
        else:
            out.extend(_domain_problems(self.domain))
        bad_g = [g for g in self.granularities if g not in GRANULARITIES]
        if bad_g or not self.granularities:
            out.append(f"granularities must be a non-empty subset of {list(GRANULARITIES)}, got {self.granularities}")
        if ANCHOR not in self.granularities:
            out.append(f"granularities must include {ANCHOR} (division counts are built from it)")
        if self.division_method not in ("kd", "quad"):
            out.append(f"division_method must be 'kd' or 'quad', got {self.division_method!r}")
        if not (isinstance(self.division_budget, int) and self.division_budget >= 1):
            out.append("division_budget must be an integer >= 1")

        ids = set()
        for i, t in enumerate(self.heatmap_types):
            try:
                ht = HeatmapType(**t)
            except (ConfigError, TypeError, ValueError) as exc:
                out.append(f"heatmap_types[{i}]: {exc}")
                continue
            if ht.id in ids:
                out.append(f"heatmap_types[{i}]: duplicate id {ht.id}")
            ids.add(ht.id)
            if ht.measure is not None and ht.measure not in _MEASURES:
                out.append(f"heatmap_types[{i}]: unknown measure {ht.measure!r}")
        if not self.workers or any(not (isinstance(w, int) and w >= 1) for w in self.workers):
            out.append("workers must be a non-empty list of integers >= 1")
        if set(self.cost_model) - {"alpha", "beta"}:
            out.append("cost_model accepts only 'alpha' and 'beta'")
        if any(not (isinstance(v, (int, float)) and v >= 0) for v in self.cost_model.values()):
            out.append("cost_model coefficients must be >= 0")
        if not (isinstance(self.cores_per_worker, int) and self.cores_per_worker >= 1):
            out.append("cores_per_worker must be an integer >= 1")
        if self.color_scale not in ("linear", "log"):
            out.append("color_scale must be 'linear' or 'log'")
        try:
            FleetConfig(**self.generator)
        except TypeError as exc:
            out.append(f"generator: {exc}")
        return out

    # -- typed views -------------------------------------------------------

    def path(self, p) -> Path:
        p = Path(p)
        return p if p.is_absolute() else Path(self.base_dir) / p

    @property
    def out_dir(self) -> Path:
        return self.path(self.output_dir)

    @property
    def inputs(self) -> list[Path]:
        return [self.path(p) for p in self.input_paths]

    def domain_obj(self) -> Domain:
        return Domain(*map(float, self.domain))

    def projection_obj(self) -> Projection:
        return Projection(**self.projection)

    def schema_obj(self) -> CsvSchema:
        return CsvSchema.from_mapping(self.schema)

    def trajectory_params(self) -> TrajectoryParams:
        return TrajectoryParams(**self.trajectory)

    def cleaning_rules(self) -> CleaningRules:
        from .ingest import load_land_polygons

        c = self.cleaning
        rules = CleaningRules(domain=tuple(self.domain_obj().rect))
        rules.max_length = float(c.get("max_length", 500.0))
        rules.max_beam = float(c.get("max_beam", 80.0))
        rules.invalid_mmsi = rules.invalid_mmsi | frozenset(int(m) for m in c.get("extra_invalid_mmsi", []))
        rules.enabled = rules.enabled - {Rule[n] for n in c.get("disabled_rules", [])}
        if c.get("land_path"):
            rules.land = load_land_polygons(self.path(c["land_path"]), self.projection_obj())
        return rules

    def heatmap_type_objs(self) -> list[HeatmapType]:
        return [HeatmapType(**t) for t in self.heatmap_types]

    def fleet_config(self, seed=None) -> FleetConfig:
        g = dict(self.generator)
        if seed is not None:
            g["seed"] = seed
        return FleetConfig(**g)


_MEASURES = ("duration", "avg_sog", "delta_cog", "delta_heading", "min_draught")


def _positive(v) -> bool:
    return isinstance(v, (int, float)) and v > 0


def _domain_problems(rect) -> list[str]:
    if not all(isinstance(v, (int, float)) for v in rect):
        return ["domain values must be numbers"]
    probe = Domain.__new__(Domain)
    object.__setattr__(probe, "x_min", rect[0])
    object.__setattr__(probe, "y_min", rect[1])
    object.__setattr__(probe, "x_max", rect[2])
    object.__setattr__(probe, "y_max", rect[3])
    return probe.problems()

