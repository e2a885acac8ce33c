"""Parsing, projection and cleaning of raw AIS CSV exports.

The default column names follow the Danish Maritime Authority CSV dumps
(``# Timestamp,Type of mobile,MMSI,Latitude,Longitude,...``). Any other
export can be read by passing a :class:`CsvSchema` with remapped names.

Accepted records are persisted as a versioned ``.npz`` column file, see
:func:`write_records`.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from dataclasses import dataclass, field, fields, replace
from datetime import datetime, timezone
from enum import Enum
from typing import IO, Iterable, Iterator, Sequence

import numpy as np

from ._npz import savez
from .errors import ConfigError, StoreFormatError

EARTH_RADIUS = 6_371_000.0

RECORDS_FORMAT = "aiswh-records"
RECORDS_VERSION = 1


class Rule(str, Enum):
    PARSE = "PARSE"
    RANGE = "RANGE"
    MMSI = "MMSI"
    DIMENSIONS = "DIMENSIONS"
    DOMAIN = "DOMAIN"
    ON_LAND = "ON_LAND"


@dataclass(slots=True)
class AisRecord:
    t: int
    lng: float
    lat: float
    mmsi: int
    x: float = math.nan
    y: float = math.nan
    sog: float | None = None
    cog: float | None = None
    heading: float | None = None
    draught: float | None = None
    nav_status: str | None = None
    ship_type: str | None = None
    destination: str | None = None
    dim_bow: float | None = None
    dim_stern: float | None = None
    dim_port: float | None = None
    dim_starboard: float | None = None
    line: int = field(default=0, compare=False)
    raw: str = field(default="", compare=False, repr=False)


@dataclass(frozen=True, slots=True)
class Rejection:
    line: int
    rule: Rule
    raw: str


@dataclass(frozen=True)
class CsvSchema:
    """Maps :class:`AisRecord` field names to CSV header names."""

    t: str = "# Timestamp"
    mmsi: str = "MMSI"
    lat: str = "Latitude"
    lng: str = "Longitude"
    nav_status: str | None = "Navigational status"
    sog: str | None = "SOG"
    cog: str | None = "COG"
    heading: str | None = "Heading"
    ship_type: str | None = "Ship type"
    draught: str | None = "Draught"
    destination: str | None = "Destination"
    dim_bow: str | None = "A"
    dim_stern: str | None = "B"
    dim_port: str | None = "C"
    dim_starboard: str | None = "D"

    MANDATORY = ("t", "mmsi", "lat", "lng")

    @classmethod
    def from_mapping(cls, mapping: dict) -> "CsvSchema":
        unknown = set(mapping) - {f.name for f in fields(cls)}
        if unknown:
            raise ConfigError([f"unknown schema field {name!r}" for name in sorted(unknown)])
        return cls(**mapping)


_FLOAT_FIELDS = ("sog", "cog", "heading", "draught", "dim_bow", "dim_stern", "dim_port", "dim_starboard")
_TEXT_FIELDS = ("nav_status", "ship_type", "destination")


def parse_timestamp(text: str) -> int:
    """Seconds since the epoch (UTC) from ``DD/MM/YYYY HH:MM:SS`` or ISO-8601."""
    text = text.strip()
    if len(text) == 19 and text[2] == "/" and text[5] == "/":
        dt = datetime(
            int(text[6:10]), int(text[3:5]), int(text[0:2]),
            int(text[11:13]), int(text[14:16]), int(text[17:19]),
            tzinfo=timezone.utc,
        )
    else:
        if text.endswith("Z"):
            text = text[:-1] + "+00:00"
        dt = datetime.fromisoformat(text)
        if dt.tzinfo is None:
            dt = dt.replace(tzinfo=timezone.utc)
    return math.floor(dt.timestamp())


def format_timestamp(t: float) -> str:
    return datetime.fromtimestamp(int(t), tz=timezone.utc).strftime("%d/%m/%Y %H:%M:%S")


def _opt_float(text: str) -> float | None:
    text = text.strip()
    if not text:
        return None
    value = float(text)
    if not math.isfinite(value):
        raise ValueError(f"non-finite value {text!r}")
    return value


def _open_text(source) -> tuple[IO[str], bool]:
    if isinstance(source, (str, os.PathLike)):
        return open(source, "r", encoding="utf-8", newline=""), True
    if isinstance(source, io.TextIOBase):
        return source, False
    return io.TextIOWrapper(source, encoding="utf-8", newline=""), False


def parse_ais_csv(source, schema: CsvSchema | None = None) -> Iterator[AisRecord | Rejection]:
    """Yield one :class:`AisRecord` or one ``PARSE`` :class:`Rejection` per data row.

    ``source`` is a path, a text stream or a byte stream. Line numbers are
    1-based file lines, the header being line 1. A header missing one of the
    mandatory columns raises :class:`ConfigError`.
    """
    schema = schema or CsvSchema()
    stream, owned = _open_text(source)
    try:
        header_line = stream.readline()
        header = next(csv.reader([header_line]), [])
        header = [h.strip() for h in header]
        positions = {name: i for i, name in enumerate(header)}

        missing = [getattr(schema, f) for f in CsvSchema.MANDATORY if getattr(schema, f) not in positions]
        if missing:
            raise ConfigError([f"missing mandatory column {name!r}" for name in missing])

        index = {}
        for f in fields(schema):
            column = getattr(schema, f.name)
            if column is not None and column in positions:
                index[f.name] = positions[column]

        for lineno, line in enumerate(stream, start=2):
            raw = line.rstrip("\r\n")
            try:
                row = next(csv.reader([raw]))
                if len(row) != len(header):
                    raise ValueError("field count mismatch")
                mmsi_text = row[index["mmsi"]].strip()
                if not mmsi_text.isdigit():
                    raise ValueError("mmsi is not an integer")
                rec = AisRecord(
                    t=parse_timestamp(row[index["t"]]),
                    lng=float(row[index["lng"]]),
                    lat=float(row[index["lat"]]),
                    mmsi=int(mmsi_text),
                    line=lineno,
                    raw=raw,
                )
                if not (math.isfinite(rec.lat) and math.isfinite(rec.lng)):
                    raise ValueError("non-finite coordinate")
                for name in _FLOAT_FIELDS:
                    if name in index:
                        setattr(rec, name, _opt_float(row[index[name]]))
                for name in _TEXT_FIELDS:
                    if name in index:
                        setattr(rec, name, row[index[name]].strip() or None)
            except (ValueError, IndexError, StopIteration):
                yield Rejection(lineno, Rule.PARSE, raw)
                continue
            yield rec
    finally:
        if owned:
            stream.close()


class CoordinateRangeError(ValueError):
    pass


@dataclass(frozen=True)
class Projection:
    """Equirectangular projection to planar meters around a reference point.

    x = R cos(lat_ref) (lng - lng_ref), y = R (lat - lat_ref), angles in radians.
    """

    lat_ref: float = 56.0
    lng_ref: float = 11.0
    radius: float = EARTH_RADIUS

    def forward(self, lat, lng):
        k = math.pi / 180.0
        lat = np.asarray(lat, dtype=float)
        lng = np.asarray(lng, dtype=float)
        x = self.radius * math.cos(self.lat_ref * k) * (lng - self.lng_ref) * k
        y = self.radius * (lat - self.lat_ref) * k
        return x, y

    def inverse(self, x, y):
        k = math.pi / 180.0
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        lat = self.lat_ref + y / (self.radius * k)
        lng = self.lng_ref + x / (self.radius * math.cos(self.lat_ref * k) * k)
        return lat, lng


def in_range(lat: float, lng: float) -> bool:
    return -90.0 <= lat <= 90.0 and -180.0 <= lng <= 180.0


def project(record: AisRecord, proj: Projection) -> AisRecord:
    """Return a copy of ``record`` with planar ``x``/``y`` filled in."""
    if not in_range(record.lat, record.lng):
        raise CoordinateRangeError(f"lat/lng out of range: {record.lat}, {record.lng}")
    x, y = proj.forward(record.lat, record.lng)
    return replace(record, x=float(x), y=float(y))


def _repeated_digits():
    return frozenset(int(str(d) * 9) for d in range(1, 10))


@dataclass
class CleaningRules:
    """Per-record cleaning predicates.

    ``domain`` is ``(x_min, y_min, x_max, y_max)`` in projected meters and is
    half-open on the upper sides, like the cell grid. ``land`` holds polygons
    as sequences of rings, each ring an ``(n, 2)`` array of planar meters.
    """

    max_length: float = 500.0
    max_beam: float = 80.0
    invalid_mmsi: frozenset = field(default_factory=_repeated_digits)
    domain: tuple[float, float, float, float] | None = None
    land: list | None = None
    enabled: frozenset = frozenset(Rule) - {Rule.PARSE}

    def active(self, rule: Rule) -> bool:
        if rule not in self.enabled:
            return False
        if rule is Rule.DOMAIN:
            return self.domain is not None
        if rule is Rule.ON_LAND:
            return bool(self.land)
        return True


def points_in_polygon(x, y, rings) -> np.ndarray:
    """Even-odd ray casting over all rings (outer ring and holes)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    inside = np.zeros(x.shape, dtype=bool)
    for ring in rings:
        ring = np.asarray(ring, dtype=float)
        if len(ring) and np.array_equal(ring[0], ring[-1]):
            ring = ring[:-1]
        xi, yi = ring[:, 0], ring[:, 1]
        xj, yj = np.roll(xi, 1), np.roll(yi, 1)
        for ax, ay, bx, by in zip(xi, yi, xj, yj):
            crosses = (ay > y) != (by > y)
            with np.errstate(divide="ignore", invalid="ignore"):
                x_at = ax + (y - ay) * (bx - ax) / (by - ay)
            inside ^= crosses & (x < x_at)
    return inside


def rule_failures(records: Sequence[AisRecord], rules: CleaningRules) -> list[Rule | None]:
    """First failing rule per record, or ``None`` when the record is clean."""
    n = len(records)
    if n == 0:
        return []
    lat = np.array([r.lat for r in records], dtype=float)
    lng = np.array([r.lng for r in records], dtype=float)
    x = np.array([r.x for r in records], dtype=float)
    y = np.array([r.y for r in records], dtype=float)

    def col(name):
        return np.array([np.nan if getattr(r, name) is None else getattr(r, name) for r in records], dtype=float)

    checks: list[tuple[Rule, np.ndarray]] = []
    if rules.active(Rule.RANGE):
        checks.append((Rule.RANGE, ~((lat >= -90) & (lat <= 90) & (lng >= -180) & (lng <= 180))))
    if rules.active(Rule.MMSI):
        mmsi = np.array([r.mmsi for r in records], dtype=np.int64)
        bad = (mmsi < 100_000_000) | (mmsi > 999_999_999)
        bad |= np.isin(mmsi, np.fromiter(rules.invalid_mmsi, dtype=np.int64, count=len(rules.invalid_mmsi)))
        checks.append((Rule.MMSI, bad))
    if rules.active(Rule.DIMENSIONS):
        bow, stern, port, star = col("dim_bow"), col("dim_stern"), col("dim_port"), col("dim_starboard")
        length = bow + stern
        beam = port + star
        bad = np.zeros(n, dtype=bool)
        for part in (bow, stern, port, star):
            bad |= part < 0
        has_len = ~np.isnan(length)
        has_beam = ~np.isnan(beam)
        bad |= has_len & ((length <= 0) | (length > rules.max_length))
        bad |= has_beam & ((beam <= 0) | (beam > rules.max_beam))
        checks.append((Rule.DIMENSIONS, bad))
    if rules.active(Rule.DOMAIN):
        x0, y0, x1, y1 = rules.domain
        ok = (x >= x0) & (x < x1) & (y >= y0) & (y < y1)
        checks.append((Rule.DOMAIN, ~ok))
    if rules.active(Rule.ON_LAND):
        on_land = np.zeros(n, dtype=bool)
        finite = np.isfinite(x) & np.isfinite(y)
        for polygon in rules.land:
            on_land[finite] |= points_in_polygon(x[finite], y[finite], polygon)
        checks.append((Rule.ON_LAND, on_land))

    out: list[Rule | None] = [None] * n
    for rule, bad in reversed(checks):
        for i in np.flatnonzero(bad):
            out[i] = rule
    return out


def clean(records: Sequence[AisRecord], rules: CleaningRules) -> tuple[list[AisRecord], list[Rejection]]:
    accepted, rejected = [], []
    for rec, rule in zip(records, rule_failures(records, rules)):
        if rule is None:
            accepted.append(rec)
        else:
            rejected.append(Rejection(rec.line, rule, rec.raw))
    return accepted, rejected


def load(source, schema: CsvSchema | None, proj: Projection, rules: CleaningRules):
    """Parse, project and clean one CSV source.

    Returns ``(accepted, rejected)``; every data line ends up in exactly one
    of the two lists. Rejections are ordered by line number.
    """
    parsed, rejected = [], []
    for item in parse_ais_csv(source, schema):
        if isinstance(item, Rejection):
            rejected.append(item)
            continue
        try:
            parsed.append(project(item, proj))
        except CoordinateRangeError:
            rejected.append(Rejection(item.line, Rule.RANGE, item.raw))
    accepted, dirty = clean(parsed, rules)
    rejected.extend(dirty)
    rejected.sort(key=lambda r: r.line)
    return accepted, rejected


def load_land_polygons(path, proj: Projection) -> list:
    """Read land polygons from GeoJSON (lng/lat) and project them to meters."""
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    geometries = []
    if doc.get("type") == "FeatureCollection":
        geometries = [f["geometry"] for f in doc["features"]]
    elif doc.get("type") == "Feature":
        geometries = [doc["geometry"]]
    else:
        geometries = [doc]
    polygons = []
    for geom in geometries:
        if geom["type"] == "Polygon":
            parts = [geom["coordinates"]]
        elif geom["type"] == "MultiPolygon":
            parts = geom["coordinates"]
        else:
            raise ConfigError(f"unsupported land geometry {geom['type']!r}")
        for part in parts:
            rings = []
            for ring in part:
                ring = np.asarray(ring, dtype=float)
                x, y = proj.forward(ring[:, 1], ring[:, 0])
                rings.append(np.column_stack([x, y]))
            polygons.append(rings)
    return polygons


# -- columnar record file --------------------------------------------------

_COLUMNS = (
    ("t", np.int64), ("lng", float), ("lat", float), ("x", float), ("y", float),
    ("mmsi", np.int64), ("sog", float), ("cog", float), ("heading", float),
    ("draught", float), ("dim_bow", float), ("dim_stern", float),
    ("dim_port", float), ("dim_starboard", float), ("line", np.int64),
)


def records_to_columns(records: Sequence[AisRecord]) -> dict[str, np.ndarray]:
    cols = {}
    for name, dtype in _COLUMNS:
        values = [getattr(r, name) for r in records]
        if dtype is float:
            values = [np.nan if v is None else v for v in values]
        cols[name] = np.array(values, dtype=dtype)
    for name in _TEXT_FIELDS:
        cols[name] = np.array([getattr(r, name) or "" for r in records], dtype=str)
    return cols


def write_records(path, records: Sequence[AisRecord]) -> None:
    """Write accepted records as an ``.npz`` column file.

    Layout (version 1): one array per :class:`AisRecord` field except
    ``raw``; absent floats are NaN, absent text is the empty string; plus
    scalar ``format`` and ``version`` entries.
    """
    cols = records_to_columns(records)
    with open(path, "wb") as fh:
        savez(fh, format=np.array(RECORDS_FORMAT), version=np.array(RECORDS_VERSION), **cols)


def read_columns(path) -> dict[str, np.ndarray]:
    with np.load(path, allow_pickle=False) as data:
        if str(data["format"]) != RECORDS_FORMAT or int(data["version"]) != RECORDS_VERSION:
            raise StoreFormatError(f"{path}: not a version {RECORDS_VERSION} record file")
        return {k: data[k] for k in data.files if k not in ("format", "version")}


def read_records(path) -> list[AisRecord]:
    cols = read_columns(path)
    n = len(cols["t"])
    out = []
    for i in range(n):
        kw = {}
        for name, dtype in _COLUMNS:
            v = cols[name][i]
            if dtype is float:
                v = float(v)
                if name not in ("lng", "lat", "x", "y") and math.isnan(v):
                    v = None
            else:
                v = int(v)
            kw[name] = v
        for name in _TEXT_FIELDS:
            kw[name] = str(cols[name][i]) or None
        out.append(AisRecord(**kw))
    return out


def write_rejections(path, rejections: Iterable[Rejection]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["line", "rule", "raw"])
        for r in rejections:
            w.writerow([r.line, r.rule.value, r.raw])


def read_rejections(path) -> list[Rejection]:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        return [Rejection(int(line), Rule(rule), raw) for line, rule, raw in reader]
