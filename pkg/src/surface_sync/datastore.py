"""In-memory asset store: ingestion, query evaluation and a grid bbox index.

Stands in for the cloud database: CSV (`id,lat,lon,ts,<attr...>`, RFC-4180)
or JSONL (one record object per line) goes in, validated records come out.
Stores are immutable after ingest; re-ingestion builds a new store the
server swaps in atomically.

Matching semantics are aligned with the SQL emission so both routes return
identical id sets: inclusive region bounds (SQL BETWEEN); a predicate on an
attribute a record lacks never matches (SQL NULL); comparisons apply within
one type only (numbers with numbers, strings with strings).
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path

import numpy as np

from surface_sync import kernels
from surface_sync.geo import GeoBounds, GeoPoint, clamp_mercator, norm_mercator
from surface_sync.query.ast import QueryAST, Predicate, validate as validate_ast
from surface_sync.timeutil import parse_rfc3339

RESERVED_FIELDS = ("id", "lat", "lon", "ts")

DEFAULT_GRID = 64


class ParseError(ValueError):
    def __init__(self, row: int, reason: str):
        self.row = row
        self.reason = reason
        super().__init__(f"row {row}: {reason}")


class DuplicateId(ValueError):
    def __init__(self, record_id: str, rows: tuple[int, int]):
        self.record_id = record_id
        self.rows = rows
        super().__init__(f"duplicate id {record_id!r} on rows {rows[0]} and {rows[1]}")


class UnknownAttribute(LookupError):
    """Predicate names an attribute absent from every record."""

    def __init__(self, attr: str):
        self.attr = attr
        super().__init__(f"unknown attribute {attr!r}")


class InvalidQuery(ValueError):
    def __init__(self, problems: list[str]):
        self.problems = problems
        super().__init__("; ".join(problems))


@dataclass(frozen=True, slots=True)
class AssetRecord:
    id: str
    pos: GeoPoint
    ts: datetime
    attrs: dict[str, str | int | float] = field(default_factory=dict)


@dataclass(frozen=True, slots=True)
class ResultSet:
    records: tuple[AssetRecord, ...]
    total: int


class Store:
    """Immutable record collection with a uniform grid over Mercator space."""

    def __init__(self, records: list[AssetRecord], grid: int = DEFAULT_GRID):
        self.records: tuple[AssetRecord, ...] = tuple(
            sorted(records, key=lambda r: r.id)
        )
        self.by_id: dict[str, AssetRecord] = {r.id: r for r in self.records}
        self.attr_names: frozenset[str] = frozenset(
            name for r in self.records for name in r.attrs
        )
        self._grid_n = grid
        self._cells: dict[tuple[int, int], list[str]] = {}
        if self.records:
            lat = np.fromiter((r.pos.lat for r in self.records), dtype=np.float64)
            lon = np.fromiter((r.pos.lon for r in self.records), dtype=np.float64)
            nx, ny = kernels.norm_mercator_arrays(lat, lon)
            for r, cx, cy in zip(self.records, nx, ny):
                cell = (self._cell_index(cx), self._cell_index(cy))
                self._cells.setdefault(cell, []).append(r.id)

    def __len__(self) -> int:
        return len(self.records)

    def _cell_index(self, coord: float) -> int:
        return min(int(coord * self._grid_n), self._grid_n - 1)

    def candidates(self, b: GeoBounds) -> list[AssetRecord]:
        """Records in grid cells overlapping the bbox (superset of matches)."""
        if b.wrap:
            raise ValueError("antimeridian-wrapping regions unsupported")
        nw = norm_mercator(clamp_mercator(b.north_west))
        se = norm_mercator(clamp_mercator(b.south_east))
        x0, x1 = self._cell_index(nw[0]), self._cell_index(se[0])
        y0, y1 = self._cell_index(nw[1]), self._cell_index(se[1])
        out: list[AssetRecord] = []
        for cx in range(x0, x1 + 1):
            for cy in range(y0, y1 + 1):
                for record_id in self._cells.get((cx, cy), ()):
                    out.append(self.by_id[record_id])
        return out


def _validate_record(
    row: int, record_id: str, lat: float, lon: float, ts_text: str, attrs: dict
) -> AssetRecord:
    if not record_id:
        raise ParseError(row, "empty id")
    try:
        pos = GeoPoint(lat, lon)
    except ValueError as e:
        raise ParseError(row, str(e)) from None
    try:
        ts = parse_rfc3339(ts_text)
    except ValueError as e:
        raise ParseError(row, str(e)) from None
    for name, value in attrs.items():
        if name in RESERVED_FIELDS:
            raise ParseError(row, f"attribute {name!r} is a reserved field name")
        if isinstance(value, bool) or not isinstance(value, (str, int, float)):
            raise ParseError(row, f"attribute {name!r} must be string or number")
    return AssetRecord(record_id, pos, ts, attrs)


def _coerce_csv_value(text: str) -> str | int | float:
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def _number(row: int, name: str, text: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise ParseError(row, f"{name} must be numeric, got {text!r}") from None


def _iter_csv(path: Path):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            return
        missing = [k for k in RESERVED_FIELDS if k not in reader.fieldnames]
        if missing:
            raise ParseError(1, f"header missing columns {missing}")
        for row, raw in enumerate(reader, start=2):
            if raw.get(None):
                raise ParseError(row, "more cells than header columns")
            attrs = {
                k: _coerce_csv_value(v)
                for k, v in raw.items()
                if k not in RESERVED_FIELDS and k is not None and v not in (None, "")
            }
            yield row, _validate_record(
                row,
                raw["id"] or "",
                _number(row, "lat", raw["lat"] or ""),
                _number(row, "lon", raw["lon"] or ""),
                raw["ts"] or "",
                attrs,
            )


def _iter_jsonl(path: Path):
    with open(path, encoding="utf-8") as fh:
        for row, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                doc = json.loads(line)
            except json.JSONDecodeError as e:
                raise ParseError(row, f"bad JSON: {e.msg}") from None
            if not isinstance(doc, dict):
                raise ParseError(row, "record must be an object")
            missing = [k for k in RESERVED_FIELDS if k not in doc]
            if missing:
                raise ParseError(row, f"missing keys {missing}")
            lat, lon = doc["lat"], doc["lon"]
            if isinstance(lat, bool) or isinstance(lon, bool) or not all(
                isinstance(c, (int, float)) for c in (lat, lon)
            ):
                raise ParseError(row, "lat/lon must be numbers")
            if not isinstance(doc["id"], str):
                raise ParseError(row, "id must be a string")
            if not isinstance(doc["ts"], str):
                raise ParseError(row, "ts must be an RFC-3339 string")
            attrs = {k: v for k, v in doc.items() if k not in RESERVED_FIELDS}
            yield row, _validate_record(row, doc["id"], lat, lon, doc["ts"], attrs)


def ingest(source: str | Path, fmt: str = "CSV", grid: int = DEFAULT_GRID) -> Store:
    """Load and validate a dataset; duplicate ids are rejected with row numbers."""
    path = Path(source)
    if not path.exists():
        raise FileNotFoundError(str(path))
    fmt = fmt.upper()
    if fmt == "CSV":
        records_iter = _iter_csv(path)
    elif fmt == "JSONL":
        records_iter = _iter_jsonl(path)
    else:
        raise ValueError(f"unknown dataset format {fmt!r} (CSV or JSONL)")
    records: list[AssetRecord] = []
    seen: dict[str, int] = {}
    for row, record in records_iter:
        if record.id in seen:
            raise DuplicateId(record.id, (seen[record.id], row))
        seen[record.id] = row
        records.append(record)
    return Store(records, grid=grid)


def _matches_predicate(record: AssetRecord, p: Predicate) -> bool:
    value = record.id if p.attr == "id" else record.attrs.get(p.attr)
    if value is None:
        return False
    if p.op == "CONTAINS":
        return isinstance(value, str) and str(p.value) in value
    both_numbers = isinstance(value, (int, float)) and isinstance(p.value, (int, float))
    both_strings = isinstance(value, str) and isinstance(p.value, str)
    if not (both_numbers or both_strings):
        return False
    if p.op == "=":
        return value == p.value
    if p.op == "!=":
        return value != p.value
    if p.op == "<":
        return value < p.value
    if p.op == "<=":
        return value <= p.value
    if p.op == ">":
        return value > p.value
    return value >= p.value


def _matches(record: AssetRecord, ast: QueryAST) -> bool:
    if ast.regions and not any(r.contains(record.pos) for r in ast.regions):
        return False
    if ast.time_window is not None:
        start, end = ast.time_window
        if start is not None and record.ts < start:
            return False
        if end is not None and record.ts > end:
            return False
    return all(_matches_predicate(record, p) for p in ast.predicates)


def _project(record: AssetRecord, projection: tuple[str, ...]) -> AssetRecord:
    if "*" in projection:
        return record
    keep = set(projection)
    return AssetRecord(
        record.id,
        record.pos,
        record.ts,
        {k: v for k, v in record.attrs.items() if k in keep},
    )


def evaluate(store: Store, ast: QueryAST) -> ResultSet:
    """Evaluate a validated AST; deterministic id-ascending order.

    Raises UnknownAttribute when a predicate names an attribute no record
    carries (reported, never silently false), InvalidQuery when the AST
    fails validation.
    """
    problems = validate_ast(ast)
    if problems:
        raise InvalidQuery(problems)
    for p in ast.predicates:
        if p.attr != "id" and p.attr not in store.attr_names:
            raise UnknownAttribute(p.attr)
    if ast.regions:
        seen: set[str] = set()
        pool: list[AssetRecord] = []
        for region in ast.regions:
            for record in store.candidates(region):
                if record.id not in seen:
                    seen.add(record.id)
                    pool.append(record)
        pool.sort(key=lambda r: r.id)
    else:
        pool = list(store.records)
    matched = [r for r in pool if _matches(r, ast)]
    total = len(matched)
    if ast.limit is not None:
        matched = matched[: ast.limit]
    return ResultSet(
        tuple(_project(r, ast.projection) for r in matched),
        total,
    )


def bbox_index_query(store: Store, b: GeoBounds) -> set[str]:
    """Exact id set inside a bbox via the grid (identical to a linear scan)."""
    return {r.id for r in store.candidates(b) if b.contains(r.pos)}
