"""Structured visual query model: regions OR-combined, predicates AND-combined.

The AST is the pivot every dialect parses into and emits from. Canonical
ordering (regions, then predicates sorted by attr/op/value) keeps emitted
text and golden fixtures stable.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, replace
from datetime import datetime

from surface_sync.geo import GeoBounds

ATTR_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")

OPS = ("=", "!=", "<", "<=", ">", ">=", "CONTAINS")
OP_ALIASES = {"≠": "!=", "≤": "<=", "≥": ">="}
NUMERIC_OPS = ("<", "<=", ">", ">=")

ALL = ("*",)

# lat/lon belong in regions and ts in the time window; letting them double
# as predicates would create two competing spatial/temporal paths.
RESERVED_PREDICATE_ATTRS = ("lat", "lon", "ts")

Value = str | int | float
TimeWindow = tuple[datetime | None, datetime | None]


class QuerySyntaxError(ValueError):
    """Malformed query text; carries the offending position."""

    def __init__(self, message: str, position: int = 0, expected: str | None = None):
        self.position = position
        self.expected = expected
        suffix = f" (expected {expected})" if expected else ""
        super().__init__(f"{message} at offset {position}{suffix}")


class UnsupportedFeature(ValueError):
    """Recognized construct outside the supported subset; never silently dropped."""

    def __init__(self, feature: str):
        self.feature = feature
        super().__init__(f"unsupported feature: {feature}")


class UnsupportedDialect(ValueError):
    """Dialect that cannot be parsed (SQL is emit-only)."""


def normalize_op(op: str) -> str:
    return OP_ALIASES.get(op, op)


@dataclass(frozen=True, slots=True)
class Predicate:
    attr: str
    op: str
    value: Value


@dataclass(frozen=True, slots=True)
class QueryAST:
    regions: tuple[GeoBounds, ...] = ()
    predicates: tuple[Predicate, ...] = ()
    projection: tuple[str, ...] = ALL
    limit: int | None = None
    time_window: TimeWindow | None = None


def _is_number(v: object) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def validate(ast: QueryAST) -> list[str]:
    """Return every invariant violation (empty list means the AST is runnable)."""
    problems: list[str] = []
    if not ast.regions and not ast.predicates:
        problems.append("no regions and no predicates")
    for r in ast.regions:
        if r.wrap:
            problems.append("antimeridian-wrapping regions unsupported")
    for p in ast.predicates:
        if not ATTR_RE.match(p.attr or ""):
            problems.append(f"bad attribute name {p.attr!r}")
        elif p.attr in RESERVED_PREDICATE_ATTRS:
            problems.append(f"use regions/time_window instead of a predicate on {p.attr!r}")
        if p.op not in OPS:
            problems.append(f"unknown operator {p.op!r}")
        elif p.op == "CONTAINS":
            if not isinstance(p.value, str):
                problems.append(f"CONTAINS requires a string value on {p.attr!r}")
        elif p.op in NUMERIC_OPS and not _is_number(p.value):
            problems.append(f"operator {p.op} requires a numeric value on {p.attr!r}")
        if _is_number(p.value) and not math.isfinite(p.value):
            problems.append(f"non-finite value on {p.attr!r}")
        elif not isinstance(p.value, (str, int, float)) or isinstance(p.value, bool):
            problems.append(f"value on {p.attr!r} must be string or number")
    if ast.projection != ALL:
        if "*" in ast.projection:
            problems.append("'*' cannot be mixed with named projections")
        for name in ast.projection:
            if name != "*" and not ATTR_RE.match(name):
                problems.append(f"bad projection name {name!r}")
        if not ast.projection:
            problems.append("empty projection (use ALL)")
    if ast.limit is not None and (not isinstance(ast.limit, int) or ast.limit < 1):
        problems.append("limit >= 1")
    if ast.time_window is not None:
        start, end = ast.time_window
        if start is None and end is None:
            problems.append("time window needs at least one bound")
        if start is not None and end is not None and start > end:
            problems.append("time window start after end")
    return problems


def _region_key(r: GeoBounds) -> tuple[float, float, float, float]:
    return (r.north_west.lat, r.north_west.lon, r.south_east.lat, r.south_east.lon)


def _pred_key(p: Predicate) -> tuple[str, str, int, str]:
    return (p.attr, p.op, 0 if _is_number(p.value) else 1, str(p.value))


def canonicalize(ast: QueryAST) -> QueryAST:
    """Deterministic form: sorted + deduplicated regions, predicates, projection."""
    regions = tuple(sorted(dict.fromkeys(ast.regions), key=_region_key))
    predicates = tuple(sorted(dict.fromkeys(ast.predicates), key=_pred_key))
    if "*" in ast.projection:
        projection = ALL
    else:
        projection = tuple(sorted(set(ast.projection)))
    return replace(ast, regions=regions, predicates=predicates, projection=projection)
