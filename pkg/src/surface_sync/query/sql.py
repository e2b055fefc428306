"""SQL emission (emit-only; there is deliberately no SQL parser).

Targets the `assets` table the datastore oracle materializes: columns id,
lat, lon, ts (fixed-width RFC-3339 text) plus one column per attribute.
CONTAINS becomes INSTR(..) > 0: exact, case-sensitive substring match
(LIKE is case-insensitive in common engines).
"""

from __future__ import annotations

from surface_sync.geo import GeoBounds
from surface_sync.timeutil import format_rfc3339_full

from .ast import ALL, Predicate, QueryAST, canonicalize

_OP_SQL = {"=": "=", "!=": "<>", "<": "<", "<=": "<=", ">": ">", ">=": ">="}


def _sql_str(s: str) -> str:
    return "'" + s.replace("'", "''") + "'"


def _sql_num(v: int | float) -> str:
    if isinstance(v, int):
        return str(v)
    return str(int(v)) if v.is_integer() else repr(v)


def _sql_value(v: int | float | str) -> str:
    return _sql_str(v) if isinstance(v, str) else _sql_num(v)


def _region_sql(r: GeoBounds) -> str:
    return (
        f"lat BETWEEN {_sql_num(r.south_east.lat)} AND {_sql_num(r.north_west.lat)}"
        f" AND lon BETWEEN {_sql_num(r.north_west.lon)} AND {_sql_num(r.south_east.lon)}"
    )


def _predicate_sql(p: Predicate) -> str:
    if p.op == "CONTAINS":
        return f"INSTR({p.attr}, {_sql_str(str(p.value))}) > 0"
    return f"{p.attr} {_OP_SQL[p.op]} {_sql_value(p.value)}"


def emit_sql(ast: QueryAST) -> str:
    """Deterministic SELECT over the assets table; id always projected."""
    a = canonicalize(ast)
    if a.projection == ALL:
        cols = "*"
    else:
        names = ["id"] + [n for n in a.projection if n != "id"]
        cols = ", ".join(names)
    clauses: list[str] = []
    if len(a.regions) == 1:
        clauses.append(f"({_region_sql(a.regions[0])})")
    elif a.regions:
        clauses.append("(" + " OR ".join(f"({_region_sql(r)})" for r in a.regions) + ")")
    if a.time_window is not None:
        start, end = a.time_window
        if start is not None:
            clauses.append(f"ts >= {_sql_str(format_rfc3339_full(start))}")
        if end is not None:
            clauses.append(f"ts <= {_sql_str(format_rfc3339_full(end))}")
    clauses.extend(_predicate_sql(p) for p in a.predicates)
    sql = f"SELECT {cols} FROM assets"
    if clauses:
        sql += " WHERE " + " AND ".join(clauses)
    if a.limit is not None:
        sql += f" LIMIT {a.limit}"
    return sql
