"""VISUAL-JSON: the wire serialization of the query AST itself (schema v1).

Canonical bytes: sorted keys, no extra whitespace, optional keys omitted
when unset:

    {"limit":5,"preds":[{"attr":"type","op":"=","val":"cargo"}],
     "proj":["*"],"regions":[{"nw":[10,20],"se":[-10,40]}],"v":1}

`tw` carries the optional time window as [start, end] RFC-3339 strings
(null for an open end).
"""

from __future__ import annotations

import json

from surface_sync.geo import GeoBounds, GeoPoint
from surface_sync.timeutil import format_rfc3339, parse_rfc3339

from .ast import (
    ALL,
    OPS,
    Predicate,
    QueryAST,
    QuerySyntaxError,
    canonicalize,
    normalize_op,
)

VISUAL_VERSION = 1

_TOP_KEYS = {"v", "regions", "preds", "proj", "limit", "tw"}


def emit_visual(ast: QueryAST) -> str:
    """Canonical VISUAL-JSON text for an AST."""
    a = canonicalize(ast)
    doc: dict = {
        "v": VISUAL_VERSION,
        "regions": [
            {
                "nw": [r.north_west.lat, r.north_west.lon],
                "se": [r.south_east.lat, r.south_east.lon],
            }
            for r in a.regions
        ],
        "preds": [
            {"attr": p.attr, "op": p.op, "val": p.value} for p in a.predicates
        ],
        "proj": list(a.projection),
    }
    if a.limit is not None:
        doc["limit"] = a.limit
    if a.time_window is not None:
        start, end = a.time_window
        doc["tw"] = [
            format_rfc3339(start) if start is not None else None,
            format_rfc3339(end) if end is not None else None,
        ]
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))


def _geo_pair(value, path: str) -> GeoPoint:
    if not (isinstance(value, list) and len(value) == 2):
        raise QuerySyntaxError(f"{path} must be [lat, lon]")
    lat, lon = value
    if isinstance(lat, bool) or isinstance(lon, bool) or not all(
        isinstance(c, (int, float)) for c in value
    ):
        raise QuerySyntaxError(f"{path} must hold numbers")
    try:
        return GeoPoint(float(lat), float(lon))
    except ValueError as e:
        raise QuerySyntaxError(f"{path}: {e}") from None


def parse_visual(text: str) -> QueryAST:
    """Strict parse of VISUAL-JSON v1; unknown keys are rejected."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise QuerySyntaxError(f"bad JSON: {e.msg}", e.pos) from None
    if not isinstance(doc, dict):
        raise QuerySyntaxError("top level must be an object")
    unknown = set(doc) - _TOP_KEYS
    if unknown:
        raise QuerySyntaxError(f"unknown keys: {sorted(unknown)}")
    if doc.get("v") != VISUAL_VERSION:
        raise QuerySyntaxError(f"unsupported visual query version {doc.get('v')!r}")

    regions = []
    for i, r in enumerate(doc.get("regions", [])):
        if not isinstance(r, dict) or set(r) != {"nw", "se"}:
            raise QuerySyntaxError(f"regions[{i}] must have exactly nw and se")
        nw = _geo_pair(r["nw"], f"regions[{i}].nw")
        se = _geo_pair(r["se"], f"regions[{i}].se")
        try:
            regions.append(GeoBounds(nw, se))
        except ValueError as e:
            raise QuerySyntaxError(f"regions[{i}]: {e}") from None

    preds = []
    for i, p in enumerate(doc.get("preds", [])):
        if not isinstance(p, dict) or set(p) != {"attr", "op", "val"}:
            raise QuerySyntaxError(f"preds[{i}] must have exactly attr, op, val")
        op = normalize_op(p["op"]) if isinstance(p["op"], str) else p["op"]
        if op not in OPS:
            raise QuerySyntaxError(f"preds[{i}].op {p['op']!r} unknown")
        val = p["val"]
        if isinstance(val, bool) or not isinstance(val, (str, int, float)):
            raise QuerySyntaxError(f"preds[{i}].val must be string or number")
        if not isinstance(p["attr"], str):
            raise QuerySyntaxError(f"preds[{i}].attr must be a string")
        preds.append(Predicate(p["attr"], op, val))

    proj = doc.get("proj", ["*"])
    if not isinstance(proj, list) or not all(isinstance(n, str) for n in proj):
        raise QuerySyntaxError("proj must be a list of names")

    limit = doc.get("limit")
    if limit is not None and (isinstance(limit, bool) or not isinstance(limit, int)):
        raise QuerySyntaxError("limit must be an integer")

    window = None
    if "tw" in doc:
        tw = doc["tw"]
        if not (isinstance(tw, list) and len(tw) == 2):
            raise QuerySyntaxError("tw must be [start, end]")
        bounds = []
        for label, value in zip(("start", "end"), tw):
            if value is None:
                bounds.append(None)
                continue
            try:
                bounds.append(parse_rfc3339(value))
            except ValueError as e:
                raise QuerySyntaxError(f"tw {label}: {e}") from None
        window = (bounds[0], bounds[1])

    return canonicalize(
        QueryAST(
            regions=tuple(regions),
            predicates=tuple(preds),
            projection=tuple(proj) if proj != ["*"] else ALL,
            limit=limit,
            time_window=window,
        )
    )
