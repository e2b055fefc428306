"""Wire contract: JSON envelopes over websocket text frames.

Payload schemas are documented bit-exactly in docs/protocol.md; every
example frame there is a test vector. Encoding is canonical (fixed key
order, free-form maps sorted, compact separators) so equal envelopes give
identical bytes. Decoding is strict at the top level (unknown fields
rejected) and forward-compatible inside payloads (unknown fields ignored,
counted on `decode_warnings`).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any

from surface_sync.datastore import AssetRecord
from surface_sync.geo import GeoBounds, GeoPoint, ViewState
from surface_sync.query import DIALECTS, QueryText
from surface_sync.timeutil import format_rfc3339, parse_rfc3339

SUBPROTOCOL = "surface-sync.v1"
WS_PATH = "/ws"

ROLES = ("SHARED_DISPLAY", "AR_CLIENT", "EXTERNAL_DEVICE")
OBJECT_KINDS = ("VESSEL_MARKER", "ARC_CONNECTOR", "DETAIL_PANEL", "MENU")
INTERACTION_KINDS = ("GRAB", "RELEASE", "MENU_OPEN", "SELECT_REGION")
SCOPE_SHARED = "SHARED"
SCOPE_PRIVATE = "PRIVATE"

HEARTBEAT_INTERVAL_S = 10.0
HEARTBEAT_MISS_LIMIT = 3


class MalformedJson(ValueError):
    pass


class UnknownType(ValueError):
    def __init__(self, tag: str):
        self.tag = tag
        super().__init__(f"unknown message type {tag!r}")


class SchemaViolation(ValueError):
    def __init__(self, path: str, reason: str = "invalid"):
        self.path = path
        self.reason = reason
        super().__init__(f"{path}: {reason}")


class _DecodeWarnings:
    """Counts ignored unknown payload fields (forward compatibility)."""

    def __init__(self) -> None:
        self.count = 0
        self.last_path: str | None = None

    def bump(self, path: str) -> None:
        self.count += 1
        self.last_path = path


decode_warnings = _DecodeWarnings()


# -- payload dataclasses -------------------------------------------------------


@dataclass(frozen=True, slots=True)
class Hello:
    role: str
    name: str
    subscribe_view: bool = True


@dataclass(frozen=True, slots=True)
class CalibrationMeta:
    """QR placement the server publishes; clients combine it with the QR
    world pose they detect (or are scripted with) to calibrate."""

    qr_screen_px: tuple[float, float]
    qr_rendered_side_px: float
    qr_physical_side_m: float


@dataclass(frozen=True, slots=True)
class ARObjectMsg:
    object_id: str
    kind: str
    geo: GeoPoint | None
    screen_px: tuple[float, float] | None
    altitude_m: float
    scope: str
    owner: str | None
    version: int
    attrs: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if (self.geo is None) == (self.screen_px is None):
            raise ValueError("exactly one of geo/screen_px must be set")
        if self.kind not in OBJECT_KINDS:
            raise ValueError(f"unknown object kind {self.kind!r}")
        if self.scope not in (SCOPE_SHARED, SCOPE_PRIVATE):
            raise ValueError(f"unknown scope {self.scope!r}")
        if (self.owner is not None) != (self.scope == SCOPE_PRIVATE):
            raise ValueError("owner must be set exactly for PRIVATE scope")
        if self.version < 0:
            raise ValueError("version must be unsigned")


@dataclass(frozen=True, slots=True)
class Welcome:
    client_id: str
    view: ViewState
    snapshot: tuple[ARObjectMsg, ...]
    calibration: CalibrationMeta


@dataclass(frozen=True, slots=True)
class ViewUpdate:
    view: ViewState


@dataclass(frozen=True, slots=True)
class QuerySubmit:
    request_id: str
    query: QueryText
    spawn: bool = True


@dataclass(frozen=True, slots=True)
class QueryResult:
    request_id: str
    records: tuple[AssetRecord, ...]
    total: int


@dataclass(frozen=True, slots=True)
class ObjectSpawn:
    object: ARObjectMsg


@dataclass(frozen=True, slots=True)
class ObjectUpdate:
    object_id: str
    version: int
    fields: dict[str, Any]


@dataclass(frozen=True, slots=True)
class ObjectDespawn:
    object_id: str


@dataclass(frozen=True, slots=True)
class Interaction:
    kind: str
    target: str | None
    data: dict[str, Any] = field(default_factory=dict)


@dataclass(frozen=True, slots=True)
class ErrorMsg:
    code: str
    detail: str
    request_id: str | None = None


@dataclass(frozen=True, slots=True)
class Ping:
    pass


@dataclass(frozen=True, slots=True)
class Pong:
    pass


Payload = (
    Hello | Welcome | ViewUpdate | QuerySubmit | QueryResult | ObjectSpawn
    | ObjectUpdate | ObjectDespawn | Interaction | ErrorMsg | Ping | Pong
)

TYPE_BY_PAYLOAD = {
    Hello: "HELLO",
    Welcome: "WELCOME",
    ViewUpdate: "VIEW_UPDATE",
    QuerySubmit: "QUERY_SUBMIT",
    QueryResult: "QUERY_RESULT",
    ObjectSpawn: "OBJECT_SPAWN",
    ObjectUpdate: "OBJECT_UPDATE",
    ObjectDespawn: "OBJECT_DESPAWN",
    Interaction: "INTERACTION",
    ErrorMsg: "ERROR",
    Ping: "PING",
    Pong: "PONG",
}
MESSAGE_TYPES = tuple(TYPE_BY_PAYLOAD.values())


@dataclass(frozen=True, slots=True)
class Envelope:
    type: str
    session: str
    sender: str
    seq: int
    ts: int
    payload: Payload

    @classmethod
    def make(cls, payload: Payload, session: str, sender: str, seq: int, ts: int) -> "Envelope":
        return cls(TYPE_BY_PAYLOAD[type(payload)], session, sender, seq, ts, payload)


# -- sequence checking ---------------------------------------------------------


@dataclass(frozen=True, slots=True)
class SeqCheck:
    kind: str  # accept | duplicate | gap
    gap: int = 0


def check_sequence(last_seq: int, env: Envelope) -> SeqCheck:
    """accept iff seq == last+1; duplicate iff <= last; else gap(missing count)."""
    if env.seq == last_seq + 1:
        return SeqCheck("accept")
    if env.seq <= last_seq:
        return SeqCheck("duplicate")
    return SeqCheck("gap", env.seq - last_seq - 1)


# -- encoding ------------------------------------------------------------------


def _canon(value: Any) -> Any:
    """Sort free-form maps recursively so encoding is deterministic."""
    if isinstance(value, dict):
        return {k: _canon(value[k]) for k in sorted(value)}
    if isinstance(value, (list, tuple)):
        return [_canon(v) for v in value]
    return value


def geo_json(p: GeoPoint) -> dict:
    return {"lat": p.lat, "lon": p.lon}


def view_json(v: ViewState) -> dict:
    return {
        "bounds": {
            "north_west": geo_json(v.bounds.north_west),
            "south_east": geo_json(v.bounds.south_east),
        },
        "center": geo_json(v.center),
        "zoom": v.zoom,
        "orientation_deg": v.orientation_deg,
        "screen_w": v.screen_w,
        "screen_h": v.screen_h,
    }


def object_json(o: ARObjectMsg) -> dict:
    return {
        "object_id": o.object_id,
        "kind": o.kind,
        "geo": geo_json(o.geo) if o.geo is not None else None,
        "screen_px": list(o.screen_px) if o.screen_px is not None else None,
        "altitude_m": o.altitude_m,
        "scope": o.scope,
        "owner": o.owner,
        "version": o.version,
        "attrs": _canon(o.attrs),
    }


def record_json(r: AssetRecord) -> dict:
    return {
        "id": r.id,
        "lat": r.pos.lat,
        "lon": r.pos.lon,
        "ts": format_rfc3339(r.ts),
        "attrs": _canon(r.attrs),
    }


def calibration_json(c: CalibrationMeta) -> dict:
    return {
        "qr_screen_px": list(c.qr_screen_px),
        "qr_rendered_side_px": c.qr_rendered_side_px,
        "qr_physical_side_m": c.qr_physical_side_m,
    }


def payload_json(p: Payload) -> dict:
    if isinstance(p, Hello):
        return {"role": p.role, "name": p.name, "subscribe_view": p.subscribe_view}
    if isinstance(p, Welcome):
        return {
            "client_id": p.client_id,
            "view": view_json(p.view),
            "snapshot": [object_json(o) for o in p.snapshot],
            "calibration": calibration_json(p.calibration),
        }
    if isinstance(p, ViewUpdate):
        return view_json(p.view)
    if isinstance(p, QuerySubmit):
        return {
            "request_id": p.request_id,
            "dialect": p.query.dialect,
            "text": p.query.text,
            "spawn": p.spawn,
        }
    if isinstance(p, QueryResult):
        return {
            "request_id": p.request_id,
            "total": p.total,
            "records": [record_json(r) for r in p.records],
        }
    if isinstance(p, ObjectSpawn):
        return {"object": object_json(p.object)}
    if isinstance(p, ObjectUpdate):
        return {
            "object_id": p.object_id,
            "version": p.version,
            "fields": _canon(p.fields),
        }
    if isinstance(p, ObjectDespawn):
        return {"object_id": p.object_id}
    if isinstance(p, Interaction):
        return {"kind": p.kind, "target": p.target, "data": _canon(p.data)}
    if isinstance(p, ErrorMsg):
        return {"code": p.code, "detail": p.detail, "request_id": p.request_id}
    if isinstance(p, (Ping, Pong)):
        return {}
    raise TypeError(f"unknown payload {type(p).__name__}")  # pragma: no cover


def encode(env: Envelope) -> bytes:
    """Canonical UTF-8 JSON, one message per websocket text frame."""
    doc = {
        "type": env.type,
        "session": env.session,
        "sender": env.sender,
        "seq": env.seq,
        "ts": env.ts,
        "payload": payload_json(env.payload),
    }
    return json.dumps(doc, separators=(",", ":"), ensure_ascii=False).encode()


# -- decoding ------------------------------------------------------------------


_TOP_KEYS = ("type", "session", "sender", "seq", "ts", "payload")


def _want(doc: dict, key: str, kinds, path: str):
    if key not in doc:
        raise SchemaViolation(f"{path}.{key}", "missing")
    value = doc[key]
    if isinstance(value, bool) and bool not in (kinds if isinstance(kinds, tuple) else (kinds,)):
        raise SchemaViolation(f"{path}.{key}", "wrong type")
    if not isinstance(value, kinds):
        raise SchemaViolation(f"{path}.{key}", "wrong type")
    return value


def _number(doc: dict, key: str, path: str) -> float:
    value = _want(doc, key, (int, float), path)
    if not math.isfinite(value):
        raise SchemaViolation(f"{path}.{key}", "not finite")
    return float(value)


def _warn_unknown(doc: dict, known: tuple[str, ...], path: str) -> None:
    for key in doc:
        if key not in known:
            decode_warnings.bump(f"{path}.{key}")


def _geo_from(doc: Any, path: str) -> GeoPoint:
    if not isinstance(doc, dict):
        raise SchemaViolation(path, "object expected")
    lat = _number(doc, "lat", path)
    lon = _number(doc, "lon", path)
    if not -90.0 <= lat <= 90.0:
        raise SchemaViolation(f"{path}.lat", "outside [-90, 90]")
    _warn_unknown(doc, ("lat", "lon"), path)
    return GeoPoint(lat, lon)


def _view_from(doc: Any, path: str) -> ViewState:
    if not isinstance(doc, dict):
        raise SchemaViolation(path, "object expected")
    bounds_doc = _want(doc, "bounds", dict, path)
    nw = _geo_from(
        _want(bounds_doc, "north_west", dict, f"{path}.bounds"), f"{path}.bounds.north_west"
    )
    se = _geo_from(
        _want(bounds_doc, "south_east", dict, f"{path}.bounds"), f"{path}.bounds.south_east"
    )
    _warn_unknown(bounds_doc, ("north_west", "south_east"), f"{path}.bounds")
    center = _geo_from(_want(doc, "center", dict, path), f"{path}.center")
    zoom = _number(doc, "zoom", path)
    orientation = _number(doc, "orientation_deg", path)
    screen_w = _number(doc, "screen_w", path)
    screen_h = _number(doc, "screen_h", path)
    _warn_unknown(
        doc,
        ("bounds", "center", "zoom", "orientation_deg", "screen_w", "screen_h"),
        path,
    )
    try:
        bounds = GeoBounds(nw, se)
        view = ViewState(bounds, center, zoom, orientation, screen_w, screen_h)
    except ValueError as e:
        raise SchemaViolation(path, str(e)) from None
    if not view.is_consistent():
        raise SchemaViolation(f"{path}.bounds", "inconsistent with camera parameters")
    return view


def _px_from(value: Any, path: str) -> tuple[float, float]:
    if (
        not isinstance(value, list)
        or len(value) != 2
        or not all(isinstance(c, (int, float)) and not isinstance(c, bool) for c in value)
    ):
        raise SchemaViolation(path, "[x, y] expected")
    return (float(value[0]), float(value[1]))


def _object_from(doc: Any, path: str) -> ARObjectMsg:
    if not isinstance(doc, dict):
        raise SchemaViolation(path, "object expected")
    object_id = _want(doc, "object_id", str, path)
    kind = _want(doc, "kind", str, path)
    if kind not in OBJECT_KINDS:
        raise SchemaViolation(f"{path}.kind", f"unknown kind {kind!r}")
    geo_doc = doc.get("geo")
    geo = _geo_from(geo_doc, f"{path}.geo") if geo_doc is not None else None
    px_doc = doc.get("screen_px")
    screen_px = _px_from(px_doc, f"{path}.screen_px") if px_doc is not None else None
    if (geo is None) == (screen_px is None):
        raise SchemaViolation(path, "exactly one of geo/screen_px must be set")
    altitude = _number(doc, "altitude_m", path)
    scope = _want(doc, "scope", str, path)
    if scope not in (SCOPE_SHARED, SCOPE_PRIVATE):
        raise SchemaViolation(f"{path}.scope", f"unknown scope {scope!r}")
    owner = doc.get("owner")
    if owner is not None and not isinstance(owner, str):
        raise SchemaViolation(f"{path}.owner", "string or null expected")
    version = _want(doc, "version", int, path)
    if version < 0:
        raise SchemaViolation(f"{path}.version", "unsigned expected")
    attrs = doc.get("attrs", {})
    if not isinstance(attrs, dict):
        raise SchemaViolation(f"{path}.attrs", "object expected")
    _warn_unknown(
        doc,
        ("object_id", "kind", "geo", "screen_px", "altitude_m", "scope", "owner", "version", "attrs"),
        path,
    )
    try:
        return ARObjectMsg(object_id, kind, geo, screen_px, altitude, scope, owner, version, attrs)
    except ValueError as e:
        raise SchemaViolation(path, str(e)) from None


def _record_from(doc: Any, path: str) -> AssetRecord:
    if not isinstance(doc, dict):
        raise SchemaViolation(path, "object expected")
    record_id = _want(doc, "id", str, path)
    pos = _geo_from({"lat": doc.get("lat"), "lon": doc.get("lon")}, path)
    ts_text = _want(doc, "ts", str, path)
    try:
        ts = parse_rfc3339(ts_text)
    except ValueError as e:
        raise SchemaViolation(f"{path}.ts", str(e)) from None
    attrs = doc.get("attrs", {})
    if not isinstance(attrs, dict):
        raise SchemaViolation(f"{path}.attrs", "object expected")
    _warn_unknown(doc, ("id", "lat", "lon", "ts", "attrs"), path)
    return AssetRecord(record_id, pos, ts, attrs)


def _calibration_from(doc: Any, path: str) -> CalibrationMeta:
    if not isinstance(doc, dict):
        raise SchemaViolation(path, "object expected")
    px = _px_from(_want(doc, "qr_screen_px", list, path), f"{path}.qr_screen_px")
    side_px = _number(doc, "qr_rendered_side_px", path)
    side_m = _number(doc, "qr_physical_side_m", path)
    if side_px <= 0 or side_m <= 0:
        raise SchemaViolation(path, "QR side lengths must be positive")
    _warn_unknown(
        doc, ("qr_screen_px", "qr_rendered_side_px", "qr_physical_side_m"), path
    )
    return CalibrationMeta(px, side_px, side_m)


def _decode_hello(doc: dict, path: str) -> Hello:
    role = _want(doc, "role", str, path)
    if role not in ROLES:
        raise SchemaViolation(f"{path}.role", f"unknown role {role!r}")
    name = _want(doc, "name", str, path)
    subscribe = doc.get("subscribe_view", True)
    if not isinstance(subscribe, bool):
        raise SchemaViolation(f"{path}.subscribe_view", "bool expected")
    _warn_unknown(doc, ("role", "name", "subscribe_view"), path)
    return Hello(role, name, subscribe)


def _decode_welcome(doc: dict, path: str) -> Welcome:
    client_id = _want(doc, "client_id", str, path)
    view = _view_from(_want(doc, "view", dict, path), f"{path}.view")
    snapshot_doc = _want(doc, "snapshot", list, path)
    snapshot = tuple(
        _object_from(o, f"{path}.snapshot[{i}]") for i, o in enumerate(snapshot_doc)
    )
    calibration = _calibration_from(_want(doc, "calibration", dict, path), f"{path}.calibration")
    _warn_unknown(doc, ("client_id", "view", "snapshot", "calibration"), path)
    return Welcome(client_id, view, snapshot, calibration)


def _decode_query_submit(doc: dict, path: str) -> QuerySubmit:
    request_id = _want(doc, "request_id", str, path)
    dialect = _want(doc, "dialect", str, path)
    if dialect not in DIALECTS:
        raise SchemaViolation(f"{path}.dialect", f"unknown dialect {dialect!r}")
    text = _want(doc, "text", str, path)
    if not text:
        raise SchemaViolation(f"{path}.text", "non-empty string expected")
    spawn = doc.get("spawn", True)
    if not isinstance(spawn, bool):
        raise SchemaViolation(f"{path}.spawn", "bool expected")
    _warn_unknown(doc, ("request_id", "dialect", "text", "spawn"), path)
    return QuerySubmit(request_id, QueryText(dialect, text), spawn)


def _decode_query_result(doc: dict, path: str) -> QueryResult:
    request_id = _want(doc, "request_id", str, path)
    total = _want(doc, "total", int, path)
    records_doc = _want(doc, "records", list, path)
    records = tuple(
        _record_from(r, f"{path}.records[{i}]") for i, r in enumerate(records_doc)
    )
    if total < len(records):
        raise SchemaViolation(f"{path}.total", "total < record count")
    _warn_unknown(doc, ("request_id", "total", "records"), path)
    return QueryResult(request_id, records, total)


def _decode_interaction(doc: dict, path: str) -> Interaction:
    kind = _want(doc, "kind", str, path)
    if kind not in INTERACTION_KINDS:
        raise SchemaViolation(f"{path}.kind", f"unknown kind {kind!r}")
    target = doc.get("target")
    if target is not None and not isinstance(target, str):
        raise SchemaViolation(f"{path}.target", "string or null expected")
    data = doc.get("data", {})
    if not isinstance(data, dict):
        raise SchemaViolation(f"{path}.data", "object expected")
    _warn_unknown(doc, ("kind", "target", "data"), path)
    return Interaction(kind, target, data)


def _decode_error(doc: dict, path: str) -> ErrorMsg:
    code = _want(doc, "code", str, path)
    detail = _want(doc, "detail", str, path)
    request_id = doc.get("request_id")
    if request_id is not None and not isinstance(request_id, str):
        raise SchemaViolation(f"{path}.request_id", "string or null expected")
    _warn_unknown(doc, ("code", "detail", "request_id"), path)
    return ErrorMsg(code, detail, request_id)


def _decode_object_update(doc: dict, path: str) -> ObjectUpdate:
    object_id = _want(doc, "object_id", str, path)
    version = _want(doc, "version", int, path)
    if version < 0:
        raise SchemaViolation(f"{path}.version", "unsigned expected")
    fields = _want(doc, "fields", dict, path)
    allowed = {"geo", "screen_px", "altitude_m", "attrs"}
    unknown = set(fields) - allowed
    if unknown:
        raise SchemaViolation(f"{path}.fields", f"unknown fields {sorted(unknown)}")
    if "geo" in fields and fields["geo"] is not None:
        _geo_from(fields["geo"], f"{path}.fields.geo")
    if "screen_px" in fields and fields["screen_px"] is not None:
        _px_from(fields["screen_px"], f"{path}.fields.screen_px")
    _warn_unknown(doc, ("object_id", "version", "fields"), path)
    return ObjectUpdate(object_id, version, fields)


def _decode_empty(cls):
    def decoder(doc: dict, path: str):
        _warn_unknown(doc, (), path)
        return cls()

    return decoder


_DECODERS = {
    "HELLO": _decode_hello,
    "WELCOME": _decode_welcome,
    "VIEW_UPDATE": lambda doc, path: ViewUpdate(_view_from(doc, path)),
    "QUERY_SUBMIT": _decode_query_submit,
    "QUERY_RESULT": _decode_query_result,
    "OBJECT_SPAWN": lambda doc, path: ObjectSpawn(
        _object_from(_want(doc, "object", dict, path), f"{path}.object")
    ),
    "OBJECT_UPDATE": _decode_object_update,
    "OBJECT_DESPAWN": lambda doc, path: ObjectDespawn(
        _want(doc, "object_id", str, path)
    ),
    "INTERACTION": _decode_interaction,
    "ERROR": _decode_error,
    "PING": _decode_empty(Ping),
    "PONG": _decode_empty(Pong),
}


def decode(data: bytes | str) -> Envelope:
    """Strict decode; raises MalformedJson / UnknownType / SchemaViolation."""
    if isinstance(data, (bytes, bytearray)):
        try:
            data = bytes(data).decode("utf-8")
        except UnicodeDecodeError as e:
            raise MalformedJson(f"invalid UTF-8: {e}") from None
    try:
        doc = json.loads(data)
    except (json.JSONDecodeError, RecursionError) as e:
        raise MalformedJson(str(e)) from None
    if not isinstance(doc, dict):
        raise MalformedJson("top level must be an object")
    for key in doc:
        if key not in _TOP_KEYS:
            raise SchemaViolation(key, "unknown top-level field")
    tag = _want(doc, "type", str, "envelope")
    if tag not in _DECODERS:
        raise UnknownType(tag)
    session = _want(doc, "session", str, "envelope")
    sender = _want(doc, "sender", str, "envelope")
    seq = _want(doc, "seq", int, "envelope")
    if seq < 0:
        raise SchemaViolation("envelope.seq", "unsigned expected")
    ts = _want(doc, "ts", int, "envelope")
    payload_doc = _want(doc, "payload", dict, "envelope")
    payload = _DECODERS[tag](payload_doc, "payload")
    return Envelope(tag, session, sender, seq, ts, payload)
