"""Authoritative session state machine (no sockets here).

All events - joins, envelopes, disconnects, heartbeat ticks, TUIO gestures
 -  are fed in strictly serialized order and produce a list of actions
(frames to send, connections to close). That single total order per
session is what makes convergence checkable and traces replayable.

Visibility: SHARED objects go to every client, PRIVATE objects only to
their owner; no frame containing a PRIVATE object ever leaves on another
connection. Geo-anchored objects are stored once with their geographic
position; clients recompute AR placement locally on every view change, so
a pan never re-broadcasts the object set.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable

from surface_sync import protocol
from surface_sync.datastore import Store, UnknownAttribute, evaluate
from surface_sync.geo import GeoBounds, GeoPoint, ViewState, geo_to_screen
from surface_sync.protocol import (
    ARObjectMsg,
    CalibrationMeta,
    Envelope,
    ErrorMsg,
    Hello,
    Interaction,
    ObjectDespawn,
    ObjectSpawn,
    ObjectUpdate,
    Ping,
    Pong,
    QueryResult,
    QuerySubmit,
    SCOPE_PRIVATE,
    SCOPE_SHARED,
    ViewUpdate,
    Welcome,
    check_sequence,
)
from surface_sync.query import QuerySyntaxError, UnsupportedDialect, UnsupportedFeature
from surface_sync.query import parse_query, validate as validate_ast
from surface_sync.tuio import RegionSelect

SERVER_SENDER = "server"

# inbound sequence gaps: view state is absolute (last-writer-wins), so SD
# view updates survive gaps; object-mutating ops must not be applied out of
# order, so they are rejected.
_GAP_TOLERANT = ("HELLO", "VIEW_UPDATE", "PING", "PONG")


@dataclass(frozen=True, slots=True)
class Send:
    conn_id: str
    envelope: Envelope


@dataclass(frozen=True, slots=True)
class Close:
    conn_id: str
    reason: str


Action = Send | Close


@dataclass(slots=True)
class ConnState:
    conn_id: str
    client_id: str | None = None
    role: str | None = None
    name: str = ""
    subscribe_view: bool = True
    last_seq_in: int = 0
    out_seq: int = 0
    pings_outstanding: int = 0

    @property
    def joined(self) -> bool:
        return self.client_id is not None


class SessionCore:
    """One collaboration session: clients, authoritative view, AR objects."""

    def __init__(
        self,
        session_id: str,
        store: Store,
        view: ViewState,
        calibration_meta: CalibrationMeta,
        arc_height_m: float = 0.25,
        panel_altitude_m: float = 0.15,
        session_cap: int = 32,
        heartbeat_miss_limit: int = protocol.HEARTBEAT_MISS_LIMIT,
        log: Callable[[dict], None] | None = None,
    ):
        self.session_id = session_id
        self.store = store
        self.view = view
        self.calibration_meta = calibration_meta
        self.arc_height_m = arc_height_m
        self.panel_altitude_m = panel_altitude_m
        self.session_cap = session_cap
        self.heartbeat_miss_limit = heartbeat_miss_limit
        self.log = log or (lambda record: None)
        self.conns: dict[str, ConnState] = {}
        self.objects: dict[str, ARObjectMsg] = {}
        self.result_layers: dict[str, dict[str, str]] = {}  # client -> record id -> object id
        self._version_floor: dict[str, int] = {}  # survives despawn: strict monotonicity
        self._next_client = 0
        self._next_arc = 0
        self._ts = 0
        self._sd_conn: str | None = None
        self._last_view_seq = 0

    # -- plumbing ---------------------------------------------------------

    def _log(self, event: str, conn: ConnState | None = None, **extra: Any) -> None:
        record = {"event": event, "session": self.session_id}
        if conn is not None:
            record["client"] = conn.client_id or conn.conn_id
        record.update(extra)
        self.log(record)

    def _send(self, conn: ConnState, payload) -> Send:
        conn.out_seq += 1
        return Send(
            conn.conn_id,
            Envelope.make(payload, self.session_id, SERVER_SENDER, conn.out_seq, self._ts),
        )

    def _error(self, conn: ConnState, code: str, detail: str, request_id: str | None = None) -> Send:
        self._log("error", conn, code=code, detail=detail)
        return self._send(conn, ErrorMsg(code, detail, request_id))

    def _broadcast(self, payload, exclude: str | None = None, view_related: bool = False) -> list[Action]:
        out: list[Action] = []
        for conn in self.conns.values():
            if not conn.joined or conn.conn_id == exclude:
                continue
            if view_related and not conn.subscribe_view:
                continue
            out.append(self._send(conn, payload))
        return out

    def _next_version(self, object_id: str) -> int:
        version = self._version_floor.get(object_id, 0) + 1
        self._version_floor[object_id] = version
        return version

    def joined_clients(self) -> list[ConnState]:
        return [c for c in self.conns.values() if c.joined]

    # -- lifecycle events --------------------------------------------------

    def connect(self, conn_id: str) -> list[Action]:
        self.conns[conn_id] = ConnState(conn_id)
        self._log("connect", self.conns[conn_id])
        return []

    def disconnect(self, conn_id: str) -> list[Action]:
        conn = self.conns.pop(conn_id, None)
        if conn is None:
            return []
        self._ts += 1
        actions: list[Action] = []
        if conn.conn_id == self._sd_conn:
            # a later SD starts its own seq numbering, so view LWW resets
            self._sd_conn = None
            self._last_view_seq = 0
        if conn.joined:
            self._log("disconnect", conn)
            # private objects of a departed client are despawned; shared persist
            for object_id in sorted(
                oid
                for oid, obj in self.objects.items()
                if obj.scope == SCOPE_PRIVATE and obj.owner == conn.client_id
            ):
                del self.objects[object_id]
                self._log("despawn_private", conn, object_id=object_id)
            # anything the client held gets released for the survivors
            for object_id in sorted(self.objects):
                obj = self.objects[object_id]
                if obj.attrs.get("held_by") == conn.client_id:
                    actions.extend(self._object_update(obj, {"attrs": {"held_by": None}}))
        return actions

    def heartbeat_tick(self, conn_id: str) -> list[Action]:
        conn = self.conns.get(conn_id)
        if conn is None:
            return []
        self._ts += 1
        if conn.pings_outstanding >= self.heartbeat_miss_limit:
            self._log("heartbeat_lost", conn, missed=conn.pings_outstanding)
            return [Close(conn_id, "heartbeat: missed PONGs")]
        conn.pings_outstanding += 1
        return [self._send(conn, Ping())]

    def bad_frame(self, conn_id: str, code: str, detail: str) -> list[Action]:
        conn = self.conns.get(conn_id)
        if conn is None:
            return []
        self._ts += 1
        return [self._error(conn, code, detail)]

    # -- envelope dispatch --------------------------------------------------

    def receive(self, conn_id: str, env: Envelope) -> list[Action]:
        conn = self.conns.get(conn_id)
        if conn is None:
            return []
        self._ts += 1
        check = check_sequence(conn.last_seq_in, env)
        if check.kind == "duplicate":
            self._log("seq_duplicate", conn, seq=env.seq, type=env.type)
            return []
        if check.kind == "gap":
            self._log("seq_gap", conn, seq=env.seq, missing=check.gap, type=env.type)
            conn.last_seq_in = env.seq
            if env.type not in _GAP_TOLERANT:
                return [
                    self._error(
                        conn,
                        "sequence_gap",
                        f"{env.type} rejected: {check.gap} frame(s) missing before seq {env.seq}",
                    )
                ]
        else:
            conn.last_seq_in = env.seq
        if env.session not in ("", self.session_id):
            return [self._error(conn, "wrong_session", f"session {env.session!r} is not {self.session_id!r}")]
        if conn.joined and env.sender != conn.client_id:
            return [self._error(conn, "bad_sender", f"sender {env.sender!r} is not {conn.client_id!r}")]

        payload = env.payload
        if isinstance(payload, Hello):
            return self._on_hello(conn, payload)
        if isinstance(payload, Ping):
            return [self._send(conn, Pong())]
        if isinstance(payload, Pong):
            conn.pings_outstanding = 0
            return []
        if not conn.joined:
            return [self._error(conn, "not_joined", "HELLO required before anything else")]
        if isinstance(payload, ViewUpdate):
            return self._on_view_update(conn, env, payload)
        if isinstance(payload, QuerySubmit):
            return self._on_query(conn, payload)
        if isinstance(payload, Interaction):
            return self._on_interaction(conn, payload)
        return [
            self._error(
                conn, "forbidden_op", f"{env.type} is server-emitted; clients may not send it"
            )
        ]

    # -- join ----------------------------------------------------------------

    def _on_hello(self, conn: ConnState, hello: Hello) -> list[Action]:
        if conn.joined:
            return [self._error(conn, "already_joined", "duplicate HELLO")]
        if hello.role == "SHARED_DISPLAY" and self._sd_conn is not None:
            actions = [
                self._error(conn, "role_conflict", "a SHARED_DISPLAY is already connected"),
                Close(conn.conn_id, "role_conflict"),
            ]
            return actions
        if len(self.joined_clients()) >= self.session_cap:
            return [
                self._error(conn, "session_full", f"cap {self.session_cap} reached"),
                Close(conn.conn_id, "session_full"),
            ]
        self._next_client += 1
        conn.client_id = f"c{self._next_client}"
        conn.role = hello.role
        conn.name = hello.name
        conn.subscribe_view = hello.subscribe_view
        if hello.role == "SHARED_DISPLAY":
            self._sd_conn = conn.conn_id
        self._log("join", conn, role=hello.role, name=hello.name)
        return [
            self._send(
                conn,
                Welcome(
                    conn.client_id,
                    self.view,
                    self.snapshot_for(conn.client_id),
                    self.calibration_meta,
                ),
            )
        ]

    def snapshot_for(self, client_id: str) -> tuple[ARObjectMsg, ...]:
        """All SHARED objects plus the client's own PRIVATE ones, id-sorted."""
        return tuple(
            self.objects[oid]
            for oid in sorted(self.objects)
            if self.objects[oid].scope == SCOPE_SHARED
            or self.objects[oid].owner == client_id
        )

    # -- view -----------------------------------------------------------------

    def _on_view_update(self, conn: ConnState, env: Envelope, update: ViewUpdate) -> list[Action]:
        if conn.role != "SHARED_DISPLAY":
            return [self._error(conn, "forbidden_role", "only the SHARED_DISPLAY updates the view")]
        if env.seq <= self._last_view_seq:
            self._log("view_stale", conn, seq=env.seq)
            return []
        self._last_view_seq = env.seq
        self.view = update.view
        self._log("view_update", conn, seq=env.seq, zoom=update.view.zoom)
        # geo-anchored objects are deliberately not re-sent: replicas
        # recompute placements from the new view locally
        return self._broadcast(ViewUpdate(self.view), exclude=conn.conn_id, view_related=True)

    def apply_tuio_view(self, view: ViewState) -> list[Action]:
        """Authoritative view change from the table's own touch surface."""
        self._ts += 1
        self.view = view
        self._log("tuio_view", None, zoom=view.zoom)
        return self._broadcast(ViewUpdate(self.view), view_related=True)

    # -- query ------------------------------------------------------------------

    def _on_query(self, conn: ConnState, submit: QuerySubmit) -> list[Action]:
        try:
            ast = parse_query(submit.query)
        except UnsupportedDialect as e:
            return [self._error(conn, "unsupported_dialect", str(e), submit.request_id)]
        except (QuerySyntaxError, UnsupportedFeature) as e:
            return [self._error(conn, "invalid_query", str(e), submit.request_id)]
        problems = validate_ast(ast)
        if problems:
            return [self._error(conn, "invalid_query", "; ".join(problems), submit.request_id)]
        try:
            result = evaluate(self.store, ast)
        except UnknownAttribute as e:
            return [self._error(conn, "unknown_attribute", str(e), submit.request_id)]
        self._log("query", conn, request_id=submit.request_id, total=result.total)
        actions = [
            self._send(conn, QueryResult(submit.request_id, result.records, result.total))
        ]
        if submit.spawn:
            actions.extend(self._refresh_result_layer(conn, result.records))
        return actions

    def _refresh_result_layer(self, conn: ConnState, records) -> list[Action]:
        """One active result layer per requester, keyed by record id."""
        client_id = conn.client_id or ""
        layer = self.result_layers.setdefault(client_id, {})
        by_record = {r.id: r for r in records}
        actions: list[Action] = []
        for record_id in sorted(set(layer) - set(by_record)):
            object_id = layer.pop(record_id)
            self.objects.pop(object_id, None)
            actions.extend(self._broadcast(ObjectDespawn(object_id)))
            self._log("marker_despawn", conn, object_id=object_id)
        for record_id in sorted(by_record):
            record = by_record[record_id]
            attrs = {
                "record_id": record.id,
                "requester": client_id,
                **record.attrs,
            }
            if record_id in layer:
                # refresh data fields; grab state (held_by) is untouched
                obj = self.objects[layer[record_id]]
                actions.extend(
                    self._object_update(obj, {"geo": protocol.geo_json(record.pos), "attrs": attrs})
                )
            else:
                object_id = f"marker:{client_id}:{record_id}"
                layer[record_id] = object_id
                obj = ARObjectMsg(
                    object_id,
                    "VESSEL_MARKER",
                    record.pos,
                    None,
                    0.0,
                    SCOPE_SHARED,
                    None,
                    self._next_version(object_id),
                    attrs,
                )
                self.objects[object_id] = obj
                actions.extend(self._broadcast(ObjectSpawn(obj)))
                self._log("marker_spawn", conn, object_id=object_id)
        return actions

    # -- object mutation helpers -------------------------------------------------

    def _object_update(self, obj: ARObjectMsg, fields: dict) -> list[Action]:
        version = self._next_version(obj.object_id)
        geo = obj.geo
        screen_px = obj.screen_px
        if "geo" in fields and fields["geo"] is not None:
            geo = GeoPoint(fields["geo"]["lat"], fields["geo"]["lon"])
            screen_px = None
        if "screen_px" in fields and fields["screen_px"] is not None:
            screen_px = (float(fields["screen_px"][0]), float(fields["screen_px"][1]))
            geo = None
        attrs = dict(obj.attrs)
        if "attrs" in fields:
            attrs.update(fields["attrs"])
        updated = ARObjectMsg(
            obj.object_id,
            obj.kind,
            geo,
            screen_px,
            fields.get("altitude_m", obj.altitude_m),
            obj.scope,
            obj.owner,
            version,
            attrs,
        )
        self.objects[obj.object_id] = updated
        update = ObjectUpdate(obj.object_id, version, fields)
        if updated.scope == SCOPE_PRIVATE:
            owner_conn = next(
                (c for c in self.conns.values() if c.client_id == updated.owner), None
            )
            return [self._send(owner_conn, update)] if owner_conn else []
        return self._broadcast(update)

    # -- interactions ---------------------------------------------------------------

    def _on_interaction(self, conn: ConnState, act: Interaction) -> list[Action]:
        if act.kind == "MENU_OPEN":
            return self._on_menu_open(conn, act)
        if act.kind == "GRAB":
            return self._on_grab(conn, act)
        if act.kind == "RELEASE":
            return self._on_release(conn, act)
        return self._on_select_region(conn, act)

    def _on_menu_open(self, conn: ConnState, act: Interaction) -> list[Action]:
        client_id = conn.client_id or ""
        px = act.data.get("screen_px", [0.0, 0.0])
        if (
            not isinstance(px, list)
            or len(px) != 2
            or not all(isinstance(c, (int, float)) and not isinstance(c, bool) for c in px)
        ):
            return [self._error(conn, "invalid_interaction", "MENU_OPEN data.screen_px must be [x, y]")]
        object_id = f"menu:{client_id}"
        existing = self.objects.get(object_id)
        self._log("menu_open", conn, object_id=object_id)
        if existing is not None:
            return self._object_update(existing, {"screen_px": list(px), "attrs": {}})
        obj = ARObjectMsg(
            object_id,
            "MENU",
            None,
            (float(px[0]), float(px[1])),
            0.0,
            SCOPE_PRIVATE,
            client_id,
            self._next_version(object_id),
            {"owner_name": conn.name},
        )
        self.objects[object_id] = obj
        # private: delivered to the owner only, never broadcast
        return [self._send(conn, ObjectSpawn(obj))]

    def _on_grab(self, conn: ConnState, act: Interaction) -> list[Action]:
        client_id = conn.client_id or ""
        target = act.target or ""
        marker = self.objects.get(target)
        if marker is None or marker.kind != "VESSEL_MARKER":
            return [self._error(conn, "unknown_target", f"no vessel marker {target!r}")]
        if marker.attrs.get("held_by"):
            return [
                self._error(
                    conn, "already_held", f"{target} is held by {marker.attrs['held_by']}"
                )
            ]
        self._log("grab", conn, object_id=target)
        actions = self._object_update(marker, {"attrs": {"held_by": client_id}})
        # the second interaction's result is shared with every client
        panel_id = f"panel:{target}"
        existing = self.objects.get(panel_id)
        if existing is not None:
            actions.extend(self._object_update(existing, {"attrs": {"holder": client_id}}))
            return actions
        marker = self.objects[target]
        panel = ARObjectMsg(
            panel_id,
            "DETAIL_PANEL",
            marker.geo,
            None,
            marker.altitude_m + self.panel_altitude_m,
            SCOPE_SHARED,
            None,
            self._next_version(panel_id),
            {
                "target": target,
                "holder": client_id,
                "record_id": marker.attrs.get("record_id"),
                "vessel": {
                    k: v
                    for k, v in marker.attrs.items()
                    if k not in ("requester", "held_by", "record_id")
                },
            },
        )
        self.objects[panel_id] = panel
        actions.extend(self._broadcast(ObjectSpawn(panel)))
        return actions

    def _on_release(self, conn: ConnState, act: Interaction) -> list[Action]:
        client_id = conn.client_id or ""
        target = act.target or ""
        marker = self.objects.get(target)
        if marker is None:
            return [self._error(conn, "unknown_target", f"no object {target!r}")]
        if marker.attrs.get("held_by") != client_id:
            return [self._error(conn, "not_holding", f"{target} is not held by you")]
        self._log("release", conn, object_id=target)
        return self._object_update(marker, {"attrs": {"held_by": None}})

    def _on_select_region(self, conn: ConnState, act: Interaction) -> list[Action]:
        try:
            region_doc = act.data["region"]
            nw = region_doc["nw"]
            se = region_doc["se"]
            region = GeoBounds(GeoPoint(nw[0], nw[1]), GeoPoint(se[0], se[1]))
            widget = act.data.get("widget_px", [0.0, 0.0])
            widget_px = (float(widget[0]), float(widget[1]))
        except (KeyError, TypeError, IndexError, ValueError) as e:
            return [self._error(conn, "invalid_region", f"bad SELECT_REGION data: {e}")]
        self._log("select_region", conn)
        actions = self.spawn_arc_connector(region, widget_px)
        if self._sd_conn is not None and self._sd_conn != conn.conn_id:
            sd = self.conns[self._sd_conn]
            actions.append(
                self._send(
                    sd,
                    Interaction(
                        "SELECT_REGION",
                        None,
                        {
                            "region": {"nw": [nw[0], nw[1]], "se": [se[0], se[1]]},
                            "widget_px": list(widget_px),
                            "from": conn.client_id,
                        },
                    ),
                )
            )
        return actions

    def spawn_arc_connector(self, region: GeoBounds, widget_px: tuple[float, float]) -> list[Action]:
        """Quadratic Bezier from the region centroid to its builder widget.

        Endpoints are stored in screen pixels so clients re-resolve both
        after view changes; the apex is the midpoint lifted along the table
        normal by the configured arc height.
        """
        p0 = geo_to_screen(self.view, region.center())
        p1 = ((p0[0] + widget_px[0]) / 2.0, (p0[1] + widget_px[1]) / 2.0)
        self._next_arc += 1
        object_id = f"arc:{self._next_arc}"
        obj = ARObjectMsg(
            object_id,
            "ARC_CONNECTOR",
            None,
            p0,
            0.0,
            SCOPE_SHARED,
            None,
            self._next_version(object_id),
            {
                "p0_px": [p0[0], p0[1]],
                "p1_px": [p1[0], p1[1]],
                "p2_px": [widget_px[0], widget_px[1]],
                "lift_m": self.arc_height_m,
                "region": {
                    "nw": [region.north_west.lat, region.north_west.lon],
                    "se": [region.south_east.lat, region.south_east.lon],
                },
            },
        )
        self.objects[object_id] = obj
        self._log("arc_spawn", None, object_id=object_id)
        return self._broadcast(ObjectSpawn(obj))

    def apply_tuio_region(self, select: RegionSelect) -> list[Action]:
        """Tangible placement on the table: arc + forward to the SD."""
        self._ts += 1
        actions = self.spawn_arc_connector(select.region, select.screen_px)
        if self._sd_conn is not None:
            sd = self.conns[self._sd_conn]
            region = select.region
            actions.append(
                self._send(
                    sd,
                    Interaction(
                        "SELECT_REGION",
                        None,
                        {
                            "region": {
                                "nw": [region.north_west.lat, region.north_west.lon],
                                "se": [region.south_east.lat, region.south_east.lon],
                            },
                            "widget_px": list(select.screen_px),
                            "from": "tuio",
                        },
                    ),
                )
            )
        return actions

    # -- dump -------------------------------------------------------------------

    def dump(self) -> dict:
        """Canonical session state for the consistency checker."""
        return {
            "v": 1,
            "session": self.session_id,
            "view": protocol.view_json(self.view),
            "objects": [
                protocol.object_json(self.objects[oid]) for oid in sorted(self.objects)
            ],
            "result_layers": {
                client: sorted(layer) for client, layer in sorted(self.result_layers.items()) if layer
            },
            "clients": sorted(
                (
                    {"client_id": c.client_id, "role": c.role, "name": c.name}
                    for c in self.joined_clients()
                ),
                key=lambda c: c["client_id"] or "",
            ),
        }
