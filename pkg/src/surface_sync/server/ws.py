"""Transport around the session core: websockets, HTTP helpers, TUIO/UDP.

Every connection's reader forwards envelopes onto one session queue; a
single loop consumes it, so session state sees a total order of events.
Outbound frames go through bounded per-client queues (slow client policy:
disconnect on overflow). App-level PING/PONG heartbeats ride the same
serialized path so sequence numbers stay contiguous per connection.

HTTP endpoints: GET /ws (websocket, subprotocol surface-sync.v1),
POST /translate (query dialect translation for the shared display),
GET /dump (session state for the consistency checker).
"""

from __future__ import annotations

import asyncio
import json
from dataclasses import dataclass, field
from typing import Any

from aiohttp import WSMsgType, web

from surface_sync.datastore import Store
from surface_sync.protocol import (
    MalformedJson,
    SchemaViolation,
    SUBPROTOCOL,
    UnknownType,
    decode,
    encode,
)
from surface_sync.query import (
    QuerySyntaxError,
    QueryText,
    UnsupportedDialect,
    UnsupportedFeature,
    translate,
)
from surface_sync.tuio import (
    GestureRecognizer,
    Malformed,
    NotOscBundle,
    RegionSelect,
    TouchTracker,
    UnknownProfile,
    decode_osc,
)

from .config import ServerConfig
from .session import Close, Send, SessionCore


@dataclass(slots=True)
class _Conn:
    conn_id: str
    ws: web.WebSocketResponse
    send_queue: asyncio.Queue
    writer: asyncio.Task | None = None
    closing: bool = False


class SurfaceSyncServer:
    """Live server: session core + aiohttp app + optional TUIO listener."""

    def __init__(
        self,
        config: ServerConfig,
        store: Store,
        log_stream=None,
        dump_path: str | None = None,
    ):
        self.config = config
        self.store = store
        self.dump_path = dump_path
        self._log_stream = log_stream
        self.core = SessionCore(
            config.session,
            store,
            config.initial_view(),
            config.calibration_meta(),
            arc_height_m=config.arc_height_m,
            session_cap=config.session_cap,
            log=self._log,
        )
        self._queue: asyncio.Queue = asyncio.Queue()
        self._conns: dict[str, _Conn] = {}
        self._next_conn = 0
        self._tasks: list[asyncio.Task] = []
        self._runner: web.AppRunner | None = None
        self._tuio_transport = None
        self._recognizer: GestureRecognizer | None = None
        self._tracker: TouchTracker | None = None
        self.address: tuple[str, int] | None = None

    # -- logging ---------------------------------------------------------

    def _log(self, record: dict) -> None:
        if self._log_stream is not None:
            self._log_stream.write(json.dumps(record, separators=(",", ":")) + "\n")
            self._log_stream.flush()

    # -- lifecycle ---------------------------------------------------------

    async def start(self) -> tuple[str, int]:
        app = web.Application()
        app.router.add_get("/ws", self._ws_handler)
        app.router.add_post("/translate", self._translate_handler)
        app.router.add_get("/dump", self._dump_handler)
        self._runner = web.AppRunner(app)
        await self._runner.setup()
        host, port = self.config.listen
        site = web.TCPSite(self._runner, host, port)
        await site.start()
        sockets = site._server.sockets  # bound port when port was 0
        self.address = sockets[0].getsockname()[:2]
        self._tasks.append(asyncio.create_task(self._session_loop()))
        if self.config.heartbeat_interval_s > 0:
            self._tasks.append(asyncio.create_task(self._heartbeat_loop()))
        if self.config.tuio_bind is not None:
            await self._start_tuio()
        self._log({"event": "listening", "session": self.config.session,
                   "addr": f"{self.address[0]}:{self.address[1]}"})
        return self.address

    async def stop(self) -> None:
        self._write_dump()
        for task in self._tasks:
            task.cancel()
        for task in self._tasks:
            try:
                await task
            except (asyncio.CancelledError, Exception):
                pass
        if self._tuio_transport is not None:
            self._tuio_transport.close()
        for conn in list(self._conns.values()):
            await self._shutdown_conn(conn)
        if self._runner is not None:
            await self._runner.cleanup()

    def _write_dump(self) -> None:
        if self.dump_path:
            with open(self.dump_path, "w", encoding="utf-8") as fh:
                json.dump(self.core.dump(), fh, indent=1, sort_keys=True)
                fh.write("\n")

    # -- TUIO ---------------------------------------------------------------

    async def _start_tuio(self) -> None:
        screen_w, screen_h = self.config.view_screen
        self._tracker = TouchTracker(screen_w, screen_h)
        self._recognizer = GestureRecognizer(self.core.view)
        loop = asyncio.get_running_loop()
        host, port = self.config.tuio_bind
        server = self

        class _TuioProtocol(asyncio.DatagramProtocol):
            def datagram_received(self, data: bytes, addr) -> None:
                server._on_tuio_packet(data)

        self._tuio_transport, _ = await loop.create_datagram_endpoint(
            _TuioProtocol, local_addr=(host, port)
        )

    def _on_tuio_packet(self, data: bytes) -> None:
        assert self._tracker is not None and self._recognizer is not None
        try:
            frame = decode_osc(data)
        except (NotOscBundle, UnknownProfile, Malformed) as e:
            self._log({"event": "tuio_drop", "session": self.config.session, "reason": str(e)})
            return
        self._recognizer.set_view(self.core.view)
        for output in self._recognizer.feed(self._tracker.feed(frame)):
            if isinstance(output, RegionSelect):
                self._queue.put_nowait(("tuio_region", output))
            else:
                self._queue.put_nowait(("tuio_view", output))

    # -- HTTP ------------------------------------------------------------------

    async def _translate_handler(self, request: web.Request) -> web.Response:
        try:
            doc = await request.json()
            dialect = doc["dialect"]
            text = doc["text"]
            target = doc["target"]
        except (json.JSONDecodeError, KeyError, TypeError):
            return web.json_response(
                {"error": {"code": "malformed", "detail": "need dialect, text, target"}},
                status=400,
            )
        try:
            out = translate(QueryText(dialect, text), target)
        except QuerySyntaxError as e:
            return web.json_response(
                {"error": {"code": "invalid_query", "detail": str(e), "position": e.position}},
                status=400,
            )
        except UnsupportedFeature as e:
            return web.json_response(
                {"error": {"code": "invalid_query", "detail": str(e)}}, status=400
            )
        except (UnsupportedDialect, ValueError) as e:
            return web.json_response(
                {"error": {"code": "unsupported_dialect", "detail": str(e)}}, status=400
            )
        return web.json_response({"dialect": out.dialect, "text": out.text})

    async def _dump_handler(self, request: web.Request) -> web.Response:
        return web.json_response(self.core.dump())

    # -- websocket connections ---------------------------------------------------

    async def _ws_handler(self, request: web.Request) -> web.WebSocketResponse:
        ws = web.WebSocketResponse(protocols=(SUBPROTOCOL,))
        await ws.prepare(request)
        self._next_conn += 1
        conn = _Conn(
            f"k{self._next_conn}",
            ws,
            asyncio.Queue(maxsize=self.config.send_queue_size),
        )
        self._conns[conn.conn_id] = conn
        conn.writer = asyncio.create_task(self._writer_loop(conn))
        self._queue.put_nowait(("connect", conn.conn_id))
        try:
            async for msg in ws:
                if msg.type == WSMsgType.TEXT:
                    try:
                        env = decode(msg.data)
                    except MalformedJson as e:
                        self._queue.put_nowait(("bad_frame", conn.conn_id, "malformed", str(e)))
                    except UnknownType as e:
                        self._queue.put_nowait(("bad_frame", conn.conn_id, "unknown_type", str(e)))
                    except SchemaViolation as e:
                        self._queue.put_nowait(("bad_frame", conn.conn_id, "schema", str(e)))
                    else:
                        self._queue.put_nowait(("receive", conn.conn_id, env))
                elif msg.type == WSMsgType.BINARY:
                    self._queue.put_nowait(
                        ("bad_frame", conn.conn_id, "malformed", "binary frames unsupported")
                    )
        finally:
            self._queue.put_nowait(("disconnect", conn.conn_id))
            self._conns.pop(conn.conn_id, None)
            if conn.writer is not None:
                conn.writer.cancel()
        return ws

    async def _writer_loop(self, conn: _Conn) -> None:
        try:
            while True:
                env = await conn.send_queue.get()
                await conn.ws.send_str(encode(env).decode())
        except (asyncio.CancelledError, ConnectionError):
            pass

    async def _shutdown_conn(self, conn: _Conn) -> None:
        conn.closing = True
        if conn.writer is not None:
            conn.writer.cancel()
        try:
            await conn.ws.close()
        except Exception:
            pass

    # -- the serialized session loop ------------------------------------------------

    async def _session_loop(self) -> None:
        while True:
            event = await self._queue.get()
            kind = event[0]
            if kind == "connect":
                actions = self.core.connect(event[1])
            elif kind == "receive":
                actions = self.core.receive(event[1], event[2])
            elif kind == "disconnect":
                actions = self.core.disconnect(event[1])
                if not self.core.joined_clients():
                    self._write_dump()
            elif kind == "heartbeat":
                actions = self.core.heartbeat_tick(event[1])
            elif kind == "bad_frame":
                actions = self.core.bad_frame(event[1], event[2], event[3])
            elif kind == "tuio_view":
                actions = self.core.apply_tuio_view(event[1])
            elif kind == "tuio_region":
                actions = self.core.apply_tuio_region(event[1])
            else:  # pragma: no cover
                continue
            for action in actions:
                if isinstance(action, Send):
                    conn = self._conns.get(action.conn_id)
                    if conn is None or conn.closing:
                        continue
                    try:
                        conn.send_queue.put_nowait(action.envelope)
                    except asyncio.QueueFull:
                        self._log(
                            {
                                "event": "send_overflow",
                                "session": self.config.session,
                                "client": action.conn_id,
                            }
                        )
                        asyncio.create_task(self._shutdown_conn(conn))
                elif isinstance(action, Close):
                    conn = self._conns.get(action.conn_id)
                    if conn is not None:
                        asyncio.create_task(self._shutdown_conn(conn))

    async def _heartbeat_loop(self) -> None:
        while True:
            await asyncio.sleep(self.config.heartbeat_interval_s)
            for conn_id in list(self._conns):
                self._queue.put_nowait(("heartbeat", conn_id))


def replay_trace(records: list[dict], config: ServerConfig, store: Store) -> dict:
    """Re-run a recorded trace against a fresh core; returns the final dump.

    Feeds connect/disconnect markers and client-sent frames in their global
    order (`n`); server outputs are recomputed, not read from the trace.
    """
    core = SessionCore(
        config.session,
        store,
        config.initial_view(),
        config.calibration_meta(),
        arc_height_m=config.arc_height_m,
        session_cap=config.session_cap,
    )
    for record in sorted(records, key=lambda r: r.get("n", 0)):
        actor = record.get("actor", "?")
        if record.get("event") == "final":
            # quiescence marker: the live dump was taken here, before the
            # runner tore the connections down
            break
        if record.get("event") == "connect":
            core.connect(actor)
        elif record.get("event") == "disconnect":
            core.disconnect(actor)
        elif record.get("dir") == "sent":
            core.receive(actor, decode(json.dumps(record["frame"])))
    return core.dump()
