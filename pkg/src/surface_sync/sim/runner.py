"""Drives scenarios against a live server and records full wire traces.

Determinism: after every scripted action the acting client sends PING and
waits for the server's PONG. The session loop is serialized, so the PONG
guarantees the action (and all broadcasts it caused) were processed and
enqueued before the next scripted action is sent. Traces are therefore
identical across runs up to timestamps for a fixed scenario/seed.

Symbolic targets: "@name" inside an interaction target resolves to that
actor's current client id (marker ids embed requester client ids).
"""

from __future__ import annotations

import asyncio
import json
import re
import time
from dataclasses import dataclass, field

import aiohttp

from surface_sync.geo import GeoPoint, ViewState
from surface_sync.protocol import (
    Envelope,
    Hello,
    Interaction,
    Ping,
    Pong,
    QuerySubmit,
    SUBPROTOCOL,
    ViewUpdate,
    Welcome,
    decode,
    encode,
)
from surface_sync.query import QueryText

from .replica import Replica, apply as apply_envelope
from .scenario import Actor, Scenario

_SYMBOL_RE = re.compile(r"@([A-Za-z_][A-Za-z0-9_]*)")


class ConnectionLost(RuntimeError):
    def __init__(self, actor: str, at: float):
        self.actor = actor
        self.at = at
        super().__init__(f"connection to {actor} lost at t={at:.3f}")


@dataclass(slots=True)
class _LiveActor:
    spec: Actor
    session_id: str
    replica: Replica
    ws: aiohttp.ClientWebSocketResponse | None = None
    pump: asyncio.Task | None = None
    seq: int = 0
    client_id: str = ""
    welcome: asyncio.Future | None = None
    pongs: asyncio.Queue = field(default_factory=asyncio.Queue)

    @property
    def connected(self) -> bool:
        return self.ws is not None and not self.ws.closed


@dataclass(slots=True)
class RunResult:
    records: list[dict]
    replicas: dict[str, Replica]
    client_ids: dict[str, str]
    dump: dict | None = None  # server state at quiescence (pre-disconnect)

    def by_actor(self) -> dict[str, list[dict]]:
        out: dict[str, list[dict]] = {}
        for record in self.records:
            out.setdefault(record["actor"], []).append(record)
        return out


class ScenarioRunner:
    def __init__(self, scenario: Scenario, base_url: str, session_id: str = "s1"):
        self.scenario = scenario
        self.base_url = base_url.rstrip("/")
        self.session_id = session_id
        self.records: list[dict] = []
        self._n = 0
        self._t0 = time.monotonic()
        self._dump: dict | None = None
        self._actors: dict[str, _LiveActor] = {
            a.name: _LiveActor(a, session_id, Replica(a.role, a.qr_pose))
            for a in scenario.actors
        }

    # -- trace recording ----------------------------------------------------

    def _record(self, actor: str, **fields) -> None:
        self._n += 1
        self.records.append(
            {"n": self._n, "t": round(time.monotonic() - self._t0, 6), "actor": actor, **fields}
        )

    # -- plumbing ------------------------------------------------------------

    async def _pump(self, live: _LiveActor) -> None:
        assert live.ws is not None
        async for msg in live.ws:
            if msg.type != aiohttp.WSMsgType.TEXT:
                continue
            frame = json.loads(msg.data)
            self._record(live.spec.name, dir="recv", frame=frame)
            env = decode(msg.data)
            apply_envelope(live.replica, env)
            if isinstance(env.payload, Welcome):
                live.client_id = env.payload.client_id
                if live.welcome is not None and not live.welcome.done():
                    live.welcome.set_result(env.payload.client_id)
            elif isinstance(env.payload, Pong):
                live.pongs.put_nowait(env.seq)
            elif isinstance(env.payload, Ping):
                await self._send(live, Pong())

    async def _send(self, live: _LiveActor, payload) -> None:
        if not live.connected:
            raise ConnectionLost(live.spec.name, time.monotonic() - self._t0)
        live.seq += 1
        env = Envelope.make(
            payload, self.session_id, live.client_id, live.seq, int(time.time() * 1000)
        )
        self._record(live.spec.name, dir="sent", frame=json.loads(encode(env)))
        await live.ws.send_str(encode(env).decode())

    async def _barrier(self, live: _LiveActor) -> None:
        """PING/PONG round trip: server has processed everything we sent."""
        if not live.connected:
            return
        await self._send(live, Ping())
        try:
            await asyncio.wait_for(live.pongs.get(), timeout=10.0)
        except asyncio.TimeoutError:
            raise ConnectionLost(live.spec.name, time.monotonic() - self._t0) from None

    def _resolve(self, text: str) -> str:
        return _SYMBOL_RE.sub(
            lambda m: self._actors[m.group(1)].client_id
            if m.group(1) in self._actors
            else m.group(0),
            text,
        )

    # -- actions ---------------------------------------------------------------

    async def _do_join(self, http: aiohttp.ClientSession, live: _LiveActor) -> None:
        live.ws = await http.ws_connect(f"{self.base_url}/ws", protocols=(SUBPROTOCOL,))
        live.seq = 0
        live.client_id = ""
        live.replica = Replica(live.spec.role, live.spec.qr_pose)
        live.welcome = asyncio.get_running_loop().create_future()
        live.pongs = asyncio.Queue()
        self._record(live.spec.name, event="connect")
        live.pump = asyncio.create_task(self._pump(live))
        await self._send(
            live, Hello(live.spec.role, live.spec.name, live.spec.subscribe_view)
        )
        try:
            await asyncio.wait_for(asyncio.shield(live.welcome), timeout=10.0)
        except asyncio.TimeoutError:
            raise ConnectionLost(live.spec.name, time.monotonic() - self._t0) from None

    async def _do_disconnect(self, live: _LiveActor) -> None:
        if live.ws is not None and not live.ws.closed:
            await live.ws.close()
        if live.pump is not None:
            try:
                await live.pump
            except Exception:
                pass
        self._record(live.spec.name, event="disconnect")
        live.ws = None

    async def run(self) -> RunResult:
        async with aiohttp.ClientSession() as http:
            try:
                for action in self.scenario.actions:
                    live = self._actors[action.actor]
                    if action.action == "wait":
                        await asyncio.sleep(float(action.params.get("dt", 0.01)))
                        continue
                    if action.action == "join":
                        await self._do_join(http, live)
                        continue
                    if action.action == "disconnect":
                        await self._do_disconnect(live)
                        continue
                    if not live.connected:
                        continue
                    if action.action == "view_update":
                        params = action.params
                        center = params.get("center", [0.0, 0.0])
                        view = ViewState.from_center(
                            GeoPoint(center[0], center[1]),
                            float(params.get("zoom", 1.0)),
                            live.spec.screen[0],
                            live.spec.screen[1],
                            float(params.get("orientation_deg", 0.0)),
                        )
                        await self._send(live, ViewUpdate(view))
                    elif action.action == "query":
                        params = action.params
                        await self._send(
                            live,
                            QuerySubmit(
                                params.get("request_id", f"q{self._n}"),
                                QueryText(params["dialect"], params["text"]),
                                bool(params.get("spawn", True)),
                            ),
                        )
                    elif action.action == "interaction":
                        params = action.params
                        target = params.get("target")
                        await self._send(
                            live,
                            Interaction(
                                params["kind"],
                                self._resolve(target) if target else None,
                                params.get("data", {}),
                            ),
                        )
                    await self._barrier(live)
                # quiesce: drain every connection, mark final replicas, then
                # take the server dump while everyone is still connected
                for live in self._actors.values():
                    if live.connected:
                        await self._barrier(live)
                for live in self._actors.values():
                    if live.connected:
                        self._record(live.spec.name, event="final", client_id=live.client_id)
                async with http.get(f"{self.base_url}/dump") as resp:
                    self._dump = await resp.json()
                for live in self._actors.values():
                    if live.connected:
                        await self._do_disconnect(live)
            finally:
                for live in self._actors.values():
                    if live.pump is not None and not live.pump.done():
                        live.pump.cancel()
        return RunResult(
            self.records,
            {name: live.replica for name, live in self._actors.items()},
            {name: live.client_id for name, live in self._actors.items()},
            self._dump,
        )


async def run_scenario(
    scenario: Scenario, base_url: str, session_id: str = "s1", out_path: str | None = None
) -> RunResult:
    """Execute a scenario against a live server; optionally write the trace."""
    result = await ScenarioRunner(scenario, base_url, session_id).run()
    if out_path:
        with open(out_path, "w", encoding="utf-8") as fh:
            for record in result.records:
                fh.write(json.dumps(record, separators=(",", ":")) + "\n")
    return result
