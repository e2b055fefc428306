"""Socket-level tests: aiohttp server, real websockets, TUIO over UDP."""

import asyncio
import json
import socket

import aiohttp
import pytest

from oracles import tuio_cursor_bundle
from surface_sync.datastore import Store
from surface_sync.protocol import (
    Envelope,
    Hello,
    Ping,
    Pong,
    SUBPROTOCOL,
    decode,
    encode,
)
from surface_sync.server import ServerConfig, SurfaceSyncServer


def config(**kw) -> ServerConfig:
    defaults = dict(listen=("127.0.0.1", 0), heartbeat_interval_s=0.0, tuio_bind=None)
    defaults.update(kw)
    return ServerConfig(**defaults)


async def start(cfg: ServerConfig, store=None) -> SurfaceSyncServer:
    server = SurfaceSyncServer(cfg, store or Store([]))
    await server.start()
    return server


def url(server: SurfaceSyncServer) -> str:
    host, port = server.address
    return f"http://{host}:{port}"


async def hello(ws, role="AR_CLIENT", name="x", seq=1):
    env = Envelope.make(Hello(role, name, True), "s1", "", seq, 0)
    await ws.send_str(encode(env).decode())
    reply = decode((await ws.receive()).data)
    return reply



async def test_subprotocol_negotiated():
    server = await start(config())
    try:
        async with aiohttp.ClientSession() as http:
            async with http.ws_connect(f"{url(server)}/ws", protocols=(SUBPROTOCOL,)) as ws:
                assert ws.protocol == SUBPROTOCOL
                welcome = await hello(ws)
                assert welcome.type == "WELCOME"
    finally:
        await server.stop()



async def test_bad_frames_get_typed_errors():
    server = await start(config())
    try:
        async with aiohttp.ClientSession() as http:
            async with http.ws_connect(f"{url(server)}/ws", protocols=(SUBPROTOCOL,)) as ws:
                await ws.send_str("{nope")
                err = decode((await ws.receive()).data)
                assert err.payload.code == "malformed"
                await ws.send_str(json.dumps(
                    {"type": "NOPE", "session": "s1", "sender": "", "seq": 1, "ts": 0, "payload": {}}
                ))
                err = decode((await ws.receive()).data)
                assert err.payload.code == "unknown_type"
                await ws.send_bytes(b"\x00\x01")
                err = decode((await ws.receive()).data)
                assert err.payload.code == "malformed"
    finally:
        await server.stop()



async def test_second_sd_rejected_and_closed():
    server = await start(config())
    try:
        async with aiohttp.ClientSession() as http:
            ws1 = await http.ws_connect(f"{url(server)}/ws", protocols=(SUBPROTOCOL,))
            assert (await hello(ws1, role="SHARED_DISPLAY")).type == "WELCOME"
            ws2 = await http.ws_connect(f"{url(server)}/ws", protocols=(SUBPROTOCOL,))
            reply = await hello(ws2, role="SHARED_DISPLAY")
            assert reply.payload.code == "role_conflict"
            closed = await ws2.receive()
            assert closed.type in (aiohttp.WSMsgType.CLOSE, aiohttp.WSMsgType.CLOSING,
                                   aiohttp.WSMsgType.CLOSED)
            await ws1.close()
    finally:
        await server.stop()



async def test_heartbeat_ping_and_disconnect():
    server = await start(config(heartbeat_interval_s=0.05))
    try:
        async with aiohttp.ClientSession() as http:
            async with http.ws_connect(f"{url(server)}/ws", protocols=(SUBPROTOCOL,)) as ws:
                await hello(ws)
                # answer the first PING, then go silent: server disconnects
                got_ping = False
                seq = 1
                while True:
                    msg = await asyncio.wait_for(ws.receive(), timeout=2.0)
                    if msg.type != aiohttp.WSMsgType.TEXT:
                        break
                    env = decode(msg.data)
                    if env.type == "PING" and not got_ping:
                        got_ping = True
                        seq += 1
                        pong = Envelope.make(Pong(), "s1", "c1", seq, 0)
                        await ws.send_str(encode(pong).decode())
                assert got_ping
    finally:
        await server.stop()



async def test_translate_endpoint():
    server = await start(config())
    try:
        async with aiohttp.ClientSession() as http:
            body = {
                "dialect": "SPARQL",
                "text": "SELECT * WHERE { ?s :lat ?lat ; :lon ?lon . "
                        "FILTER(?lat >= -10 && ?lat <= 10 && ?lon >= 20 && ?lon <= 40) }",
                "target": "SQL",
            }
            async with http.post(f"{url(server)}/translate", json=body) as resp:
                assert resp.status == 200
                doc = await resp.json()
                assert doc["dialect"] == "SQL"
                assert "BETWEEN" in doc["text"]
            async with http.post(
                f"{url(server)}/translate",
                json={"dialect": "SPARQL", "text": "SELECT ((", "target": "SQL"},
            ) as resp:
                assert resp.status == 400
                doc = await resp.json()
                assert doc["error"]["code"] == "invalid_query"
                assert "position" in doc["error"]
    finally:
        await server.stop()



async def test_dump_endpoint():
    server = await start(config())
    try:
        async with aiohttp.ClientSession() as http:
            async with http.ws_connect(f"{url(server)}/ws", protocols=(SUBPROTOCOL,)) as ws:
                await hello(ws, role="SHARED_DISPLAY", name="table")
                async with http.get(f"{url(server)}/dump") as resp:
                    dump = await resp.json()
                    assert dump["clients"][0]["role"] == "SHARED_DISPLAY"
    finally:
        await server.stop()



async def test_tuio_udp_pan_reaches_clients():
    tuio_port = _free_udp_port()
    server = await start(config(tuio_bind=("127.0.0.1", tuio_port)))
    try:
        async with aiohttp.ClientSession() as http:
            async with http.ws_connect(f"{url(server)}/ws", protocols=(SUBPROTOCOL,)) as ws:
                await hello(ws)
                sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
                addr = ("127.0.0.1", tuio_port)
                sock.sendto(tuio_cursor_bundle([1], [(1, 0.2, 0.5, 0.0, 0.0, 0.0)], fseq=1), addr)
                sock.sendto(tuio_cursor_bundle([1], [(1, 0.45, 0.5, 0.0, 0.0, 0.0)], fseq=2), addr)
                sock.close()
                msg = await asyncio.wait_for(ws.receive(), timeout=5.0)
                env = decode(msg.data)
                assert env.type == "VIEW_UPDATE"
                assert env.payload.view.center.lon < 0  # dragged east -> centre west
    finally:
        await server.stop()


def _free_udp_port() -> int:
    s = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
    s.bind(("127.0.0.1", 0))
    port = s.getsockname()[1]
    s.close()
    return port



async def test_slow_client_disconnected_on_overflow(store):
    # the kernel drains sockets faster than desk-scale tests can fill them,
    # so simulate the stalled writer by pre-filling the bounded queue
    server = await start(config(send_queue_size=4), store)
    try:
        async with aiohttp.ClientSession() as http:
            sd = await http.ws_connect(f"{url(server)}/ws", protocols=(SUBPROTOCOL,))
            await hello(sd, role="SHARED_DISPLAY", name="table")
            lazy = await http.ws_connect(f"{url(server)}/ws", protocols=(SUBPROTOCOL,))
            await hello(lazy, name="lazy", seq=1)
            conn = server._conns["k2"]
            conn.writer.cancel()  # writer stalls; queue can only fill now
            while not conn.send_queue.full():
                conn.send_queue.put_nowait(None)
            from surface_sync.protocol import QuerySubmit
            from surface_sync.query import QueryText

            query = (
                'SELECT * WHERE { ?s :lat ?lat ; :lon ?lon . '
                'FILTER(?lat >= -90 && ?lat <= 90 && ?lon >= -180 && ?lon <= 180) } LIMIT 1'
            )
            submit = Envelope.make(
                QuerySubmit("q1", QueryText("SPARQL", query), True), "s1", "c1", 2, 0
            )
            await sd.send_str(encode(submit).decode())
            closed = await asyncio.wait_for(lazy.receive(), timeout=5.0)
            assert closed.type in (
                aiohttp.WSMsgType.CLOSE,
                aiohttp.WSMsgType.CLOSING,
                aiohttp.WSMsgType.CLOSED,
            )
            await sd.close()
    finally:
        await server.stop()
