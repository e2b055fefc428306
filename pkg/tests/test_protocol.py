import json
import pathlib
import random
import re
from datetime import datetime, timezone

import pytest

from surface_sync.datastore import AssetRecord
from surface_sync.geo import GeoPoint, ViewState
from surface_sync.protocol import (
    ARObjectMsg,
    CalibrationMeta,
    Envelope,
    ErrorMsg,
    Hello,
    Interaction,
    MalformedJson,
    MESSAGE_TYPES,
    ObjectDespawn,
    ObjectSpawn,
    ObjectUpdate,
    Ping,
    Pong,
    QueryResult,
    QuerySubmit,
    SchemaViolation,
    UnknownType,
    ViewUpdate,
    Welcome,
    check_sequence,
    decode,
    decode_warnings,
    encode,
)
from surface_sync.query import QueryText

DOCS = pathlib.Path(__file__).parent.parent / "docs" / "protocol.md"

VIEW = ViewState.from_center(GeoPoint(44.6488, -63.5752), 3.0, 512, 512, 0.0)
CAL = CalibrationMeta((40.0, 472.0), 120.0, 0.12)
MARKER = ARObjectMsg(
    "marker:c1:v001", "VESSEL_MARKER", GeoPoint(44.0, -63.0), None, 0.0,
    "SHARED", None, 1, {"record_id": "v001", "requester": "c1", "type": "cargo"},
)
MENU = ARObjectMsg("menu:c2", "MENU", None, (100.0, 100.0), 0.0, "PRIVATE", "c2", 1, {})
RECORD = AssetRecord(
    "v001", GeoPoint(44.0, -63.0),
    datetime(2024, 6, 1, 12, 0, tzinfo=timezone.utc),
    {"type": "cargo", "speed_kn": 11.5},
)

ALL_PAYLOADS = [
    Hello("AR_CLIENT", "ar1", True),
    Welcome("c2", VIEW, (MARKER, MENU), CAL),
    ViewUpdate(VIEW),
    QuerySubmit("q1", QueryText("SPARQL", "SELECT * WHERE { ?s :type ?type . FILTER(?type = \"cargo\") }"), False),
    QueryResult("q1", (RECORD,), 4),
    ObjectSpawn(MARKER),
    ObjectUpdate("marker:c1:v001", 2, {"attrs": {"held_by": "c2"}, "altitude_m": 0.1}),
    ObjectDespawn("marker:c1:v001"),
    Interaction("SELECT_REGION", None, {"region": {"nw": [1.0, 2.0], "se": [-1.0, 3.0]}}),
    ErrorMsg("unknown_target", "no vessel marker 'x'", "q9"),
    Ping(),
    Pong(),
]


def test_golden_ping_frame():
    env = Envelope.make(Ping(), "s1", "c1", 1, 0)
    assert encode(env) == b'{"type":"PING","session":"s1","sender":"c1","seq":1,"ts":0,"payload":{}}'


@pytest.mark.parametrize("payload", ALL_PAYLOADS, ids=lambda p: type(p).__name__)
def test_round_trip_every_type(payload):
    env = Envelope.make(payload, "s1", "sender-1", 3, 17)
    assert decode(encode(env)) == env


def test_all_types_covered():
    got = {Envelope.make(p, "s", "c", 1, 0).type for p in ALL_PAYLOADS}
    assert got == set(MESSAGE_TYPES)


def test_encode_deterministic():
    env = Envelope.make(ObjectSpawn(MARKER), "s1", "server", 9, 1)
    same = Envelope.make(ObjectSpawn(MARKER), "s1", "server", 9, 1)
    assert encode(env) == encode(same)


def test_attrs_sorted_for_determinism():
    a = ARObjectMsg("x", "MENU", None, (0.0, 0.0), 0.0, "PRIVATE", "c1", 1, {"b": 1, "a": 2})
    b = ARObjectMsg("x", "MENU", None, (0.0, 0.0), 0.0, "PRIVATE", "c1", 1, {"a": 2, "b": 1})
    assert encode(Envelope.make(ObjectSpawn(a), "s", "c", 1, 0)) == encode(
        Envelope.make(ObjectSpawn(b), "s", "c", 1, 0)
    )


# -- decode errors ----------------------------------------------------------------


def test_truncated_frame():
    with pytest.raises(MalformedJson):
        decode(b'{"type":"PING"')


def test_non_object():
    with pytest.raises(MalformedJson):
        decode(b"[1,2,3]")


def test_unknown_type():
    with pytest.raises(UnknownType) as e:
        decode(b'{"type":"NOPE","session":"s","sender":"c","seq":1,"ts":0,"payload":{}}')
    assert e.value.tag == "NOPE"


def test_unknown_top_level_field_rejected():
    with pytest.raises(SchemaViolation):
        decode(b'{"type":"PING","session":"s","sender":"c","seq":1,"ts":0,"payload":{},"extra":1}')


def test_view_update_bad_latitude_path():
    env = Envelope.make(ViewUpdate(VIEW), "s1", "c1", 1, 0)
    doc = json.loads(encode(env))
    doc["payload"]["bounds"]["north_west"]["lat"] = 95
    with pytest.raises(SchemaViolation) as e:
        decode(json.dumps(doc))
    assert e.value.path == "payload.bounds.north_west.lat"


def test_view_update_inconsistent_bounds():
    env = Envelope.make(ViewUpdate(VIEW), "s1", "c1", 1, 0)
    doc = json.loads(encode(env))
    doc["payload"]["zoom"] = 9.0  # bounds no longer match the camera
    with pytest.raises(SchemaViolation):
        decode(json.dumps(doc))


def test_object_requires_exactly_one_anchor():
    env = Envelope.make(ObjectSpawn(MARKER), "s1", "server", 1, 0)
    doc = json.loads(encode(env))
    doc["payload"]["object"]["screen_px"] = [1.0, 2.0]
    with pytest.raises(SchemaViolation):
        decode(json.dumps(doc))


def test_unknown_payload_field_warned_not_rejected():
    env = Envelope.make(Ping(), "s1", "c1", 1, 0)
    doc = json.loads(encode(env))
    doc["payload"]["future_field"] = 42
    before = decode_warnings.count
    assert decode(json.dumps(doc)) == env
    assert decode_warnings.count == before + 1
    assert decode_warnings.last_path == "payload.future_field"


def test_negative_seq_rejected():
    with pytest.raises(SchemaViolation):
        decode(b'{"type":"PING","session":"s","sender":"c","seq":-1,"ts":0,"payload":{}}')


# -- sequence truth table ------------------------------------------------------------


@pytest.mark.parametrize(
    "last,seq,kind,gap",
    [
        (4, 5, "accept", 0),
        (4, 4, "duplicate", 0),
        (4, 1, "duplicate", 0),
        (4, 7, "gap", 2),
        (0, 1, "accept", 0),
        (0, 5, "gap", 4),
    ],
)
def test_check_sequence(last, seq, kind, gap):
    result = check_sequence(last, Envelope.make(Ping(), "s", "c", seq, 0))
    assert (result.kind, result.gap) == (kind, gap)


# -- documented frames are test vectors ------------------------------------------------


def _doc_frames() -> list[str]:
    text = DOCS.read_text(encoding="utf-8")
    return re.findall(r"```json frame\n(.*?)\n```", text, re.S)


def test_documented_frames_byte_exact():
    frames = _doc_frames()
    assert len(frames) >= 12
    for raw in frames:
        env = decode(raw)
        assert encode(env) == raw.encode()


def test_docs_cover_every_message_type():
    tags = {json.loads(f)["type"] for f in _doc_frames()}
    assert tags == set(MESSAGE_TYPES)


# -- fuzz ---------------------------------------------------------------------------------


def test_decode_fuzz_no_crash():
    rng = random.Random(31337)
    seeds = [encode(Envelope.make(p, "s1", "c1", 2, 5)) for p in ALL_PAYLOADS]
    allowed = (MalformedJson, UnknownType, SchemaViolation)
    for i in range(20_000):
        kind = rng.random()
        if kind < 0.3:
            data = bytes(rng.randrange(0, 256) for _ in range(rng.randrange(0, 80)))
        elif kind < 0.6:
            base = bytearray(rng.choice(seeds))
            for _ in range(rng.randrange(1, 8)):
                base[rng.randrange(len(base))] = rng.randrange(0, 256)
            data = bytes(base)
        else:
            base = json.loads(rng.choice(seeds))
            # structured mutation: drop or retype a random key
            target = base if rng.random() < 0.5 else base.get("payload", base)
            if isinstance(target, dict) and target:
                key = rng.choice(list(target))
                if rng.random() < 0.5:
                    del target[key]
                else:
                    target[key] = rng.choice([None, True, -1, "x", [], {}])
            data = json.dumps(base).encode()
        try:
            decode(data)
        except allowed:
            pass
