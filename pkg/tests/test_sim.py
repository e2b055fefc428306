import asyncio
import copy
import json

import pytest

from surface_sync.datastore import Store
from surface_sync.geo import GeoPoint, ViewState
from surface_sync.protocol import (
    ARObjectMsg,
    CalibrationMeta,
    Envelope,
    ObjectDespawn,
    ObjectSpawn,
    ObjectUpdate,
    ViewUpdate,
    Welcome,
)
from surface_sync.server import ServerConfig, SurfaceSyncServer, replay_trace
from surface_sync.sim import (
    Action,
    Actor,
    QrPose,
    Replica,
    Scenario,
    apply,
    check_consistency,
    generate_scenario,
    load_traces,
    run_scenario,
    scenario_from_json,
    scenario_to_json,
)

VIEW = ViewState.from_center(GeoPoint(0, 0), 1, 512, 512, 0)
CAL = CalibrationMeta((40.0, 472.0), 120.0, 0.12)
MARKER = ARObjectMsg(
    "m1", "VESSEL_MARKER", GeoPoint(10, 20), None, 0.0, "SHARED", None, 2, {"record_id": "r"}
)


def env(payload, seq=1):
    return Envelope.make(payload, "s1", "server", seq, 0)


def fresh_replica() -> Replica:
    replica = Replica("AR_CLIENT", QrPose())
    apply(replica, env(Welcome("c9", VIEW, (MARKER,), CAL)))
    return replica


# -- replica fold rules -----------------------------------------------------------


def test_welcome_installs_snapshot():
    replica = fresh_replica()
    assert replica.client_id == "c9"
    assert set(replica.objects) == {"m1"}
    assert replica.calibration is not None
    assert "m1" in replica.placements


def test_stale_update_dropped():
    replica = fresh_replica()
    apply(replica, env(ObjectUpdate("m1", 1, {"attrs": {"x": 1}})))
    assert replica.objects["m1"].version == 2
    assert replica.stale_drops == 1
    apply(replica, env(ObjectUpdate("m1", 3, {"attrs": {"x": 1}})))
    assert replica.objects["m1"].version == 3
    assert replica.objects["m1"].attrs["x"] == 1


def test_stale_spawn_dropped():
    replica = fresh_replica()
    old = ARObjectMsg("m1", "VESSEL_MARKER", GeoPoint(0, 0), None, 0.0, "SHARED", None, 1, {})
    apply(replica, env(ObjectSpawn(old)))
    assert replica.objects["m1"].version == 2
    assert replica.stale_drops == 1


def test_despawn_removes_placement():
    replica = fresh_replica()
    apply(replica, env(ObjectDespawn("m1")))
    assert replica.objects == {}
    assert replica.placements == {}
    apply(replica, env(ObjectDespawn("m1")))
    assert replica.anomalies == 1


def test_view_update_recomputes_placements():
    replica = fresh_replica()
    before = replica.placements["m1"]
    apply(replica, env(ViewUpdate(VIEW.with_camera(zoom=2))))
    after = replica.placements["m1"]
    assert before != after


def test_apply_is_a_pure_fold():
    envelopes = [
        env(Welcome("c9", VIEW, (MARKER,), CAL)),
        env(ObjectUpdate("m1", 3, {"attrs": {"x": 1}}), seq=2),
        env(ViewUpdate(VIEW.with_camera(zoom=3)), seq=3),
    ]
    a = Replica("AR_CLIENT", QrPose())
    b = Replica("AR_CLIENT", QrPose())
    for e in envelopes:
        apply(a, e)
    for e in envelopes:
        apply(b, e)
    assert a.objects == b.objects
    assert a.placements == b.placements


# -- scenario files -----------------------------------------------------------------


def test_scenario_round_trip():
    s = generate_scenario(3, events=20)
    doc = scenario_to_json(s)
    assert scenario_from_json(doc) == s


def test_scenario_validation():
    with pytest.raises(ValueError):
        Scenario((Actor("a", "AR_CLIENT"), Actor("a", "AR_CLIENT")), ())
    with pytest.raises(ValueError):
        Scenario((Actor("a", "AR_CLIENT"),), (Action(0.0, "ghost", "join"),))
    with pytest.raises(ValueError):
        Scenario(
            (Actor("a", "AR_CLIENT"),),
            (Action(1.0, "a", "join"), Action(0.5, "a", "disconnect")),
        )
    with pytest.raises(ValueError):
        Action(0.0, "a", "teleport")


def test_generated_scenario_mixes_events():
    s = generate_scenario(7, events=100)
    kinds = {a.action for a in s.actions}
    assert {"join", "view_update", "query", "interaction"} <= kinds
    assert sum(1 for a in s.actions if a.action != "wait") >= 100


# -- live runs + checker ----------------------------------------------------------------


def _run(scenario, store, tmp_path=None):
    config = ServerConfig(listen=("127.0.0.1", 0), heartbeat_interval_s=0.0, tuio_bind=None)

    async def main():
        server = SurfaceSyncServer(config, store)
        host, port = await server.start()
        try:
            out = str(tmp_path / "trace.jsonl") if tmp_path else None
            return await run_scenario(scenario, f"http://{host}:{port}", "s1", out)
        finally:
            await server.stop()

    return asyncio.run(main()), config


def small_scenario() -> Scenario:
    q = (
        'SELECT * WHERE { ?s :lat ?lat ; :lon ?lon . '
        'FILTER(?lat >= -60 && ?lat <= 60 && ?lon >= -120 && ?lon <= 120) } LIMIT 4'
    )
    return Scenario(
        actors=(
            Actor("sd", "SHARED_DISPLAY"),
            Actor("ar1", "AR_CLIENT"),
            Actor("ar2", "AR_CLIENT"),
        ),
        actions=(
            Action(0.00, "sd", "join"),
            Action(0.01, "ar1", "join"),
            Action(0.02, "ar2", "join"),
            Action(0.03, "sd", "view_update", {"center": [5, 5], "zoom": 2}),
            Action(0.04, "sd", "query", {"dialect": "SPARQL", "text": q, "request_id": "q1"}),
            Action(0.05, "ar1", "interaction", {"kind": "MENU_OPEN", "data": {"screen_px": [9.0, 9.0]}}),
            Action(0.06, "ar1", "interaction", {"kind": "GRAB", "target": "marker:@sd:v000"}),
            Action(0.07, "ar2", "disconnect"),
            Action(0.08, "sd", "view_update", {"center": [0, 0], "zoom": 3}),
        ),
    )


def test_two_ar_clients_see_shared_panel(store):
    result, _ = _run(small_scenario(), store)
    # the panel spawned by ar1's grab reaches both connected replicas
    panel_id = f"panel:marker:{result.client_ids['sd']}:v000"
    assert panel_id in result.replicas["ar1"].objects
    assert panel_id in result.replicas["sd"].objects
    report = check_consistency(result.by_actor(), result.dump)
    assert report.ok, [str(f) for f in report.findings]


def test_private_menu_never_reaches_others(store):
    result, _ = _run(small_scenario(), store)
    menu_id = f"menu:{result.client_ids['ar1']}"
    assert menu_id in result.replicas["ar1"].objects
    assert menu_id not in result.replicas["sd"].objects
    for record in result.by_actor()["sd"]:
        if record.get("dir") == "recv":
            assert '"PRIVATE"' not in json.dumps(record["frame"])


def test_disconnect_despawns_private_objects(store):
    q = 'SELECT * WHERE { ?s :type ?t . FILTER(?t = "cargo") } LIMIT 2'
    scenario = Scenario(
        actors=(Actor("sd", "SHARED_DISPLAY"), Actor("ar1", "AR_CLIENT")),
        actions=(
            Action(0.00, "sd", "join"),
            Action(0.01, "ar1", "join"),
            Action(0.02, "ar1", "interaction", {"kind": "MENU_OPEN", "data": {}}),
            Action(0.03, "ar1", "disconnect"),
            Action(0.04, "sd", "query", {"dialect": "SPARQL", "text": q, "request_id": "q1"}),
        ),
    )
    result, _ = _run(scenario, store)
    dumped_ids = {o["object_id"] for o in result.dump["objects"]}
    assert not any(oid.startswith("menu:") for oid in dumped_ids)
    assert len([o for o in dumped_ids if o.startswith("marker:")]) == 2


def test_trace_replay_reproduces_dump(store, tmp_path):
    result, config = _run(small_scenario(), store, tmp_path)
    records = [json.loads(line) for line in (tmp_path / "trace.jsonl").read_text().splitlines()]
    replayed = replay_trace(records, config, store)
    assert json.dumps(replayed, sort_keys=True) == json.dumps(result.dump, sort_keys=True)


def test_load_traces_groups_by_actor(store, tmp_path):
    _run(small_scenario(), store, tmp_path)
    traces = load_traces(tmp_path)
    assert set(traces) == {"sd", "ar1", "ar2"}


# -- seeded faults must be caught -----------------------------------------------------------


def test_checker_flags_injected_private_frame(store):
    result, _ = _run(small_scenario(), store)
    traces = copy.deepcopy(result.by_actor())
    # plant a PRIVATE object owned by ar1 into sd's received stream
    menu_frame = None
    for record in result.by_actor()["ar1"]:
        if record.get("dir") == "recv" and record["frame"]["type"] == "OBJECT_SPAWN":
            if record["frame"]["payload"]["object"]["scope"] == "PRIVATE":
                menu_frame = copy.deepcopy(record)
    assert menu_frame is not None
    menu_frame["actor"] = "sd"
    traces["sd"].insert(-3, menu_frame)
    report = check_consistency(traces, result.dump)
    kinds = {f.kind for f in report.findings}
    assert "privacy" in kinds


def test_checker_flags_dropped_spawn(store):
    result, _ = _run(small_scenario(), store)
    traces = copy.deepcopy(result.by_actor())
    dropped = None
    kept = []
    for record in traces["ar1"]:
        if (
            dropped is None
            and record.get("dir") == "recv"
            and record["frame"]["type"] == "OBJECT_SPAWN"
            and record["frame"]["payload"]["object"]["scope"] == "SHARED"
        ):
            dropped = record["frame"]["payload"]["object"]["object_id"]
            continue
        kept.append(record)
    traces["ar1"] = kept
    assert dropped
    report = check_consistency(traces, result.dump)
    assert any(f.kind == "divergence" and f.object_id == dropped for f in report.findings)


def test_checker_flags_version_regression(store):
    result, _ = _run(small_scenario(), store)
    traces = copy.deepcopy(result.by_actor())
    for record in traces["ar1"]:
        if record.get("dir") == "recv" and record["frame"]["type"] == "OBJECT_UPDATE":
            record["frame"]["payload"]["version"] = 0
            break
    report = check_consistency(traces, result.dump)
    assert any(f.kind == "version_monotonicity" for f in report.findings)


def test_clean_run_has_no_findings(store):
    result, _ = _run(small_scenario(), store)
    assert check_consistency(result.by_actor(), result.dump).ok
