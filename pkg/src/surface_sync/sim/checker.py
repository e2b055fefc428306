"""Offline consistency checker over recorded traces plus the server dump.

Recomputes each actor's final replica from its received frames and asserts
the session invariants:

* convergence - every finally-connected replica's SHARED object map equals
  the server's (ids, versions, attrs byte-equal via canonical JSON), and
  its PRIVATE set equals the server's PRIVATE(owner=client) set;
* privacy - no frame carrying a PRIVATE object ever appeared on a
  connection that does not own it;
* per-sender causality - received seq numbers strictly increase per sender
  within each connection segment;
* version monotonicity per object id;
* single result layer - markers attributed to a requester match both the
  server's layer bookkeeping and the requester's last spawned query result.

Findings are returned, not raised; an empty report is a pass.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from surface_sync.protocol import (
    ObjectSpawn,
    ObjectUpdate,
    QueryResult,
    SCOPE_PRIVATE,
    SCOPE_SHARED,
    Welcome,
    decode,
    object_json,
)

from .replica import Replica, apply as apply_envelope


@dataclass(frozen=True, slots=True)
class Finding:
    kind: str
    actor: str
    detail: str
    object_id: str | None = None

    def __str__(self) -> str:
        suffix = f" [{self.object_id}]" if self.object_id else ""
        return f"{self.kind}: actor={self.actor}{suffix}: {self.detail}"


@dataclass(slots=True)
class Report:
    findings: list[Finding] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.findings

    def add(self, kind: str, actor: str, detail: str, object_id: str | None = None) -> None:
        self.findings.append(Finding(kind, actor, detail, object_id))


def _canonical_objects(objects: dict) -> dict[str, str]:
    return {oid: json.dumps(doc, sort_keys=True) for oid, doc in objects.items()}


def _segments(records: list[dict]) -> list[list[dict]]:
    """Split one actor's records into connection segments at connect markers."""
    segments: list[list[dict]] = []
    current: list[dict] | None = None
    for record in sorted(records, key=lambda r: r.get("n", 0)):
        if record.get("event") == "connect":
            current = []
            segments.append(current)
            continue
        if current is None:
            current = []
            segments.append(current)
        current.append(record)
    return segments


def check_consistency(traces: dict[str, list[dict]], dump: dict) -> Report:
    report = Report()
    dump_objects = {o["object_id"]: o for o in dump.get("objects", [])}
    dump_shared = _canonical_objects(
        {oid: o for oid, o in dump_objects.items() if o["scope"] == SCOPE_SHARED}
    )

    final_replicas: dict[str, tuple[str, Replica]] = {}
    last_spawned_result: dict[str, list[str]] = {}  # client id -> record ids

    for actor, records in sorted(traces.items()):
        for segment in _segments(records):
            replica = Replica(role="AR_CLIENT")
            client_id: str | None = None
            seen_versions: dict[str, int] = {}
            last_seq_by_sender: dict[str, int] = {}
            is_final = False
            pending_spawn_requests: dict[str, bool] = {}
            for record in segment:
                if record.get("event") == "final":
                    is_final = True
                    continue
                if record.get("event") == "disconnect":
                    break
                frame = record.get("frame")
                if frame is None:
                    continue
                if record.get("dir") == "sent":
                    if frame.get("type") == "QUERY_SUBMIT":
                        payload = frame.get("payload", {})
                        pending_spawn_requests[payload.get("request_id", "")] = payload.get(
                            "spawn", True
                        )
                    continue
                env = decode(json.dumps(frame))
                # causality: per-sender seq strictly increases on this connection
                sender = env.sender
                last = last_seq_by_sender.get(sender)
                if last is not None and env.seq <= last:
                    report.add(
                        "causality",
                        actor,
                        f"sender {sender} seq {env.seq} after {last}",
                    )
                last_seq_by_sender[sender] = env.seq

                payload = env.payload
                if isinstance(payload, Welcome):
                    client_id = payload.client_id
                    for obj in payload.snapshot:
                        if obj.scope == SCOPE_PRIVATE and obj.owner != client_id:
                            report.add(
                                "privacy",
                                actor,
                                f"snapshot leaked PRIVATE object owned by {obj.owner}",
                                obj.object_id,
                            )
                        _check_version(report, actor, seen_versions, obj.object_id, obj.version)
                elif isinstance(payload, ObjectSpawn):
                    obj = payload.object
                    if obj.scope == SCOPE_PRIVATE and obj.owner != client_id:
                        report.add(
                            "privacy",
                            actor,
                            f"received PRIVATE object owned by {obj.owner}",
                            obj.object_id,
                        )
                    _check_version(report, actor, seen_versions, obj.object_id, obj.version)
                elif isinstance(payload, ObjectUpdate):
                    _check_version(report, actor, seen_versions, payload.object_id, payload.version)
                elif isinstance(payload, QueryResult):
                    if pending_spawn_requests.get(payload.request_id, False) and client_id:
                        last_spawned_result[client_id] = sorted(r.id for r in payload.records)
                apply_envelope(replica, env)
            if is_final and client_id is not None:
                final_replicas[actor] = (client_id, replica)

    # convergence of finally-connected replicas against the server dump
    for actor, (client_id, replica) in sorted(final_replicas.items()):
        replica_shared = _canonical_objects(
            {oid: object_json(o) for oid, o in replica.shared_objects().items()}
        )
        for oid in sorted(set(dump_shared) | set(replica_shared)):
            if oid not in replica_shared:
                report.add("divergence", actor, "missing SHARED object", oid)
            elif oid not in dump_shared:
                report.add("divergence", actor, "extra SHARED object", oid)
            elif replica_shared[oid] != dump_shared[oid]:
                report.add("divergence", actor, "SHARED object differs from server", oid)
        dump_private = _canonical_objects(
            {
                oid: o
                for oid, o in dump_objects.items()
                if o["scope"] == SCOPE_PRIVATE and o["owner"] == client_id
            }
        )
        replica_private = _canonical_objects(
            {oid: object_json(o) for oid, o in replica.private_objects().items()}
        )
        for oid in sorted(set(dump_private) | set(replica_private)):
            if replica_private.get(oid) != dump_private.get(oid):
                report.add("divergence", actor, "PRIVATE set differs from server", oid)

    # single result layer: dump bookkeeping vs dump markers vs last results
    layers = dump.get("result_layers", {})
    markers_by_requester: dict[str, list[str]] = {}
    for oid, obj in dump_objects.items():
        if obj["kind"] == "VESSEL_MARKER":
            requester = obj.get("attrs", {}).get("requester", "")
            markers_by_requester.setdefault(requester, []).append(
                obj.get("attrs", {}).get("record_id", "")
            )
    for requester, record_ids in sorted(layers.items()):
        actual = sorted(markers_by_requester.get(requester, []))
        if actual != sorted(record_ids):
            report.add(
                "result_layer",
                requester,
                f"markers {actual} != layer {sorted(record_ids)}",
            )
        if requester in last_spawned_result and sorted(record_ids) != last_spawned_result[requester]:
            report.add(
                "result_layer",
                requester,
                f"layer {sorted(record_ids)} != last spawned result {last_spawned_result[requester]}",
            )
    for requester, record_ids in sorted(markers_by_requester.items()):
        if requester not in layers:
            report.add("result_layer", requester, f"markers {sorted(record_ids)} without a layer")
    return report


def _check_version(
    report: Report, actor: str, seen: dict[str, int], object_id: str, version: int
) -> None:
    last = seen.get(object_id)
    if last is not None and version <= last:
        report.add(
            "version_monotonicity",
            actor,
            f"version {version} after {last}",
            object_id,
        )
    seen[object_id] = version


def load_traces(directory: str | Path) -> dict[str, list[dict]]:
    """Load every *.jsonl trace in a directory, grouped by actor."""
    traces: dict[str, list[dict]] = {}
    for path in sorted(Path(directory).glob("*.jsonl")):
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                record = json.loads(line)
                traces.setdefault(record.get("actor", "?"), []).append(record)
    return traces
