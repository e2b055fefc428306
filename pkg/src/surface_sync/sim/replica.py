"""Client-side replica: folds received envelopes into local state.

Rendering is replaced by placement computation: every anchored object gets
an AR-world position, recomputed from scratch (batch kernels) whenever the
view, the calibration or the object set changes. Recomputing everything on
any change keeps placements bitwise identical across replicas regardless
of join order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from surface_sync import kernels
from surface_sync.geo import (
    AnchorCalibration,
    ViewState,
    calibrate_anchor,
    clamp_mercator,
    placement_affine,
    screen_to_world,
)
from surface_sync.protocol import (
    ARObjectMsg,
    CalibrationMeta,
    Envelope,
    ErrorMsg,
    Interaction,
    ObjectDespawn,
    ObjectSpawn,
    ObjectUpdate,
    Ping,
    Pong,
    QueryResult,
    SCOPE_PRIVATE,
    SCOPE_SHARED,
    ViewUpdate,
    Welcome,
)

Vec3 = tuple[float, float, float]


@dataclass(frozen=True, slots=True)
class QrPose:
    """Where this client sees the QR code in its own AR world frame."""

    origin_world: Vec3 = (0.0, 0.0, 0.0)
    yaw_deg: float = 0.0
    table_normal: Vec3 = (0.0, 0.0, 1.0)


@dataclass(slots=True)
class Replica:
    role: str
    qr_pose: QrPose | None = None
    client_id: str | None = None
    view: ViewState | None = None
    objects: dict[str, ARObjectMsg] = field(default_factory=dict)
    placements: dict[str, Vec3] = field(default_factory=dict)
    calibration: AnchorCalibration | None = None
    calibration_meta: CalibrationMeta | None = None
    last_result: QueryResult | None = None
    errors: list[ErrorMsg] = field(default_factory=list)
    forwarded_regions: list[Interaction] = field(default_factory=list)
    stale_drops: int = 0
    anomalies: int = 0

    def shared_objects(self) -> dict[str, ARObjectMsg]:
        return {k: v for k, v in self.objects.items() if v.scope == SCOPE_SHARED}

    def private_objects(self) -> dict[str, ARObjectMsg]:
        return {k: v for k, v in self.objects.items() if v.scope == SCOPE_PRIVATE}


def _calibrate(replica: Replica) -> None:
    if replica.qr_pose is None or replica.calibration_meta is None:
        return
    meta = replica.calibration_meta
    pose = replica.qr_pose
    replica.calibration = calibrate_anchor(
        pose.origin_world,
        pose.yaw_deg,
        meta.qr_screen_px,
        meta.qr_rendered_side_px,
        meta.qr_physical_side_m,
        pose.table_normal,
    )


def recompute_placements(replica: Replica) -> None:
    """Place every anchored object; geo anchors go through the batch kernel."""
    replica.placements.clear()
    if replica.calibration is None or replica.view is None:
        return
    geo_ids = [
        oid for oid in sorted(replica.objects) if replica.objects[oid].geo is not None
    ]
    if geo_ids:
        points = [clamp_mercator(replica.objects[oid].geo) for oid in geo_ids]
        lat = np.fromiter((p.lat for p in points), dtype=np.float64)
        lon = np.fromiter((p.lon for p in points), dtype=np.float64)
        alt = np.fromiter(
            (replica.objects[oid].altitude_m for oid in geo_ids), dtype=np.float64
        )
        nx, ny = kernels.norm_mercator_arrays(lat, lon)
        affine = placement_affine(replica.calibration, replica.view)
        xs, ys, zs = kernels.place_arrays(nx, ny, alt, affine)
        for oid, x, y, z in zip(geo_ids, xs, ys, zs):
            replica.placements[oid] = (float(x), float(y), float(z))
    for oid in sorted(replica.objects):
        obj = replica.objects[oid]
        if obj.screen_px is not None:
            replica.placements[oid] = screen_to_world(
                replica.calibration, obj.screen_px, obj.altitude_m
            )


def apply(replica: Replica, env: Envelope) -> Replica:
    """Pure fold: the final replica depends only on the envelope sequence."""
    payload = env.payload
    if isinstance(payload, Welcome):
        replica.client_id = payload.client_id
        replica.view = payload.view
        replica.calibration_meta = payload.calibration
        replica.objects = {o.object_id: o for o in payload.snapshot}
        _calibrate(replica)
        recompute_placements(replica)
    elif isinstance(payload, ViewUpdate):
        replica.view = payload.view
        recompute_placements(replica)
    elif isinstance(payload, ObjectSpawn):
        obj = payload.object
        existing = replica.objects.get(obj.object_id)
        if existing is not None and existing.version >= obj.version:
            replica.stale_drops += 1
        else:
            replica.objects[obj.object_id] = obj
            recompute_placements(replica)
    elif isinstance(payload, ObjectUpdate):
        existing = replica.objects.get(payload.object_id)
        if existing is None:
            replica.anomalies += 1
        elif payload.version <= existing.version:
            replica.stale_drops += 1
        else:
            replica.objects[payload.object_id] = _apply_fields(existing, payload)
            recompute_placements(replica)
    elif isinstance(payload, ObjectDespawn):
        if replica.objects.pop(payload.object_id, None) is None:
            replica.anomalies += 1
        else:
            replica.placements.pop(payload.object_id, None)
    elif isinstance(payload, QueryResult):
        replica.last_result = payload
    elif isinstance(payload, ErrorMsg):
        replica.errors.append(payload)
    elif isinstance(payload, Interaction):
        replica.forwarded_regions.append(payload)
    elif isinstance(payload, (Ping, Pong)):
        pass
    return replica


def _apply_fields(obj: ARObjectMsg, update: ObjectUpdate) -> ARObjectMsg:
    from surface_sync.geo import GeoPoint

    fields = update.fields
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
    return ARObjectMsg(
        obj.object_id,
        obj.kind,
        geo,
        screen_px,
        fields.get("altitude_m", obj.altitude_m),
        obj.scope,
        obj.owner,
        update.version,
        attrs,
    )
