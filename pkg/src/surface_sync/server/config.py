"""Server configuration (TOML) with documented defaults.

Example::

    listen = "127.0.0.1:8787"
    session = "s1"
    session_cap = 32
    arc_height_m = 0.25
    heartbeat_interval_s = 10.0
    send_queue_size = 1024

    [dataset]
    path = "fixtures/vessels_50.csv"
    format = "CSV"

    [tuio]
    bind = "0.0.0.0:3333"

    [qr]
    screen_px = [40.0, 472.0]
    rendered_side_px = 120.0
    physical_side_m = 0.12

    [view]
    center = [0.0, 0.0]
    zoom = 1.0
    screen = [512.0, 512.0]
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from surface_sync.geo import GeoPoint, ViewState
from surface_sync.protocol import (
    HEARTBEAT_INTERVAL_S,
    CalibrationMeta,
)


def _addr(text: str, what: str) -> tuple[str, int]:
    host, sep, port = text.rpartition(":")
    if not sep or not port.isdigit():
        raise ValueError(f"{what} must look like host:port, got {text!r}")
    return host, int(port)


@dataclass(frozen=True, slots=True)
class ServerConfig:
    listen: tuple[str, int] = ("127.0.0.1", 8787)
    session: str = "s1"
    session_cap: int = 32
    arc_height_m: float = 0.25
    heartbeat_interval_s: float = HEARTBEAT_INTERVAL_S
    send_queue_size: int = 1024
    dataset_path: str | None = None
    dataset_format: str = "CSV"
    tuio_bind: tuple[str, int] | None = ("0.0.0.0", 3333)
    qr_screen_px: tuple[float, float] = (40.0, 472.0)
    qr_rendered_side_px: float = 120.0
    qr_physical_side_m: float = 0.12
    view_center: tuple[float, float] = (0.0, 0.0)
    view_zoom: float = 1.0
    view_screen: tuple[float, float] = (512.0, 512.0)

    def calibration_meta(self) -> CalibrationMeta:
        return CalibrationMeta(
            self.qr_screen_px, self.qr_rendered_side_px, self.qr_physical_side_m
        )

    def initial_view(self) -> ViewState:
        return ViewState.from_center(
            GeoPoint(*self.view_center),
            self.view_zoom,
            self.view_screen[0],
            self.view_screen[1],
        )


def load_config(path: str | Path) -> ServerConfig:
    with open(path, "rb") as fh:
        doc = tomllib.load(fh)
    kwargs: dict = {}
    if "listen" in doc:
        kwargs["listen"] = _addr(doc["listen"], "listen")
    for key in ("session", "session_cap", "arc_height_m", "heartbeat_interval_s", "send_queue_size"):
        if key in doc:
            kwargs[key] = doc[key]
    dataset = doc.get("dataset", {})
    if "path" in dataset:
        kwargs["dataset_path"] = dataset["path"]
    if "format" in dataset:
        kwargs["dataset_format"] = dataset["format"]
    tuio = doc.get("tuio", {})
    if "bind" in tuio:
        kwargs["tuio_bind"] = _addr(tuio["bind"], "tuio.bind") if tuio["bind"] else None
    qr = doc.get("qr", {})
    if "screen_px" in qr:
        kwargs["qr_screen_px"] = (float(qr["screen_px"][0]), float(qr["screen_px"][1]))
    if "rendered_side_px" in qr:
        kwargs["qr_rendered_side_px"] = float(qr["rendered_side_px"])
    if "physical_side_m" in qr:
        kwargs["qr_physical_side_m"] = float(qr["physical_side_m"])
    view = doc.get("view", {})
    if "center" in view:
        kwargs["view_center"] = (float(view["center"][0]), float(view["center"][1]))
    if "zoom" in view:
        kwargs["view_zoom"] = float(view["zoom"])
    if "screen" in view:
        kwargs["view_screen"] = (float(view["screen"][0]), float(view["screen"][1]))
    return ServerConfig(**kwargs)
