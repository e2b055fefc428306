"""TUIO 1.1 input: OSC bundle decoding, cursor tracking and map gestures.

Decodes `/tuio/2Dcur` and `/tuio/2Dobj` bundles (OSC 1.0 layout: big-endian
32-bit ints/floats, NUL-padded strings on 4-byte boundaries), diffs alive
sets into ADDED/MOVED/REMOVED touch events, and turns those into pan/zoom
view updates or tangible-object region selections.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field

from surface_sync.geo import (
    GeoBounds,
    GeoPoint,
    ViewState,
    _unnorm_mercator,
    norm_mercator,
    world_size_px,
)

DEFAULT_PORT = 3333
PROFILES = ("2Dcur", "2Dobj")

ADDED = "ADDED"
MOVED = "MOVED"
REMOVED = "REMOVED"


class NotOscBundle(ValueError):
    pass


class UnknownProfile(ValueError):
    def __init__(self, address: str):
        self.address = address
        super().__init__(f"not a TUIO 1.1 profile: {address!r}")


class Malformed(ValueError):
    def __init__(self, offset: int, reason: str):
        self.offset = offset
        self.reason = reason
        super().__init__(f"malformed at byte {offset}: {reason}")


@dataclass(frozen=True, slots=True)
class TuioCursor:
    session_id: int
    x: float
    y: float
    vx: float = 0.0
    vy: float = 0.0
    accel: float = 0.0


@dataclass(frozen=True, slots=True)
class TuioObject:
    session_id: int
    class_id: int
    x: float
    y: float
    angle: float = 0.0
    vx: float = 0.0
    vy: float = 0.0
    rot_vel: float = 0.0
    accel: float = 0.0
    rot_accel: float = 0.0


@dataclass(frozen=True, slots=True)
class TuioFrame:
    profile: str
    alive: frozenset[int]
    set_events: tuple[TuioCursor | TuioObject, ...]
    fseq: int


# -- OSC parsing ---------------------------------------------------------------


def _read_string(data: bytes, offset: int) -> tuple[str, int]:
    end = data.find(b"\0", offset)
    if end < 0:
        raise Malformed(offset, "unterminated string")
    try:
        text = data[offset:end].decode("ascii")
    except UnicodeDecodeError:
        raise Malformed(offset, "non-ASCII string") from None
    advance = (end - offset) // 4 * 4 + 4
    if offset + advance > len(data):
        raise Malformed(offset, "string padding past end")
    return text, offset + advance


def _read_message(data: bytes) -> tuple[str, list]:
    address, offset = _read_string(data, 0)
    if not address.startswith("/"):
        raise Malformed(0, "address must start with /")
    tags, offset = _read_string(data, offset)
    if not tags.startswith(","):
        raise Malformed(offset, "type tags must start with ,")
    args: list = []
    for tag in tags[1:]:
        if tag == "i":
            if offset + 4 > len(data):
                raise Malformed(offset, "truncated int32")
            args.append(struct.unpack_from(">i", data, offset)[0])
            offset += 4
        elif tag == "f":
            if offset + 4 > len(data):
                raise Malformed(offset, "truncated float32")
            args.append(struct.unpack_from(">f", data, offset)[0])
            offset += 4
        elif tag == "s":
            text, offset = _read_string(data, offset)
            args.append(text)
        else:
            raise Malformed(offset, f"unsupported OSC type tag {tag!r}")
    return address, args


def _iter_bundle_elements(packet: bytes):
    offset = 16  # "#bundle\0" + 8-byte timetag
    while offset < len(packet):
        if offset + 4 > len(packet):
            raise Malformed(offset, "truncated element size")
        (size,) = struct.unpack_from(">i", packet, offset)
        offset += 4
        if size < 0 or offset + size > len(packet):
            raise Malformed(offset, "element size out of range")
        if size % 4:
            raise Malformed(offset, "element size not 4-byte aligned")
        yield offset, packet[offset : offset + size]
        offset += size


_SET_LAYOUT = {
    # profile -> (arg types after "set", constructor)
    "2Dcur": ((int, float, float, float, float, float), TuioCursor),
    "2Dobj": ((int, int, float, float, float, float, float, float, float, float), TuioObject),
}


def decode_osc(packet: bytes) -> TuioFrame:
    """Decode one OSC bundle into a TuioFrame.

    Requires the TUIO 1.1 frame shape: alive and fseq present, one profile
    per bundle, every `set` session id announced in alive, coordinates
    inside the unit square.
    """
    if not isinstance(packet, (bytes, bytearray)) or not packet.startswith(b"#bundle\0"):
        raise NotOscBundle("missing #bundle header")
    if len(packet) < 16:
        raise Malformed(len(packet), "bundle shorter than header + timetag")
    profile: str | None = None
    alive: frozenset[int] | None = None
    fseq: int | None = None
    set_events: list[TuioCursor | TuioObject] = []
    for offset, raw in _iter_bundle_elements(bytes(packet)):
        if raw.startswith(b"#bundle\0"):
            raise Malformed(offset, "nested bundles unsupported")
        try:
            address, args = _read_message(raw)
        except Malformed as e:
            raise Malformed(offset + e.offset, e.reason) from None
        if address not in ("/tuio/2Dcur", "/tuio/2Dobj"):
            raise UnknownProfile(address)
        msg_profile = address.rsplit("/", 1)[1]
        if profile is None:
            profile = msg_profile
        elif profile != msg_profile:
            raise Malformed(offset, "mixed profiles in one bundle")
        if not args or not isinstance(args[0], str):
            raise Malformed(offset, "missing command string")
        command, rest = args[0], args[1:]
        if command == "source":
            continue
        if command == "alive":
            if alive is not None:
                raise Malformed(offset, "duplicate alive")
            if not all(isinstance(a, int) for a in rest):
                raise Malformed(offset, "alive ids must be int32")
            alive = frozenset(rest)
        elif command == "fseq":
            if fseq is not None:
                raise Malformed(offset, "duplicate fseq")
            if len(rest) != 1 or not isinstance(rest[0], int):
                raise Malformed(offset, "fseq needs one int32")
            fseq = rest[0]
        elif command == "set":
            types, ctor = _SET_LAYOUT[msg_profile]
            if len(rest) != len(types) or not all(
                isinstance(a, t) for a, t in zip(rest, types)
            ):
                raise Malformed(offset, f"bad set arguments for {msg_profile}")
            event = ctor(*rest)
            if not (0.0 <= event.x <= 1.0 and 0.0 <= event.y <= 1.0):
                raise Malformed(offset, "coordinates outside [0, 1]")
            set_events.append(event)
        else:
            raise Malformed(offset, f"unknown command {command!r}")
    if alive is None:
        raise Malformed(len(packet), "bundle lacks alive")
    if fseq is None:
        raise Malformed(len(packet), "bundle lacks fseq")
    if profile is None:
        profile = "2Dcur"
    for event in set_events:
        if event.session_id not in alive:
            raise Malformed(len(packet), f"set names session {event.session_id} not in alive")
    return TuioFrame(profile, alive, tuple(set_events), fseq)


# -- tracking ------------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class TouchPointState:
    session_id: int
    phase: str  # ADDED | MOVED | REMOVED
    pos_px: tuple[float, float]
    kind: str = "cursor"  # cursor | object
    class_id: int | None = None


class TouchTracker:
    """Diffs TUIO frames into touch lifecycle events, scaled to screen pixels.

    Frames with a regressed or repeated fseq are dropped (TUIO frames carry
    full state; the latest wins); fseq -1 is out-of-band and always applies.
    An id announced alive but never `set` stays pending until its first set.
    """

    def __init__(self, screen_w: float, screen_h: float):
        self.screen_w = screen_w
        self.screen_h = screen_h
        self._known: dict[int, TouchPointState] = {}
        self._last_fseq: int | None = None

    def feed(self, frame: TuioFrame) -> list[TouchPointState]:
        if frame.fseq != -1:
            if self._last_fseq is not None and frame.fseq <= self._last_fseq:
                return []
            self._last_fseq = frame.fseq
        events: list[TouchPointState] = []
        for session_id in sorted(self._known):
            if session_id not in frame.alive:
                prev = self._known.pop(session_id)
                events.append(
                    TouchPointState(session_id, REMOVED, prev.pos_px, prev.kind, prev.class_id)
                )
        for ev in frame.set_events:
            pos = (ev.x * self.screen_w, ev.y * self.screen_h)
            kind = "object" if isinstance(ev, TuioObject) else "cursor"
            class_id = ev.class_id if isinstance(ev, TuioObject) else None
            phase = MOVED if ev.session_id in self._known else ADDED
            state = TouchPointState(ev.session_id, phase, pos, kind, class_id)
            self._known[ev.session_id] = state
            events.append(state)
        return events


# -- gestures ------------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class RegionSelect:
    """A tangible placement interpreted as a square region selection."""

    region: GeoBounds
    screen_px: tuple[float, float]


class GestureRecognizer:
    """Minimal pan / pinch-zoom / tangible-select recognizer.

    One cursor drags the map; two cursors pinch-zoom about their midpoint
    once both have moved more than `pinch_engage_px`; frames with three or
    more cursors are ignored. Emitted views are always consistent.
    """

    def __init__(
        self,
        view: ViewState,
        region_side_deg: float = 2.0,
        pinch_engage_px: float = 3.0,
    ):
        self.view = view
        self.region_side_deg = region_side_deg
        self.pinch_engage_px = pinch_engage_px
        self._cursors: dict[int, tuple[float, float]] = {}
        self._pinch_start: dict[int, tuple[float, float]] | None = None
        self._pinch_engaged = False
        self._pinch_prev: float | None = None

    def set_view(self, view: ViewState) -> None:
        """Adopt an externally authoritative view (e.g. an SD update)."""
        self.view = view

    def _begin_pinch(self) -> None:
        self._pinch_start = dict(self._cursors)
        self._pinch_engaged = False
        self._pinch_prev = None

    def _apply_pan(self, dx_px: float, dy_px: float) -> ViewState:
        view = self.view
        theta = math.radians(view.orientation_deg)
        c, s = math.cos(theta), math.sin(theta)
        world = world_size_px(view.zoom)
        n0x, n0y = norm_mercator(view.center)
        # content follows the finger: centre moves opposite the drag
        nx = n0x - (c * dx_px + s * dy_px) / world
        ny = n0y - (-s * dx_px + c * dy_px) / world
        center = _unnorm_mercator(nx, min(max(ny, 0.0), 1.0))
        return view.with_camera(center=center)

    def _apply_zoom(self, dz: float, mid_px: tuple[float, float]) -> ViewState:
        # keep the geography under the pinch midpoint fixed while zooming
        view = self.view
        zoom = max(view.zoom + dz, 0.0)
        theta = math.radians(view.orientation_deg)
        c, s = math.cos(theta), math.sin(theta)
        ox = mid_px[0] - view.screen_w / 2.0
        oy = mid_px[1] - view.screen_h / 2.0
        ux = c * ox + s * oy
        uy = -s * ox + c * oy
        n0x, n0y = norm_mercator(view.center)
        anchor_x = n0x + ux / world_size_px(view.zoom)
        anchor_y = n0y + uy / world_size_px(view.zoom)
        nx = anchor_x - ux / world_size_px(zoom)
        ny = anchor_y - uy / world_size_px(zoom)
        center = _unnorm_mercator(nx, min(max(ny, 0.0), 1.0))
        return view.with_camera(center=center, zoom=zoom)

    def feed(self, events: list[TouchPointState]) -> list[ViewState | RegionSelect]:
        out: list[ViewState | RegionSelect] = []
        moved: dict[int, tuple[tuple[float, float], tuple[float, float]]] = {}
        for ev in events:
            if ev.kind == "object":
                if ev.phase == ADDED:
                    out.append(self._select_region(ev.pos_px))
                continue
            if ev.phase == REMOVED:
                self._cursors.pop(ev.session_id, None)
                self._pinch_start = None
                self._pinch_engaged = False
            elif ev.phase == ADDED:
                self._cursors[ev.session_id] = ev.pos_px
                if len(self._cursors) == 2:
                    self._begin_pinch()
            else:  # MOVED
                prev = self._cursors.get(ev.session_id)
                if prev is not None:
                    moved[ev.session_id] = (prev, ev.pos_px)
                self._cursors[ev.session_id] = ev.pos_px

        if len(self._cursors) == 1 and moved:
            (prev, cur) = next(iter(moved.values()))
            view = self._apply_pan(cur[0] - prev[0], cur[1] - prev[1])
            self.view = view
            out.append(view)
        elif len(self._cursors) == 2 and moved:
            ids = sorted(self._cursors)
            a, b = self._cursors[ids[0]], self._cursors[ids[1]]
            if not self._pinch_engaged and self._pinch_start is not None:
                start_a = self._pinch_start.get(ids[0])
                start_b = self._pinch_start.get(ids[1])
                if start_a and start_b:
                    if (
                        math.dist(start_a, a) > self.pinch_engage_px
                        and math.dist(start_b, b) > self.pinch_engage_px
                    ):
                        # engage: apply the full ratio since the two-cursor
                        # start so no separation change is lost
                        self._pinch_engaged = True
                        d0 = math.dist(start_a, start_b)
                        d1 = math.dist(a, b)
                        if d0 > 0 and d1 > 0:
                            mid = ((a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0)
                            view = self._apply_zoom(math.log2(d1 / d0), mid)
                            self.view = view
                            out.append(view)
                        self._pinch_prev = d1
            elif self._pinch_engaged:
                d1 = math.dist(a, b)
                if self._pinch_prev and d1 > 0:
                    mid = ((a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0)
                    view = self._apply_zoom(math.log2(d1 / self._pinch_prev), mid)
                    self.view = view
                    out.append(view)
                self._pinch_prev = d1
        return out

    def _select_region(self, pos_px: tuple[float, float]) -> RegionSelect:
        center = screen_to_geo_clamped(self.view, pos_px)
        half = self.region_side_deg / 2.0
        north = min(center.lat + half, 90.0)
        south = max(center.lat - half, -90.0)
        west = max(center.lon - half, -180.0)
        east = min(center.lon + half, 180.0)
        return RegionSelect(
            GeoBounds(GeoPoint(north, west), GeoPoint(south, east)), pos_px
        )


def screen_to_geo_clamped(view: ViewState, px: tuple[float, float]) -> GeoPoint:
    """screen_to_geo that clamps poleward overshoot instead of raising."""
    theta = math.radians(view.orientation_deg)
    c, s = math.cos(theta), math.sin(theta)
    world = world_size_px(view.zoom)
    ox = px[0] - view.screen_w / 2.0
    oy = px[1] - view.screen_h / 2.0
    n0x, n0y = norm_mercator(view.center)
    nx = n0x + (c * ox + s * oy) / world
    ny = n0y + (-s * ox + c * oy) / world
    return _unnorm_mercator(nx, min(max(ny, 0.0), 1.0))
