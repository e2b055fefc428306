"""Coordinate math shared by every entity.

Spherical web-Mercator projection, map-view <-> screen-pixel mapping and the
QR-anchored screen <-> AR-world transform. Everything here is pure and
stateless; the batch variants used on hot paths live in
:mod:`surface_sync.kernels`.

Conventions (worked examples in docs/coordinates.md):

* Web Mercator on a sphere of radius ``R = 6378137`` m; usable latitude band
  ``|lat| <= 85.05112878`` degrees.
* Web-map zoom with 256 px tiles: the world square is ``256 * 2**zoom``
  pixels wide; zoom may be fractional.
* Screen pixels: x right, y down, origin at the top-left corner.
* ``orientation_deg`` is the map bearing: content rotates clockwise on
  screen about the screen centre as the bearing grows.
* AR world frame: right-handed, metres. The table plane is spanned by an
  east axis ``u`` and a north axis ``v`` with ``table_normal = u x v``
  pointing up out of the table. Screen y points south on the table, so a
  screen offset ``(dx, dy)`` embeds as ``dx*u - dy*v``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

MERCATOR_RADIUS = 6378137.0
ORIGIN_SHIFT = math.pi * MERCATOR_RADIUS  # 20037508.342789244
MAX_MERCATOR_LAT = 85.05112878
TILE_SIZE = 256.0

# Projecting the nominal band edge overshoots pi*R by ~2.5e-4 m (the clamp
# constant is a rounded-up decimal), so the Mercator square gets that much
# slack and unproject clamps back inside before inverting.
_MERCATOR_SLACK_M = 1e-3
_UNIT_EPS = 1e-12


class LatOutOfRange(ValueError):
    """Latitude outside the usable Mercator band."""


class OutOfBounds(ValueError):
    """Mercator metres outside the world square."""


class OutOfBand(ValueError):
    """Screen position whose inverse latitude leaves the Mercator band."""


class DegenerateQR(ValueError):
    """QR calibration input with a non-positive side length."""


def _norm_lon(lon: float) -> float:
    """Normalize a longitude in degrees into [-180, 180].

    Values already inside pass through, so the antimeridian keeps distinct
    west (-180) and east (+180) representations; bounds edges and Mercator
    round-trips need both.
    """
    if -180.0 <= lon <= 180.0:
        return lon
    return (lon - 180.0) % -360.0 + 180.0


@dataclass(frozen=True, slots=True)
class GeoPoint:
    """Geographic position in degrees; lon normalized into [-180, 180]."""

    lat: float
    lon: float

    def __post_init__(self) -> None:
        if not -90.0 <= self.lat <= 90.0:
            raise LatOutOfRange(f"lat {self.lat} outside [-90, 90]")
        if not math.isfinite(self.lon):
            raise ValueError(f"lon {self.lon} not finite")
        object.__setattr__(self, "lon", _norm_lon(float(self.lon)))
        object.__setattr__(self, "lat", float(self.lat))


def clamp_mercator(p: GeoPoint) -> GeoPoint:
    """Clamp latitude into the Mercator-safe band; lon is untouched."""
    lat = min(max(p.lat, -MAX_MERCATOR_LAT), MAX_MERCATOR_LAT)
    return GeoPoint(lat, p.lon) if lat != p.lat else p


@dataclass(frozen=True, slots=True)
class GeoBounds:
    """Visible region between a north-west and a south-east corner.

    Antimeridian wrap must be flagged explicitly and is rejected by the
    datastore and the query validator in v1.
    """

    north_west: GeoPoint
    south_east: GeoPoint
    wrap: bool = False

    def __post_init__(self) -> None:
        if self.north_west.lat < self.south_east.lat:
            raise ValueError("north_west.lat must be >= south_east.lat")
        if not self.wrap and self.north_west.lon > self.south_east.lon:
            raise ValueError("west edge east of east edge without wrap flag")

    def contains(self, p: GeoPoint) -> bool:
        """Inclusive containment (boundary points count as inside)."""
        if not self.south_east.lat <= p.lat <= self.north_west.lat:
            return False
        if self.wrap:
            return p.lon >= self.north_west.lon or p.lon <= self.south_east.lon
        return self.north_west.lon <= p.lon <= self.south_east.lon

    def center(self) -> GeoPoint:
        lat = (self.north_west.lat + self.south_east.lat) / 2.0
        if self.wrap:
            span = (self.south_east.lon - self.north_west.lon) % 360.0
            return GeoPoint(lat, self.north_west.lon + span / 2.0)
        return GeoPoint(lat, (self.north_west.lon + self.south_east.lon) / 2.0)


@dataclass(frozen=True, slots=True)
class MercatorMeters:
    """Projected position in metres on the web-Mercator square."""

    x: float
    y: float

    def __post_init__(self) -> None:
        limit = ORIGIN_SHIFT + _MERCATOR_SLACK_M
        if abs(self.x) > limit or abs(self.y) > limit:
            raise OutOfBounds(f"({self.x}, {self.y}) outside Mercator square")


def project_mercator(p: GeoPoint) -> MercatorMeters:
    """Forward spherical web-Mercator projection, degrees to metres."""
    if abs(p.lat) > MAX_MERCATOR_LAT:
        raise LatOutOfRange(f"lat {p.lat} outside Mercator band")
    x = MERCATOR_RADIUS * math.radians(p.lon)
    y = MERCATOR_RADIUS * math.log(math.tan(math.pi / 4.0 + math.radians(p.lat) / 2.0))
    return MercatorMeters(x, y)


def unproject_mercator(m: MercatorMeters) -> GeoPoint:
    """Analytic inverse of :func:`project_mercator`.

    Inputs are clamped into the exact world square first so the band-edge
    slack never produces a wrapped longitude or an out-of-range latitude.
    """
    x = min(max(m.x, -ORIGIN_SHIFT), ORIGIN_SHIFT)
    y = min(max(m.y, -ORIGIN_SHIFT), ORIGIN_SHIFT)
    # x/R can round a hair past pi; keep the antimeridian at +/-180
    lon = min(max(math.degrees(x / MERCATOR_RADIUS), -180.0), 180.0)
    lat = math.degrees(2.0 * math.atan(math.exp(y / MERCATOR_RADIUS)) - math.pi / 2.0)
    return GeoPoint(lat, lon)


def norm_mercator(p: GeoPoint) -> tuple[float, float]:
    """Map a point onto the unit Mercator square; (0,0) is north-west."""
    if abs(p.lat) > MAX_MERCATOR_LAT:
        raise LatOutOfRange(f"lat {p.lat} outside Mercator band")
    nx = (p.lon + 180.0) / 360.0
    ny = (1.0 - math.log(math.tan(math.pi / 4.0 + math.radians(p.lat) / 2.0)) / math.pi) / 2.0
    return nx, ny


def _unnorm_mercator(nx: float, ny: float) -> GeoPoint:
    """Inverse of norm_mercator; nx wraps, ny must stay within [0, 1]."""
    if ny < -_UNIT_EPS or ny > 1.0 + _UNIT_EPS:
        raise OutOfBand(f"normalized y {ny} outside the Mercator band")
    ny = min(max(ny, 0.0), 1.0)
    y_m = (1.0 - 2.0 * ny) * ORIGIN_SHIFT
    lat = math.degrees(2.0 * math.atan(math.exp(y_m / MERCATOR_RADIUS)) - math.pi / 2.0)
    lon = (nx % 1.0) * 360.0 - 180.0
    return GeoPoint(lat, lon)


def world_size_px(zoom: float) -> float:
    """Pixel width of the world square at a (possibly fractional) zoom."""
    return TILE_SIZE * 2.0**zoom


@dataclass(frozen=True, slots=True)
class ViewState:
    """The shared map camera: bounds, centre, zoom, bearing, screen size.

    Construct through :meth:`from_center` (or :meth:`with_camera`) so the
    stored bounds always agree with the camera parameters; `is_consistent`
    re-derives them and compares within 1e-9 degrees.
    """

    bounds: GeoBounds
    center: GeoPoint
    zoom: float
    orientation_deg: float
    screen_w: float
    screen_h: float

    def __post_init__(self) -> None:
        if self.zoom < 0.0:
            raise ValueError("zoom must be >= 0")
        if self.screen_w <= 0 or self.screen_h <= 0:
            raise ValueError("screen dimensions must be positive")
        # normalize numeric types so wire encoding is canonical
        object.__setattr__(self, "zoom", float(self.zoom))
        object.__setattr__(self, "screen_w", float(self.screen_w))
        object.__setattr__(self, "screen_h", float(self.screen_h))
        object.__setattr__(self, "orientation_deg", float(self.orientation_deg) % 360.0)

    @classmethod
    def from_center(
        cls,
        center: GeoPoint,
        zoom: float,
        screen_w: float,
        screen_h: float,
        orientation_deg: float = 0.0,
    ) -> "ViewState":
        bounds = derive_bounds(center, zoom, screen_w, screen_h, orientation_deg)
        return cls(bounds, center, zoom, orientation_deg % 360.0, screen_w, screen_h)

    def with_camera(
        self,
        center: GeoPoint | None = None,
        zoom: float | None = None,
        orientation_deg: float | None = None,
    ) -> "ViewState":
        """Copy with updated camera parameters and re-derived bounds."""
        return ViewState.from_center(
            center if center is not None else self.center,
            zoom if zoom is not None else self.zoom,
            self.screen_w,
            self.screen_h,
            orientation_deg if orientation_deg is not None else self.orientation_deg,
        )

    def is_consistent(self, tol_deg: float = 1e-9) -> bool:
        derived = derive_bounds(
            self.center, self.zoom, self.screen_w, self.screen_h, self.orientation_deg
        )
        pairs = (
            (derived.north_west, self.bounds.north_west),
            (derived.south_east, self.bounds.south_east),
        )
        return all(
            abs(a.lat - b.lat) <= tol_deg and abs(a.lon - b.lon) <= tol_deg
            for a, b in pairs
        )


def derive_bounds(
    center: GeoPoint,
    zoom: float,
    screen_w: float,
    screen_h: float,
    orientation_deg: float,
) -> GeoBounds:
    """Axis-aligned geographic bbox of the four screen corners.

    Corners falling off the Mercator square (screen larger than the world)
    are clamped onto it, so bounds always describe visible map.
    """
    n0x, n0y = norm_mercator(center)
    world = world_size_px(zoom)
    theta = math.radians(orientation_deg % 360.0)
    c, s = math.cos(theta), math.sin(theta)
    lats: list[float] = []
    lons: list[float] = []
    for px, py in ((0.0, 0.0), (screen_w, 0.0), (0.0, screen_h), (screen_w, screen_h)):
        ox, oy = px - screen_w / 2.0, py - screen_h / 2.0
        dx = (c * ox + s * oy) / world
        dy = (-s * ox + c * oy) / world
        nx = min(max(n0x + dx, 0.0), 1.0)
        ny = min(max(n0y + dy, 0.0), 1.0)
        corner = _unnorm_mercator(nx, ny)
        lats.append(corner.lat)
        # keep raw (unwrapped) lon so west <= east even at the 180 meridian
        lons.append(nx * 360.0 - 180.0)
    return GeoBounds(
        GeoPoint(max(lats), min(lons)), GeoPoint(min(lats), max(lons))
    )


def geo_to_screen(view: ViewState, p: GeoPoint) -> tuple[float, float]:
    """Screen pixel of a geographic point; may land off-screen (no clipping)."""
    nx, ny = norm_mercator(p)
    n0x, n0y = norm_mercator(view.center)
    world = world_size_px(view.zoom)
    dx = (nx - n0x) * world
    dy = (ny - n0y) * world
    theta = math.radians(view.orientation_deg)
    c, s = math.cos(theta), math.sin(theta)
    return (
        view.screen_w / 2.0 + c * dx - s * dy,
        view.screen_h / 2.0 + s * dx + c * dy,
    )


def screen_to_geo(view: ViewState, px: tuple[float, float]) -> GeoPoint:
    """Inverse of :func:`geo_to_screen` on the visible Mercator band."""
    ox = px[0] - view.screen_w / 2.0
    oy = px[1] - view.screen_h / 2.0
    theta = math.radians(view.orientation_deg)
    c, s = math.cos(theta), math.sin(theta)
    world = world_size_px(view.zoom)
    dx = (c * ox + s * oy) / world
    dy = (-s * ox + c * oy) / world
    n0x, n0y = norm_mercator(view.center)
    return _unnorm_mercator(n0x + dx, n0y + dy)


Vec3 = tuple[float, float, float]


def _normalize3(v: Vec3) -> Vec3:
    n = math.sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2])
    if n < _UNIT_EPS:
        raise ValueError("zero-length vector")
    return (v[0] / n, v[1] / n, v[2] / n)


def _cross3(a: Vec3, b: Vec3) -> Vec3:
    return (
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    )


def plane_basis(normal: Vec3) -> tuple[Vec3, Vec3]:
    """In-plane east/north axes (u, v) with u x v = normal.

    u is the world X axis projected onto the plane (world Y when the normal
    is parallel to X), so identical normals always give identical frames.
    """
    n = _normalize3(normal)
    for ref in ((1.0, 0.0, 0.0), (0.0, 1.0, 0.0)):
        dot = ref[0] * n[0] + ref[1] * n[1] + ref[2] * n[2]
        u = (ref[0] - dot * n[0], ref[1] - dot * n[1], ref[2] - dot * n[2])
        norm_u = math.sqrt(u[0] * u[0] + u[1] * u[1] + u[2] * u[2])
        if norm_u > 1e-6:
            u = (u[0] / norm_u, u[1] / norm_u, u[2] / norm_u)
            return u, _cross3(n, u)
    raise ValueError("degenerate normal")  # pragma: no cover


@dataclass(frozen=True, slots=True)
class AnchorCalibration:
    """Screen-pixel to AR-world transform derived from the rendered QR code."""

    origin_world: Vec3
    px_to_m: float
    yaw_deg: float
    qr_screen_px: tuple[float, float]
    table_normal: Vec3 = (0.0, 0.0, 1.0)

    def __post_init__(self) -> None:
        if self.px_to_m <= 0.0:
            raise DegenerateQR("px_to_m must be positive")
        n = self.table_normal
        if abs(math.sqrt(n[0] ** 2 + n[1] ** 2 + n[2] ** 2) - 1.0) > 1e-9:
            raise ValueError("table_normal must have unit length")


def calibrate_anchor(
    qr_world_origin: Vec3,
    qr_world_yaw_deg: float,
    qr_screen_px: tuple[float, float],
    qr_rendered_side_px: float,
    qr_physical_side_m: float,
    table_normal: Vec3 = (0.0, 0.0, 1.0),
) -> AnchorCalibration:
    """Build the anchor transform from the QR pose and its two side lengths."""
    if qr_rendered_side_px <= 0.0 or qr_physical_side_m <= 0.0:
        raise DegenerateQR("QR side lengths must be positive")
    return AnchorCalibration(
        origin_world=(float(qr_world_origin[0]), float(qr_world_origin[1]), float(qr_world_origin[2])),
        px_to_m=qr_physical_side_m / qr_rendered_side_px,
        yaw_deg=float(qr_world_yaw_deg),
        qr_screen_px=(float(qr_screen_px[0]), float(qr_screen_px[1])),
        table_normal=_normalize3(table_normal),
    )


def screen_to_world(
    c: AnchorCalibration, px: tuple[float, float], altitude_m: float = 0.0
) -> Vec3:
    """Lift a screen pixel onto the table plane and offset along the normal."""
    sx = (px[0] - c.qr_screen_px[0]) * c.px_to_m
    sy = (px[1] - c.qr_screen_px[1]) * c.px_to_m
    # screen y points south on the table: flip before the in-plane yaw
    fx, fy = sx, -sy
    yaw = math.radians(c.yaw_deg)
    cy, sy_ = math.cos(yaw), math.sin(yaw)
    wx = cy * fx - sy_ * fy
    wy = sy_ * fx + cy * fy
    u, v = plane_basis(c.table_normal)
    n = c.table_normal
    o = c.origin_world
    return (
        o[0] + wx * u[0] + wy * v[0] + altitude_m * n[0],
        o[1] + wx * u[1] + wy * v[1] + altitude_m * n[1],
        o[2] + wx * u[2] + wy * v[2] + altitude_m * n[2],
    )


def geo_to_ar(
    c: AnchorCalibration, view: ViewState, p: GeoPoint, altitude_m: float = 0.0
) -> Vec3:
    """World position of a geographic point above the table.

    This is the composition every AR client applies to place holograms:
    map the point through the shared view to screen pixels, then through the
    QR anchor onto the table plane.
    """
    return screen_to_world(c, geo_to_screen(view, p), altitude_m)


def view_screen_affine(view: ViewState) -> tuple[float, float, float, float, float, float]:
    """Fold a view into px = (c0, c1) + M @ (nx, ny) for the batch kernels."""
    n0x, n0y = norm_mercator(view.center)
    world = world_size_px(view.zoom)
    theta = math.radians(view.orientation_deg)
    ct, st = math.cos(theta), math.sin(theta)
    m00, m01 = ct * world, -st * world
    m10, m11 = st * world, ct * world
    c0 = view.screen_w / 2.0 - m00 * n0x - m01 * n0y
    c1 = view.screen_h / 2.0 - m10 * n0x - m11 * n0y
    return (m00, m01, m10, m11, c0, c1)


def placement_affine(
    c: AnchorCalibration, view: ViewState
) -> tuple[float, float, float, float, float, float, float, float, float, float, float, float]:
    """Fold view + calibration into one affine map for the batch kernels.

    world = base + T @ (nx, ny) + altitude * normal, with (nx, ny) the unit
    Mercator square coordinates. Matches geo_to_ar to float rounding.
    """
    n0x, n0y = norm_mercator(view.center)
    world = world_size_px(view.zoom)
    theta = math.radians(view.orientation_deg)
    ct, st = math.cos(theta), math.sin(theta)
    # screen px of a point: p = center_px + Rs @ (n - n0) * world
    m00, m01 = ct * world, -st * world
    m10, m11 = st * world, ct * world
    cx = view.screen_w / 2.0
    cy = view.screen_h / 2.0
    # world planar components: w2 = Ryaw @ F @ px_to_m @ (p - q)
    yaw = math.radians(c.yaw_deg)
    cyw, syw = math.cos(yaw), math.sin(yaw)
    k = c.px_to_m
    # A = Ryaw @ diag(1,-1) * k   (2x2, applied to pixel offsets)
    a00, a01 = cyw * k, syw * k
    a10, a11 = syw * k, -cyw * k
    u, v = plane_basis(c.table_normal)
    # E = [u v] @ A   (3x2, pixel offsets -> world metres)
    e = [
        (u[i] * a00 + v[i] * a10, u[i] * a01 + v[i] * a11)
        for i in range(3)
    ]
    # T = E @ M, base = origin + E @ (center_px - q) - T @ n0
    t = [
        (e[i][0] * m00 + e[i][1] * m10, e[i][0] * m01 + e[i][1] * m11)
        for i in range(3)
    ]
    dqx = cx - c.qr_screen_px[0]
    dqy = cy - c.qr_screen_px[1]
    base = [
        c.origin_world[i] + e[i][0] * dqx + e[i][1] * dqy - t[i][0] * n0x - t[i][1] * n0y
        for i in range(3)
    ]
    n = c.table_normal
    return (
        t[0][0], t[0][1], t[1][0], t[1][1], t[2][0], t[2][1],
        base[0], base[1], base[2], n[0], n[1], n[2],
    )
