import math
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from surface_sync.geo import (
    AnchorCalibration,
    DegenerateQR,
    GeoBounds,
    GeoPoint,
    LatOutOfRange,
    MAX_MERCATOR_LAT,
    MercatorMeters,
    ORIGIN_SHIFT,
    OutOfBand,
    OutOfBounds,
    ViewState,
    calibrate_anchor,
    clamp_mercator,
    derive_bounds,
    geo_to_ar,
    geo_to_screen,
    project_mercator,
    screen_to_geo,
    screen_to_world,
    unproject_mercator,
)

# closed-form checks: x = R*pi at lon 180, y = ~R*pi at the clamp latitude
EDGE_M = 20037508.3428

safe_lat = st.floats(-85.0511287798, 85.0511287798, allow_nan=False, allow_infinity=False)
any_lon = st.floats(-180.0, 180.0, allow_nan=False, allow_infinity=False)


def test_project_identity_origin():
    m = project_mercator(GeoPoint(0, 0))
    assert m.x == 0.0
    assert abs(m.y) < 1e-9


def test_project_edge_longitude():
    m = project_mercator(GeoPoint(0, 180))
    assert m.x == pytest.approx(EDGE_M, abs=1e-3)
    assert m.y == pytest.approx(0.0, abs=1e-6)


def test_project_clamp_latitude():
    m = project_mercator(GeoPoint(MAX_MERCATOR_LAT, 0))
    assert m.y == pytest.approx(EDGE_M, abs=1e-3)
    assert m.x == 0.0


def test_project_rejects_out_of_band():
    with pytest.raises(LatOutOfRange):
        project_mercator(GeoPoint(86.0, 0))
    with pytest.raises(LatOutOfRange):
        project_mercator(GeoPoint(-86.0, 0))


def test_unproject_named_point():
    p = unproject_mercator(MercatorMeters(EDGE_M, 0.0))
    assert p.lat == pytest.approx(0.0, abs=1e-7)
    assert p.lon == pytest.approx(180.0, abs=1e-7)


def test_unproject_out_of_bounds():
    with pytest.raises(OutOfBounds):
        MercatorMeters(ORIGIN_SHIFT * 1.01, 0.0)


def test_clamp_mercator():
    assert clamp_mercator(GeoPoint(89.0, 5.0)).lat == MAX_MERCATOR_LAT
    assert clamp_mercator(GeoPoint(-89.0, 5.0)).lat == -MAX_MERCATOR_LAT
    p = GeoPoint(12.0, 5.0)
    assert clamp_mercator(p) is p


@given(safe_lat, any_lon)
@settings(max_examples=1000, deadline=None)
def test_mercator_round_trip(lat, lon):
    p = GeoPoint(lat, lon)
    q = unproject_mercator(project_mercator(p))
    assert abs(q.lat - p.lat) < 1e-9
    assert abs(q.lon - p.lon) < 1e-9


def test_mercator_monotonicity():
    rng = random.Random(7)
    lats = sorted(rng.uniform(-85.0511287798, 85.0511287798) for _ in range(200))
    ys = [project_mercator(GeoPoint(lat, 0)).y for lat in lats]
    assert all(a < b for a, b in zip(ys, ys[1:]))
    lons = sorted(rng.uniform(-180, 180) for _ in range(200))
    xs = [project_mercator(GeoPoint(0, lon)).x for lon in lons]
    assert all(a < b for a, b in zip(xs, xs[1:]))


# -- view <-> screen -------------------------------------------------------------

VIEW = ViewState.from_center(GeoPoint(0, 0), 1, 512, 512, 0)


def test_geo_to_screen_center():
    assert geo_to_screen(VIEW, GeoPoint(0, 0)) == (256.0, 256.0)


def test_geo_to_screen_east_offset():
    # world is 512 px at zoom 1; lon 90 is a quarter world east = +128 px
    assert geo_to_screen(VIEW, GeoPoint(0, 90)) == pytest.approx((384.0, 256.0))


def test_geo_to_screen_rotated():
    view = ViewState.from_center(GeoPoint(0, 0), 1, 512, 512, 90)
    px = geo_to_screen(view, GeoPoint(0, 90))
    assert px == pytest.approx((256.0, 384.0), abs=1e-6)


def test_screen_to_geo_inverse_of_named_points():
    p = screen_to_geo(VIEW, (256, 256))
    assert (p.lat, p.lon) == pytest.approx((0.0, 0.0), abs=1e-9)
    q = screen_to_geo(VIEW, (384, 256))
    assert q.lat == pytest.approx(0.0, abs=1e-7)
    assert q.lon == pytest.approx(90.0, abs=1e-7)


def test_screen_to_geo_out_of_band():
    view = ViewState.from_center(GeoPoint(80, 0), 5, 512, 512, 0)
    with pytest.raises(OutOfBand):
        screen_to_geo(view, (256, -1e7))


@given(
    st.floats(-75, 75),
    st.floats(-170, 170),
    st.floats(1, 12),
    st.floats(0, 360),
    st.floats(-60, 60),
    st.floats(-60, 60),
)
@settings(max_examples=1000, deadline=None)
def test_screen_round_trip(clat, clon, zoom, bearing, dlat, dlon):
    view = ViewState.from_center(GeoPoint(clat, clon), zoom, 800, 600, bearing)
    # build an in-view point by walking a sub-screen pixel offset back to geo
    p = screen_to_geo(view, (400 + dlat, 300 + dlon))
    px = geo_to_screen(view, p)
    q = screen_to_geo(view, px)
    assert abs(q.lat - p.lat) < 1e-9
    assert abs(q.lon - p.lon) < 1e-9
    px2 = geo_to_screen(view, q)
    assert abs(px2[0] - px[0]) < 1e-6
    assert abs(px2[1] - px[1]) < 1e-6


def test_viewstate_consistency_enforced():
    view = ViewState.from_center(GeoPoint(10, 20), 3, 640, 480, 45)
    assert view.is_consistent()
    broken = ViewState(
        derive_bounds(GeoPoint(0, 0), 1, 640, 480, 0.0),
        GeoPoint(10, 20),
        3,
        45,
        640,
        480,
    )
    assert not broken.is_consistent()


def test_viewstate_validation():
    with pytest.raises(ValueError):
        ViewState.from_center(GeoPoint(0, 0), -1, 512, 512)
    with pytest.raises(ValueError):
        ViewState.from_center(GeoPoint(0, 0), 1, 0, 512)


def test_full_world_bounds():
    # zoom 1 x 512px screen shows the whole world: bounds span everything
    b = VIEW.bounds
    assert b.north_west.lat == pytest.approx(MAX_MERCATOR_LAT, abs=1e-6)
    assert b.north_west.lon == -180.0
    assert b.south_east.lon == 180.0


# -- anchor calibration ------------------------------------------------------------


def cal(**kw) -> AnchorCalibration:
    defaults = dict(
        qr_world_origin=(0.0, 0.0, 0.0),
        qr_world_yaw_deg=0.0,
        qr_screen_px=(0.0, 0.0),
        qr_rendered_side_px=200.0,
        qr_physical_side_m=0.10,
        table_normal=(0.0, 0.0, 1.0),
    )
    defaults.update(kw)
    return calibrate_anchor(**defaults)


def test_calibrate_px_to_m():
    assert cal().px_to_m == pytest.approx(5e-4)
    assert cal(qr_rendered_side_px=400.0).px_to_m == pytest.approx(2.5e-4)


def test_calibrate_degenerate():
    with pytest.raises(DegenerateQR):
        cal(qr_rendered_side_px=0.0)
    with pytest.raises(DegenerateQR):
        cal(qr_physical_side_m=-1.0)


def test_screen_to_world_identity_and_offsets():
    c = cal()
    assert screen_to_world(c, (0, 0), 0.0) == pytest.approx((0.0, 0.0, 0.0))
    assert screen_to_world(c, (200, 0), 0.0) == pytest.approx((0.10, 0.0, 0.0))
    base = screen_to_world(c, (200, 0), 0.0)
    lifted = screen_to_world(c, (200, 0), 0.3)
    assert lifted == pytest.approx((base[0], base[1], base[2] + 0.3))


def test_screen_to_world_yaw():
    c = cal(qr_world_yaw_deg=90.0)
    x, y, z = screen_to_world(c, (200, 0), 0.0)
    assert (x, y, z) == pytest.approx((0.0, 0.10, 0.0), abs=1e-12)


def test_geo_to_ar_center_matches_screen_center():
    c = cal()
    view = ViewState.from_center(GeoPoint(10, 20), 4, 512, 512, 0)
    got = geo_to_ar(c, view, view.center, 0.0)
    want = screen_to_world(c, (256.0, 256.0), 0.0)
    assert got == pytest.approx(want, abs=1e-12)


def _planar(c, v):
    # planar part relative to the view-center placement
    return (v[0] - c[0], v[1] - c[1])


def test_geo_to_ar_zoom_doubles_offsets():
    c = cal()
    rng = random.Random(3)
    view = ViewState.from_center(GeoPoint(5, -30), 4, 512, 512, 20)
    zoomed = view.with_camera(zoom=view.zoom + 1)
    for _ in range(50):
        p = GeoPoint(rng.uniform(-60, 60), rng.uniform(-150, 150))
        base = geo_to_ar(c, view, view.center)
        base2 = geo_to_ar(c, zoomed, view.center)
        d1 = _planar(base, geo_to_ar(c, view, p))
        d2 = _planar(base2, geo_to_ar(c, zoomed, p))
        assert d2[0] == pytest.approx(2 * d1[0], rel=1e-9, abs=1e-12)
        assert d2[1] == pytest.approx(2 * d1[1], rel=1e-9, abs=1e-12)


def test_geo_to_ar_bearing_equivariance():
    # rotating the view by theta rotates AR planar offsets by -theta,
    # lengths preserved
    c = cal()
    rng = random.Random(4)
    for _ in range(50):
        theta = rng.uniform(0, 360)
        view = ViewState.from_center(GeoPoint(0, 0), 3, 512, 512, 0)
        rotated = view.with_camera(orientation_deg=theta)
        p = GeoPoint(rng.uniform(-60, 60), rng.uniform(-150, 150))
        center0 = geo_to_ar(c, view, view.center)
        center1 = geo_to_ar(c, rotated, view.center)
        d0 = _planar(center0, geo_to_ar(c, view, p))
        d1 = _planar(center1, geo_to_ar(c, rotated, p))
        t = math.radians(-theta)
        expect = (
            d0[0] * math.cos(t) - d0[1] * math.sin(t),
            d0[0] * math.sin(t) + d0[1] * math.cos(t),
        )
        assert d1[0] == pytest.approx(expect[0], abs=1e-9)
        assert d1[1] == pytest.approx(expect[1], abs=1e-9)
        assert math.hypot(*d1) == pytest.approx(math.hypot(*d0), abs=1e-9)


def test_geo_to_ar_mirror_symmetry():
    c = cal()
    view = ViewState.from_center(GeoPoint(0, 10), 3, 512, 512, 0)
    center = geo_to_ar(c, view, view.center)
    left = _planar(center, geo_to_ar(c, view, GeoPoint(20, 10 - 30)))
    right = _planar(center, geo_to_ar(c, view, GeoPoint(20, 10 + 30)))
    assert left[0] == pytest.approx(-right[0], abs=1e-9)
    assert left[1] == pytest.approx(right[1], abs=1e-9)


def test_geobounds_validation_and_contains():
    b = GeoBounds(GeoPoint(10, 20), GeoPoint(-10, 40))
    assert b.contains(GeoPoint(10, 20))  # inclusive corners
    assert b.contains(GeoPoint(0, 30))
    assert not b.contains(GeoPoint(11, 30))
    with pytest.raises(ValueError):
        GeoBounds(GeoPoint(-10, 20), GeoPoint(10, 40))
    with pytest.raises(ValueError):
        GeoBounds(GeoPoint(10, 50), GeoPoint(-10, 40))
    wrapped = GeoBounds(GeoPoint(10, 170), GeoPoint(-10, -170), wrap=True)
    assert wrapped.contains(GeoPoint(0, 180))
    assert not wrapped.contains(GeoPoint(0, 0))
