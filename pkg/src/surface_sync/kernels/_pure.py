"""Pure-Python batch kernels; same signatures as the native extension.

Latitude is clamped into the Mercator band inside the kernels so replicas
never crash on poleward records; the scalar API in surface_sync.geo keeps
its strict error behaviour.
"""

import math

_MAX_LAT = 85.05112878
_QUARTER_PI = math.pi / 4.0
_DEG = math.pi / 180.0


def norm_mercator(lat, lon, out_nx, out_ny):
    """Unit-square web Mercator for degree arrays; (0,0) is north-west."""
    for i in range(len(lat)):
        la = lat[i]
        if la > _MAX_LAT:
            la = _MAX_LAT
        elif la < -_MAX_LAT:
            la = -_MAX_LAT
        out_nx[i] = (lon[i] + 180.0) / 360.0
        out_ny[i] = (1.0 - math.log(math.tan(_QUARTER_PI + la * _DEG / 2.0)) / math.pi) / 2.0


def screen_place(nx, ny, m00, m01, m10, m11, c0, c1, out_px, out_py):
    """Apply the folded view affine: px = c + M @ n."""
    for i in range(len(nx)):
        out_px[i] = c0 + m00 * nx[i] + m01 * ny[i]
        out_py[i] = c1 + m10 * nx[i] + m11 * ny[i]


def affine_place(
    nx, ny, alt,
    t00, t01, t10, t11, t20, t21,
    bx, by, bz, nvx, nvy, nvz,
    out_x, out_y, out_z,
):
    """Apply the folded placement affine: world = base + T @ n + alt * normal."""
    for i in range(len(nx)):
        a = alt[i]
        out_x[i] = bx + t00 * nx[i] + t01 * ny[i] + a * nvx
        out_y[i] = by + t10 * nx[i] + t11 * ny[i] + a * nvy
        out_z[i] = bz + t20 * nx[i] + t21 * ny[i] + a * nvz
