# cython: boundscheck=False, wraparound=False, cdivision=True
"""Native batch kernels; mirrors _pure.py exactly (same clamping rules)."""

from libc.math cimport log, tan, M_PI

cdef double _MAX_LAT = 85.05112878
cdef double _QUARTER_PI = M_PI / 4.0
cdef double _DEG = M_PI / 180.0


def norm_mercator(double[::1] lat, double[::1] lon,
                  double[::1] out_nx, double[::1] out_ny):
    """Unit-square web Mercator for degree arrays; (0,0) is north-west."""
    cdef Py_ssize_t i, n = lat.shape[0]
    cdef double la
    with nogil:
        for i in range(n):
            la = lat[i]
            if la > _MAX_LAT:
                la = _MAX_LAT
            elif la < -_MAX_LAT:
                la = -_MAX_LAT
            out_nx[i] = (lon[i] + 180.0) / 360.0
            out_ny[i] = (1.0 - log(tan(_QUARTER_PI + la * _DEG / 2.0)) / M_PI) / 2.0


def screen_place(double[::1] nx, double[::1] ny,
                 double m00, double m01, double m10, double m11,
                 double c0, double c1,
                 double[::1] out_px, double[::1] out_py):
    """Apply the folded view affine: px = c + M @ n."""
    cdef Py_ssize_t i, n = nx.shape[0]
    with nogil:
        for i in range(n):
            out_px[i] = c0 + m00 * nx[i] + m01 * ny[i]
            out_py[i] = c1 + m10 * nx[i] + m11 * ny[i]


def affine_place(double[::1] nx, double[::1] ny, double[::1] alt,
                 double t00, double t01, double t10, double t11,
                 double t20, double t21,
                 double bx, double by, double bz,
                 double nvx, double nvy, double nvz,
                 double[::1] out_x, double[::1] out_y, double[::1] out_z):
    """Apply the folded placement affine: world = base + T @ n + alt * normal."""
    cdef Py_ssize_t i, n = nx.shape[0]
    cdef double a
    with nogil:
        for i in range(n):
            a = alt[i]
            out_x[i] = bx + t00 * nx[i] + t01 * ny[i] + a * nvx
            out_y[i] = by + t10 * nx[i] + t11 * ny[i] + a * nvy
            out_z[i] = bz + t20 * nx[i] + t21 * ny[i] + a * nvz
