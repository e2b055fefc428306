"""Batch kernels with backend selection at import.

The compiled extension is used when present; otherwise the pure-Python
implementation takes over transparently. Set SURFACE_SYNC_PURE=1 to force
the fallback (used by the benchmark and the equivalence tests).
"""

import os

import numpy as np

from . import _pure

if os.environ.get("SURFACE_SYNC_PURE"):
    _impl = _pure
    BACKEND = "pure"
else:
    try:
        from . import _native as _impl  # type: ignore[no-redef]

        BACKEND = "native"
    except ImportError:
        _impl = _pure
        BACKEND = "pure"

norm_mercator = _impl.norm_mercator
screen_place = _impl.screen_place
affine_place = _impl.affine_place


def norm_mercator_arrays(lat, lon):
    """Allocating wrapper: degree arrays -> unit-square (nx, ny) arrays."""
    lat = np.ascontiguousarray(lat, dtype=np.float64)
    lon = np.ascontiguousarray(lon, dtype=np.float64)
    nx = np.empty_like(lat)
    ny = np.empty_like(lat)
    norm_mercator(lat, lon, nx, ny)
    return nx, ny


def screen_place_arrays(nx, ny, affine):
    """Allocating wrapper around screen_place; affine from view_screen_affine."""
    px = np.empty_like(nx)
    py = np.empty_like(nx)
    screen_place(nx, ny, *affine, px, py)
    return px, py


def place_arrays(nx, ny, alt, affine):
    """Allocating wrapper around affine_place; affine from placement_affine."""
    alt = np.ascontiguousarray(alt, dtype=np.float64)
    out_x = np.empty_like(nx)
    out_y = np.empty_like(nx)
    out_z = np.empty_like(nx)
    affine_place(nx, ny, alt, *affine, out_x, out_y, out_z)
    return out_x, out_y, out_z
