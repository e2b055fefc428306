"""Benchmark: native kernels vs the pure-Python fallback.

The hot path is per-view-update placement recomputation: normalize every
object's geographic position onto the Mercator square, then apply the
folded placement affine. Run:

    python benchmarks/bench_kernels.py [N]
"""

import sys
import time

import numpy as np

from surface_sync.geo import (
    GeoPoint,
    ViewState,
    calibrate_anchor,
    placement_affine,
)
from surface_sync.kernels import _pure

try:
    from surface_sync.kernels import _native
except ImportError:
    _native = None


def bench(fn, *args, repeat: int = 5) -> float:
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main() -> None:
    n = int(sys.argv[1]) if len(sys.argv) > 1 else 200_000
    rng = np.random.default_rng(7)
    lat = rng.uniform(-84.0, 84.0, n)
    lon = rng.uniform(-180.0, 180.0, n)
    alt = rng.uniform(0.0, 0.5, n)
    nx = np.empty_like(lat)
    ny = np.empty_like(lat)
    out = [np.empty_like(lat) for _ in range(3)]

    view = ViewState.from_center(GeoPoint(10.0, -40.0), 5.0, 512, 512, 30.0)
    calib = calibrate_anchor((0.0, 0.0, 0.0), 0.0, (40.0, 472.0), 120.0, 0.12)
    affine = placement_affine(calib, view)

    backends = [("pure", _pure)] + ([("native", _native)] if _native else [])
    repeat = 5 if n <= 500_000 else 2

    print(f"placement pipeline over {n:,} points (best of {repeat})")
    print(f"{'backend':8} {'norm_mercator':>14} {'affine_place':>14} {'total':>10}")
    times = {}
    for name, mod in backends:
        t_norm = bench(mod.norm_mercator, lat, lon, nx, ny, repeat=repeat)
        t_place = bench(mod.affine_place, nx, ny, alt, *affine, *out, repeat=repeat)
        times[name] = t_norm + t_place
        print(f"{name:8} {t_norm * 1e3:>11.2f} ms {t_place * 1e3:>11.2f} ms {(t_norm + t_place) * 1e3:>7.2f} ms")
    if "native" in times:
        print(f"native speedup: {times['pure'] / times['native']:.1f}x")

    # sanity: both backends agree bitwise
    if _native:
        nx2, ny2 = np.empty_like(lat), np.empty_like(lat)
        _pure.norm_mercator(lat[:1000], lon[:1000], nx2[:1000], ny2[:1000])
        _native.norm_mercator(lat[:1000], lon[:1000], nx[:1000], ny[:1000])
        assert np.array_equal(nx[:1000], nx2[:1000])
        assert np.array_equal(ny[:1000], ny2[:1000])
        print("agreement check: identical outputs")


if __name__ == "__main__":
    main()
