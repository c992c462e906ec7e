import math

import numpy as np
import pytest

from consistent_ct.geometry import ScanGeometry, VoxelIndex, equidistant_angles, vertex_angles
from consistent_ct.oracle import cell_wedge, clip_area_2d, clip_pixel_weights, shoelace
from consistent_ct.weights2d import (
    pixel_area_factors,
    pixel_area_factors_box,
    trapezoid_area_factor,
    triangle_area_factor,
)


def fan(**kw):
    base = dict(s=250, d=250, d_y=0.75, n_det_y=60, a=1, b=1, n_x=16, n_y=16,
                angles=equidistant_angles(60))
    base.update(kw)
    return ScanGeometry.fan(**base)


def test_triangle_zero_cases():
    g = fan()
    assert triangle_area_factor(0.3, 0.1, 0.2, 0.3, g) == 0.0
    assert triangle_area_factor(0.3, 0.1, 0.1, 0.15, g) == 0.0


def test_triangle_matches_clipped_area():
    g = fan(s=60)
    rng = np.random.default_rng(0)
    checked = 0
    while checked < 200:
        n = VoxelIndex(float(rng.integers(-6, 6)), float(rng.integers(-6, -1)), 0.0)
        phi = rng.uniform(0.05, 0.5)
        gam = vertex_angles(n, phi, g)
        # corner V2 = (x1, y0) is the smallest angle; the ray cuts edge V1V2 and face V2V3
        if not gam[1] < min(gam[0], gam[2], gam[3]):
            continue
        beta = rng.uniform(gam[1], min(gam[0], gam[2]))
        got = triangle_area_factor(phi, gam[1], gam[0], beta, g)
        x0, x1, y0, y1 = n.n_x, n.n_x + 1, n.n_y, n.n_y + 1
        src = np.array([g.s * math.cos(phi), g.s * math.sin(phi)])
        # ray direction from the source at fan angle beta
        d = np.array([-math.cos(phi - beta), -math.sin(phi - beta)])
        ty = (y0 - src[1]) / d[1]
        tx = (x1 - src[0]) / d[0]
        tri = [(x1, y0), tuple(src + ty * d), tuple(src + tx * d)]
        assert got == pytest.approx(shoelace(tri) / (g.a * g.b), rel=1e-9)
        checked += 1


def test_trapezoid_examples():
    g = fan()
    assert trapezoid_area_factor(0.3, 2, 0.01, 0.01, g) == 0.0
    # pixel [-1, 0] sits at mean depth 250.5
    val = trapezoid_area_factor(0.0, -1, 0.0, math.atan(0.001), g)
    assert val == pytest.approx(250.5 * 0.001, rel=1e-12)
    src, dl, dh = np.array([250.0, 0.0]), np.array([-1.0, 0.0]), np.array([-1.0, 0.001])
    # the oracle returns a fraction of the 1 x 20 box
    assert clip_area_2d((-1, 0, -10, 10), src, dl, dh) * 20 == pytest.approx(val, rel=1e-9)


def test_trapezoid_matches_intersection_points():
    g = fan(s=80)
    rng = np.random.default_rng(1)
    for _ in range(100):
        n = VoxelIndex(float(rng.integers(-4, 4)), float(rng.integers(-4, 4)), 0.0)
        phi = rng.uniform(-0.4, 0.4)
        gam = vertex_angles(n, phi, g)
        lo, hi = max(gam[0], gam[1]), min(gam[2], gam[3])
        if hi <= lo:
            continue
        b1, b2 = np.sort(rng.uniform(lo, hi, 2))
        got = trapezoid_area_factor(phi, n.n_x, b1, b2, g)
        src = np.array([g.s * math.cos(phi), g.s * math.sin(phi)])
        pts = []
        for beta, x in ((b1, n.n_x + 1), (b2, n.n_x + 1), (b2, n.n_x), (b1, n.n_x)):
            d = np.array([-math.cos(phi - beta), -math.sin(phi - beta)])
            pts.append(tuple(src + (x - src[0]) / d[0] * d))
        assert got == pytest.approx(shoelace(pts), rel=1e-9)


def test_single_cell_containment():
    g = fan(n_det_y=3, d_y=10.0)
    w = pixel_area_factors(VoxelIndex(-0.5, -0.5, 0), 0.0, g)
    assert w == {1: pytest.approx(1.0, abs=1e-15)}


def test_random_pixels_match_oracle_and_sum():
    g = fan()
    rng = np.random.default_rng(2)
    for _ in range(300):
        ix, iy = rng.integers(0, 16, 2)
        phi = rng.uniform(0, 2 * math.pi)
        box = g.voxel_box(int(ix), int(iy))[:4]
        w = pixel_area_factors_box(box, phi, g)
        o = clip_pixel_weights(box, phi, g)
        for k in set(w) | set(o):
            assert abs(w.get(k, 0.0) - o.get(k, 0.0)) <= 1e-9 * max(1.0, o.get(k, 0.0))
        src, dl, dh = cell_wedge(phi, g, -30, 30)
        assert sum(w.values()) == pytest.approx(clip_area_2d(box, src, dl, dh), abs=1e-10)


def test_straddling_pattern():
    # a pixel seen at 45 degrees spreads over several cells, the middle ones get trapezoids
    g = fan(s=20, d=20, d_y=0.25, n_det_y=40, n_x=2, n_y=2)
    w = pixel_area_factors(VoxelIndex(-1, -1, 0), math.pi / 4, g)
    keys = sorted(w)
    assert keys == list(range(keys[0], keys[-1] + 1))
    vals = [w[k] for k in keys]
    assert all(v > 0 for v in vals)
    assert max(vals) > vals[0] and max(vals) > vals[-1]
    assert sum(vals) == pytest.approx(1.0, abs=1e-12)
