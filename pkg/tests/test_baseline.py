import math

import numpy as np
import pytest

from consistent_ct import baseline as B
from consistent_ct.geometry import ScanGeometry
from consistent_ct.projector import build_system_matrix


def fan(**kw):
    base = dict(s=50, d=50, d_y=1, n_det_y=16, a=1, b=1, n_x=4, n_y=4, angles=(0.0,))
    base.update(kw)
    return ScanGeometry.fan(**base)


def test_axis_aligned_ray():
    g = fan()
    w = B.line_weights(((10.0, 0.5), (-10.0, 0.5)), g)
    assert len(w) == 4
    assert all(v == pytest.approx(1.0) for v in w.values())
    assert {k.n_y for k in w} == {0.0}


def test_diagonal_ray_through_corners():
    g = fan()
    w = B.line_weights(((-10.0, -10.0), (10.0, 10.0)), g)
    assert sum(w.values()) == pytest.approx(4 * math.sqrt(2))
    assert max(w.values()) == pytest.approx(math.sqrt(2))


def test_chords_match_geometry():
    g = fan(n_x=8, n_y=8)
    rng = np.random.default_rng(0)
    for _ in range(50):
        th = rng.uniform(0, math.pi)
        off = rng.uniform(-3, 3)
        d = np.array([math.cos(th), math.sin(th)])
        n = np.array([-d[1], d[0]])
        p0, p1 = off * n - 20 * d, off * n + 20 * d
        w = B.line_weights((p0, p1), g)
        # the total chord through the 8x8 square
        t = np.array([(-4 - p0[0]) / (p1[0] - p0[0]), (4 - p0[0]) / (p1[0] - p0[0])]) \
            if abs(p1[0] - p0[0]) > 1e-12 else np.array([-np.inf, np.inf])
        u = np.array([(-4 - p0[1]) / (p1[1] - p0[1]), (4 - p0[1]) / (p1[1] - p0[1])]) \
            if abs(p1[1] - p0[1]) > 1e-12 else np.array([-np.inf, np.inf])
        lo = max(t.min(), u.min(), 0.0)
        hi = min(t.max(), u.max(), 1.0)
        chord = max(hi - lo, 0.0) * 40
        assert sum(w.values()) == pytest.approx(chord, abs=1e-9)
        for k, v in w.items():
            assert 0 <= v <= math.sqrt(2) + 1e-12


def test_single_ray_is_central_line():
    g = fan()
    for phi in (0.0, 0.4, 2.0):
        ref = B.line_weights(B.detector_ray(phi, (5 + 0.5 - 8) * g.d_y, 0.0, g), g)
        assert B.multiline_weights((5,), 1, phi, g) == ref


def test_ray_offsets():
    assert np.allclose(B.ray_offsets(1, 2.0), [0.0])
    assert np.allclose(B.ray_offsets(4, 1.0), [-0.375, -0.125, 0.125, 0.375])
    with pytest.raises(ValueError):
        B.ray_offsets(0, 1.0)


def _diff(g, k):
    c = build_system_matrix(g, "consistent").csr.toarray()
    m = build_system_matrix(g, f"multiline:{k}").csr.toarray()
    return np.abs(c - m).max()


def test_many_rays_approach_consistent_weights():
    g = fan(s=1e5, d=1e5, n_det_y=8, angles=(0.0, 0.3, 1.1))
    errs = [_diff(g, k) for k in (4, 16, 64, 256)]
    assert errs[-1] < 1e-3
    assert all(b <= a + 1e-12 for a, b in zip(errs, errs[1:]))


def test_k_doubling_saturates():
    g = fan(angles=(0.2,))
    m = [build_system_matrix(g, f"multiline:{k}").csr.toarray() for k in (32, 64, 128)]
    assert np.abs(m[2] - m[1]).max() < np.abs(m[1] - m[0]).max() + 1e-12


def test_cone_multiline_grid():
    g = ScanGeometry.cone(s=50, d=50, d_y=1, d_z=1, n_det_y=8, n_det_z=8, a=1, b=1, c=1,
                          n_x=4, n_y=4, n_z=4, angles=(0.3,))
    w1 = B.multiline_weights((3, 4), 1, 0.3, g)
    w2 = B.multiline_weights((3, 4), 2, 0.3, g)
    assert w1 and w2
    assert all(k.n_z in (-2.0, -1.0, 0.0, 1.0) for k in w2)
    counts, cols, vals = B.line_block_for_angle(0.3, g, 2)
    assert counts.size == g.n_det and cols.size == vals.size == counts.sum()
