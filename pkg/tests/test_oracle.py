import math

import numpy as np
import pytest
import scipy.sparse as sp

from consistent_ct import oracle as O
from consistent_ct.errors import TooLarge
from consistent_ct.geometry import ScanGeometry


def fan(**kw):
    base = dict(s=50, d=50, d_y=1, n_det_y=40, a=1, b=1, n_x=4, n_y=4, angles=(0.0,))
    base.update(kw)
    return ScanGeometry.fan(**base)


def cone(**kw):
    base = dict(s=50, d=50, d_y=1, d_z=1, n_det_y=40, n_det_z=40, a=1, b=1, c=1,
                n_x=4, n_y=4, n_z=4, angles=(0.0,))
    base.update(kw)
    return ScanGeometry.cone(**base)


def test_clip_polygon_and_shoelace():
    sq = [(0, 0), (2, 0), (2, 2), (0, 2)]
    assert O.shoelace(sq) == 4.0
    half = O.clip_polygon(sq, 1.0, 0.0, -1.0)
    assert O.shoelace(half) == pytest.approx(2.0)
    tri = O.clip_polygon(sq, -1.0, -1.0, 2.0)
    assert O.shoelace(tri) == pytest.approx(2.0)
    assert O.clip_polygon(sq, 1.0, 0.0, -5.0) == []
    assert O.shoelace([(0, 0), (1, 1)]) == 0.0


def test_clip_area_containment_and_half():
    src = np.array([100.0, 0.0])
    wide_lo, wide_hi = np.array([-1.0, -0.5]), np.array([-1.0, 0.5])
    assert O.clip_area_2d((-0.5, 0.5, -0.5, 0.5), src, wide_lo, wide_hi) == pytest.approx(1.0)
    half = O.clip_area_2d((-0.5, 0.5, -0.5, 0.5), src, np.array([-1.0, 0.0]), wide_hi)
    assert half == pytest.approx(0.5, abs=1e-12)
    # a wedge pointing away from the pixel does not count its mirror image
    assert O.clip_area_2d((-0.5, 0.5, -0.5, 0.5), src, -wide_lo, -wide_hi) == 0.0


def test_clip_pixel_weights_sum_to_one():
    g = fan()
    rng = np.random.default_rng(0)
    for _ in range(20):
        phi = rng.uniform(0, 2 * math.pi)
        x0, y0 = rng.uniform(-2, 1, 2)
        w = O.clip_pixel_weights((x0, x0 + 1, y0, y0 + 1), phi, g)
        assert sum(w.values()) == pytest.approx(1.0, abs=1e-12)


def test_mc_area_matches_clip():
    g = fan()
    src, dl, dh = O.cell_wedge(0.3, g, -1, 1)
    pix = (-0.7, 0.3, -0.2, 0.8)
    exact = O.clip_area_2d(pix, src, dl, dh)
    est, se = O.mc_area_2d(pix, src, dl, dh, 200_000, seed=1)
    assert 0 < exact < 1
    assert abs(est - exact) <= 4 * se


def test_detector_point_on_detector_line():
    g = fan()
    for phi in (0.0, 0.7, 2.5):
        p = O.detector_point(phi, g, 0)
        assert np.allclose(p, [-g.d * math.cos(phi), -g.d * math.sin(phi)])
        q = O.detector_point(phi, g, 3)
        assert np.linalg.norm(q - p) == pytest.approx(3 * g.d_y)


def test_mc_volume_and_line_integral_agree():
    g = cone()
    box = (-0.3, 0.7, -0.6, 0.4, 0.2, 1.2)
    est, se = O.mc_volume_3d(box, 0.4, g, (-0.5, 1.0), (0.0, 1.5), 1 << 18, seed=2)
    line = O.line_integral_volume(box, 0.4, g, -0.5, 1.0, 0.0, 1.5, n_lines=4000)
    assert 0 < line < 1
    assert abs(est - line) <= 4 * se + 1e-6
    with pytest.raises(ValueError):
        O.mc_volume_3d(box, 0.4, g, (-1, 1), (-1, 1), n_samples=10)


def test_line_integral_full_cover_and_histogram():
    g = cone()
    box = (-0.5, 0.5, -0.5, 0.5, -0.5, 0.5)
    assert O.line_integral_volume(box, 0.2, g, -10, 10, -10, 10, 200) == pytest.approx(1.0)
    hist, n = O.mc_voxel_histogram(box, 0.2, g, 1 << 14, seed=0)
    assert sum(hist.values()) == pytest.approx(1.0)
    assert n == 1 << 14


def test_dense_helpers():
    rng = np.random.default_rng(3)
    W = sp.random(12, 7, density=0.4, random_state=rng, format="csr")
    u, p = rng.standard_normal(7), rng.standard_normal(12)
    assert np.allclose(O.dense_matvec(W, u), W @ u)
    assert np.allclose(O.dense_rmatvec(W, p), W.T @ p)
    assert O.dense_top_singular_value(np.diag([3.0, 1.0])) == pytest.approx(3.0)
    sol = O.dense_tikhonov_solve(np.eye(3), np.array([2.0, 4.0, 6.0]), 1.0)
    assert np.allclose(sol, [1.0, 2.0, 3.0])
    with pytest.raises(TooLarge):
        O.dense_reference(sp.csr_matrix((O.DENSE_LIMIT + 1, 2)))
