import numpy as np
import pytest

from consistent_ct import phantoms as Ph
from consistent_ct.errors import InvalidSpec
from consistent_ct.geometry import ScanGeometry, equidistant_angles


def test_checkerboard_pattern():
    cb = Ph.checkerboard2d(4, 4)
    assert cb.tolist() == [[1, 0, 1, 0], [0, 1, 0, 1], [1, 0, 1, 0], [0, 1, 0, 1]]
    cb = Ph.checkerboard2d(16, 4)
    assert cb[0, 0] == 1 and cb[0, 4] == 0 and cb[4, 4] == 1 and cb.mean() == 0.5
    c3 = Ph.checkerboard3d(8, 2)
    assert c3.shape == (8, 8, 8) and c3[0, 0, 0] == 1 and c3[4, 0, 0] == 0 and c3.mean() == 0.5
    idx = np.indices((8, 8, 8)) // 4
    assert np.array_equal(c3, (idx.sum(axis=0) % 2 == 0).astype(float))


def test_shepp_logan():
    assert Ph.shepp_logan_value(0.0, 0.0) == pytest.approx(0.2)
    assert Ph.shepp_logan_value(0.95, 0.95) == 0.0
    assert Ph.shepp_logan_value(0.0, 0.9) == pytest.approx(1.0)
    img = Ph.shepp_logan2d(41)
    assert img.shape == (41, 41)
    assert img[20, 20] == pytest.approx(0.2)
    assert img.min() >= 0.0 and img.max() <= 1.0 + 1e-12
    # y increases with the row index: only the top rim escapes the inner ellipse
    assert img[38, 20] == pytest.approx(1.0)
    assert img[2, 20] == pytest.approx(0.2)


def test_make_phantom_validation():
    assert Ph.make_phantom(Ph.PhantomSpec("checkerboard2d", 8, 2)).shape == (8, 8)
    for spec in (Ph.PhantomSpec("ellipse", 8), Ph.PhantomSpec("checkerboard2d", 10, 4),
                 Ph.PhantomSpec("checkerboard2d", 0), Ph.PhantomSpec("shepp_logan2d", 8,
                                                                     sigma=-1)):
        with pytest.raises(InvalidSpec):
            Ph.make_phantom(spec)


def test_splitmix64_reference_values():
    out = Ph.splitmix64(0, 3)
    assert int(out[0]) == 0xE220A8397B1DCDAF
    assert int(out[1]) == 0x6E789E6AA1B965F4
    assert int(out[2]) == 0x06C45D188009454F
    u = Ph.uniform(0, 1000)
    assert u.min() >= 0.0 and u.max() < 1.0


def test_gaussian_statistics_and_determinism():
    z = Ph.gaussian(7, 100_001)
    assert z.size == 100_001
    assert abs(z.mean()) < 0.02
    assert abs(z.std() - 1.0) < 0.1
    assert np.array_equal(z[:100], Ph.gaussian(7, 100))
    assert not np.array_equal(z[:100], Ph.gaussian(8, 100))


def test_make_sinogram_noise():
    g = ScanGeometry.fan(s=30, d=30, d_y=1, n_det_y=10, a=1, b=1, n_x=4, n_y=4,
                         angles=equidistant_angles(50))
    u = Ph.checkerboard2d(4, 2)
    clean = Ph.make_sinogram(g, u)
    noisy = Ph.make_sinogram(g, u, sigma=0.1, seed=3)
    assert clean.shape == g.sino_shape
    assert abs((noisy - clean).std() - 0.1) < 0.01
    assert np.array_equal(noisy, Ph.make_sinogram(g, u, sigma=0.1, seed=3))
