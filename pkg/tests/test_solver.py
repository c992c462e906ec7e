import csv

import numpy as np
import pytest
import scipy.sparse as sp

from consistent_ct.errors import ConfigError, DimensionMismatch, NonFinite
from consistent_ct.geometry import ScanGeometry, equidistant_angles
from consistent_ct.oracle import dense_tikhonov_solve
from consistent_ct.projector import build_system_matrix, spectral_norm
from consistent_ct.solver import ReconConfig, nag_tikhonov


def test_identity_closed_form():
    p = np.linspace(-1, 1, 20)
    u, trace = nag_tikhonov(sp.eye(20, format="csr"), p,
                            ReconConfig(lam=0.5, grad_tol_sq=1e-30, max_iter=500))
    assert np.allclose(u, p / 1.5, atol=1e-12)
    assert trace.converged


def test_zero_sinogram_stops_at_start():
    u, trace = nag_tikhonov(sp.eye(5, format="csr"), np.zeros(5), ReconConfig())
    assert np.all(u == 0) and trace.iterations == 0 and trace.converged


def test_matches_dense_solution():
    rng = np.random.default_rng(0)
    A = rng.standard_normal((30, 20))
    p = rng.standard_normal(30)
    L = np.linalg.norm(A, 2)
    u, trace = nag_tikhonov(A, p, ReconConfig(lam=1e-2, grad_tol_sq=1e-28, max_iter=50_000,
                                              normalization=L))
    ref = dense_tikhonov_solve(A / L, p / L, 1e-2)
    assert np.linalg.norm(u - ref) <= 1e-8 * np.linalg.norm(ref)
    obj = trace.objectives()
    assert obj[-1] <= obj[1]


def test_stored_normalization_and_image_shape():
    g = ScanGeometry.fan(s=30, d=30, d_y=1, n_det_y=12, a=1, b=1, n_x=4, n_y=4,
                         angles=equidistant_angles(8))
    W = build_system_matrix(g, "consistent")
    W.normalization = spectral_norm(W)
    truth = np.arange(16, dtype=float).reshape(4, 4) / 16
    u, trace = nag_tikhonov(W, W.forward(truth), ReconConfig(lam=0.0, grad_tol_sq=1e-20,
                                                            max_iter=20_000))
    assert u.shape == (4, 4)
    assert trace.normalization == W.normalization
    assert np.allclose(u, truth, atol=1e-6)


def test_max_iter_and_trace_csv(tmp_path):
    rng = np.random.default_rng(1)
    A = rng.standard_normal((10, 8))
    seen = []
    u, trace = nag_tikhonov(A, rng.standard_normal(10),
                            ReconConfig(lam=1e-6, max_iter=3, grad_tol_sq=1e-30),
                            callback=lambda k, *_: seen.append(k))
    assert not trace.converged and trace.iterations == 3 and seen == [1, 2, 3]
    path = tmp_path / "trace.csv"
    trace.write_csv(path)
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["iteration", "objective", "grad_norm_sq"]
    assert [int(r[0]) for r in rows[1:]] == [0, 1, 2, 3]
    assert float(rows[-1][2]) == trace.grad_norms_sq()[-1]


def test_errors():
    with pytest.raises(DimensionMismatch):
        nag_tikhonov(np.eye(3), np.zeros(4))
    with pytest.raises(NonFinite):
        nag_tikhonov(np.eye(3), np.array([1.0, np.nan, 0.0]))
    for kw in (dict(lam=-1.0), dict(max_iter=0), dict(grad_tol_sq=0.0),
               dict(normalization=-2.0)):
        with pytest.raises(ConfigError):
            ReconConfig(**kw)
