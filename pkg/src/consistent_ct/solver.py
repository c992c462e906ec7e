"""Tikhonov-regularized least squares by Nesterov's accelerated gradient.

Minimizes ``F(u) = 1/2 ||A u - b||^2 + lam/2 ||u||^2`` with ``A = W / L`` and
``b = p / L``, where ``L`` is the spectral norm of ``W``.  The step is
``1 / (1 + lam)`` and the momentum follows ``t_{k+1} = (1 + sqrt(1 + 4 t_k^2)) / 2``.

The gradient is affine in ``u``, so the gradient at the extrapolated point
is the same combination of the last two iterate gradients.  One product with
``A`` and one with ``A^T`` per iteration give the objective and the exact
gradient norm of every iterate.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DimensionMismatch, NonFinite
from .projector import SparseSystemMatrix, spectral_norm


@dataclass
class ReconConfig:
    lam: float = 1e-4
    max_iter: int = 1000
    grad_tol_sq: float = 1e-9
    normalization: float | None = None
    seed: int = 0

    def __post_init__(self):
        if not (self.lam >= 0 and math.isfinite(self.lam)):
            raise ConfigError("lambda must be finite and >= 0")
        if int(self.max_iter) < 1:
            raise ConfigError("max_iter must be >= 1")
        if not self.grad_tol_sq > 0:
            raise ConfigError("tol must be > 0")
        if self.normalization is not None and not self.normalization > 0:
            raise ConfigError("normalization must be > 0")


@dataclass
class Trace:
    """Per-iteration ``(iteration, objective, grad_norm_sq)``; iteration 0 is ``u = 0``."""

    rows: list = field(default_factory=list)
    converged: bool = False
    normalization: float = 1.0

    @property
    def iterations(self) -> int:
        return self.rows[-1][0] if self.rows else 0

    def objectives(self) -> np.ndarray:
        return np.array([r[1] for r in self.rows])

    def grad_norms_sq(self) -> np.ndarray:
        return np.array([r[2] for r in self.rows])

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iteration", "objective", "grad_norm_sq"])
            for it, obj, g2 in self.rows:
                w.writerow([it, repr(float(obj)), repr(float(g2))])


def _operator(W):
    if isinstance(W, SparseSystemMatrix):
        return W.csr, W.normalization
    return W, None


def nag_tikhonov(W, p, cfg: ReconConfig | None = None, callback=None):
    """Run NAG from ``u = 0``; returns ``(u, trace)``.

    ``W`` is a :class:`SparseSystemMatrix`, a scipy sparse matrix or a dense
    array.  The normalization is taken from ``cfg``, then from ``W``, and is
    otherwise estimated with 100 power iterations.  ``u`` has the image shape
    when ``W`` carries a geometry.
    """
    cfg = cfg or ReconConfig()
    A, stored = _operator(W)
    m, n = A.shape
    b = np.asarray(p, dtype=np.float64).reshape(-1)
    if b.size != m:
        raise DimensionMismatch(f"sinogram has {b.size} values, matrix has {m} rows")
    if not np.all(np.isfinite(b)):
        raise NonFinite("sinogram contains NaN or Inf")
    norm = cfg.normalization or stored or spectral_norm(A, 100, cfg.seed)
    inv = 1.0 / norm
    b = b * inv
    lam = float(cfg.lam)
    step = 1.0 / (1.0 + lam)
    AT = A.T

    def residual_and_grad(u):
        r = (A @ u) * inv - b
        g = (AT @ r) * inv + lam * u
        return r, g

    u = np.zeros(n)
    r, g = residual_and_grad(u)
    trace = Trace(normalization=norm)
    g2 = float(g @ g)
    trace.rows.append((0, 0.5 * float(r @ r), g2))
    u_prev, g_prev = u, g
    t = 1.0
    if g2 < cfg.grad_tol_sq:
        trace.converged = True
    else:
        for k in range(1, int(cfg.max_iter) + 1):
            t_next = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
            beta = (t - 1.0) / t_next
            y = u + beta * (u - u_prev)
            gy = g + beta * (g - g_prev)
            u_new = y - step * gy
            r, g_new = residual_and_grad(u_new)
            if not np.all(np.isfinite(u_new)):
                raise NonFinite(f"iterate {k} is not finite; check the normalization")
            u_prev, g_prev = u, g
            u, g = u_new, g_new
            t = t_next
            g2 = float(g @ g)
            obj = 0.5 * float(r @ r) + 0.5 * lam * float(u @ u)
            trace.rows.append((k, obj, g2))
            if callback is not None:
                callback(k, u, obj, g2)
            if g2 < cfg.grad_tol_sq:
                trace.converged = True
                break
    geom = getattr(W, "geometry", None)
    return (u.reshape(geom.image_shape) if geom is not None else u), trace
