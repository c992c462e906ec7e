"""Brute-force references that share no code with the closed-form weights.

* 2D: Sutherland-Hodgman clipping of the pixel against the fan wedge of one
  detector cell, followed by the shoelace area.
* 3D: randomized quasi Monte Carlo sampling of the voxel, and a dense line
  integration that sweeps lines of constant x and integrates the exact
  piecewise-linear z-extent along y.
* Dense linear algebra for small matrices.

Ray directions are built from detector edge coordinates, never from the
fan-angle formulas used by the weight kernels.
"""
from __future__ import annotations

import math

import numpy as np
import scipy.sparse as sp
from scipy.stats import qmc

from .errors import TooLarge
from .geometry import ScanGeometry

DENSE_LIMIT = 10_000


# ---------------------------------------------------------------- 2D clipping

def clip_polygon(poly, nx, ny, c):
    """Keep the part of ``poly`` where ``nx*x + ny*y + c >= 0``."""
    out = []
    n = len(poly)
    for i in range(n):
        px, py = poly[i]
        qx, qy = poly[(i + 1) % n]
        fp = nx * px + ny * py + c
        fq = nx * qx + ny * qy + c
        if fp >= 0:
            out.append((px, py))
        if (fp >= 0) != (fq >= 0):
            r = fp / (fp - fq)
            out.append((px + r * (qx - px), py + r * (qy - py)))
    return out


def shoelace(poly) -> float:
    if len(poly) < 3:
        return 0.0
    acc = 0.0
    for i in range(len(poly)):
        x0, y0 = poly[i]
        x1, y1 = poly[(i + 1) % len(poly)]
        acc += x0 * y1 - x1 * y0
    return 0.5 * abs(acc)


def source_point(phi, geom: ScanGeometry):
    return np.array([geom.s * math.cos(phi), geom.s * math.sin(phi)])


def detector_point(phi, geom: ScanGeometry, m_y):
    """Position of detector edge ``m_y`` (signed) in the x-y plane."""
    u = np.array([-math.cos(phi), -math.sin(phi)])
    e = np.array([-math.sin(phi), math.cos(phi)])
    return source_point(phi, geom) + geom.sd * u + m_y * geom.d_y * e


def wedge_halfplanes(src, d_lo, d_hi):
    """Half-planes ``(nx, ny, c)`` bounding the wedge from ``d_lo`` to ``d_hi``."""
    orient = 1.0 if d_lo[0] * d_hi[1] - d_lo[1] * d_hi[0] >= 0 else -1.0
    planes = []
    # cross(d_lo, P - S) * orient >= 0
    nx, ny = -d_lo[1] * orient, d_lo[0] * orient
    planes.append((nx, ny, -(nx * src[0] + ny * src[1])))
    # cross(P - S, d_hi) * orient >= 0
    nx, ny = d_hi[1] * orient, -d_hi[0] * orient
    planes.append((nx, ny, -(nx * src[0] + ny * src[1])))
    mid = np.asarray(d_lo) / np.linalg.norm(d_lo) + np.asarray(d_hi) / np.linalg.norm(d_hi)
    planes.append((mid[0], mid[1], -(mid[0] * src[0] + mid[1] * src[1])))
    return planes


def clip_area_2d(pixel, src, d_lo, d_hi) -> float:
    """Area fraction of ``pixel = (x0, x1, y0, y1)`` inside the wedge."""
    x0, x1, y0, y1 = pixel
    poly = [(x0, y0), (x1, y0), (x1, y1), (x0, y1)]
    for plane in wedge_halfplanes(src, d_lo, d_hi):
        poly = clip_polygon(poly, *plane)
        if not poly:
            return 0.0
    return shoelace(poly) / ((x1 - x0) * (y1 - y0))


def cell_wedge(phi, geom: ScanGeometry, m_lo, m_hi):
    src = source_point(phi, geom)
    return src, detector_point(phi, geom, m_lo) - src, detector_point(phi, geom, m_hi) - src


def clip_pixel_weights(pixel, phi, geom: ScanGeometry) -> dict:
    """Oracle weights ``{cell index: fraction}`` for one pixel over the whole detector."""
    out = {}
    for i in range(geom.n_det_y):
        m = i - 0.5 * geom.n_det_y
        src, dl, dh = cell_wedge(phi, geom, m, m + 1)
        w = clip_area_2d(pixel, src, dl, dh)
        if w > 0.0:
            out[i] = w
    return out


def mc_area_2d(pixel, src, d_lo, d_hi, n_samples, seed):
    """Plain Monte Carlo version of :func:`clip_area_2d`; returns ``(estimate, stderr)``."""
    rng = np.random.default_rng(seed)
    x0, x1, y0, y1 = pixel
    pts = np.column_stack([rng.uniform(x0, x1, n_samples), rng.uniform(y0, y1, n_samples)])
    inside = np.ones(n_samples, dtype=bool)
    for nx, ny, c in wedge_halfplanes(src, d_lo, d_hi):
        inside &= nx * pts[:, 0] + ny * pts[:, 1] + c >= 0
    p = inside.mean()
    return p, math.sqrt(max(p * (1 - p), 0.0) / n_samples)


# ----------------------------------------------------------------- 3D sampling

def _project(pts, phi, geom: ScanGeometry):
    cp, sn = math.cos(phi), math.sin(phi)
    t = geom.s - pts[:, 0] * cp - pts[:, 1] * sn
    eta = geom.sd * (pts[:, 1] * cp - pts[:, 0] * sn) / t
    zeta = geom.sd * pts[:, 2] / t
    return eta, zeta


def _samples(box, n_samples, seed, method):
    if method == "sobol":
        m = max(int(math.ceil(math.log2(n_samples))), 1)
        u = qmc.Sobol(d=3, scramble=True, seed=seed).random_base2(m)
    elif method == "random":
        u = np.random.default_rng(seed).random((n_samples, 3))
    else:
        raise ValueError(f"unknown sampling method {method!r}")
    lo = np.array([box[0], box[2], box[4]])
    hi = np.array([box[1], box[3], box[5]])
    return lo + u * (hi - lo)


def mc_volume_3d(box, phi, geom: ScanGeometry, eta_range, zeta_range, n_samples=1_000_000,
                 seed=0, method="sobol"):
    """Fraction of ``box`` whose rays hit the detector rectangle; ``(estimate, stderr)``.

    ``box = (x0, x1, y0, y1, z0, z1)``; ``eta_range``/``zeta_range`` are
    detector coordinates.  The binomial standard error is reported for every
    method; for the scrambled Sobol points it is a conservative bound.
    """
    if n_samples < 10_000:
        raise ValueError("n_samples must be at least 1e4")
    pts = _samples(box, n_samples, seed, method)
    eta, zeta = _project(pts, phi, geom)
    inside = ((eta >= eta_range[0]) & (eta < eta_range[1])
              & (zeta >= zeta_range[0]) & (zeta < zeta_range[1]))
    p = inside.mean()
    return p, math.sqrt(max(p * (1 - p), 0.0) / len(pts))


def mc_voxel_histogram(box, phi, geom: ScanGeometry, n_samples=1_000_000, seed=0,
                       method="sobol") -> tuple:
    """Monte Carlo weights of one voxel for all detector cells.

    Returns ``(weights, n)`` where ``weights`` maps ``(iy, iz)`` to the
    sampled fraction and ``n`` is the number of points drawn.
    """
    pts = _samples(box, n_samples, seed, method)
    eta, zeta = _project(pts, phi, geom)
    iy = np.floor(eta / geom.d_y + 0.5 * geom.n_det_y).astype(np.int64)
    iz = np.floor(zeta / geom.d_z + 0.5 * geom.n_det_z).astype(np.int64)
    ok = (iy >= 0) & (iy < geom.n_det_y) & (iz >= 0) & (iz < geom.n_det_z)
    keys, counts = np.unique(iz[ok] * geom.n_det_y + iy[ok], return_counts=True)
    n = len(pts)
    weights = {(int(k % geom.n_det_y), int(k // geom.n_det_y)): c / n
               for k, c in zip(keys, counts)}
    return weights, n


# ---------------------------------------------------------- dense line sweep

def line_integral_volume(box, phi, geom: ScanGeometry, eta_lo, eta_hi, zeta_lo, zeta_hi,
                         n_lines=10_000) -> float:
    """Volume fraction of ``box`` inside a detector-cell cone by dense integration.

    Lines of constant x (midpoint rule, ``n_lines`` of them) are intersected
    with the fan wedge; along each line the z-extent of the cone inside
    ``[z0, z1]`` is piecewise linear in y and integrated exactly between its
    breakpoints.  Infinite bounds are allowed (e.g. ``z0 = -inf``) and are
    used to measure the region above a row plane without a floor.
    """
    x0, x1, y0, y1, z0, z1 = box
    cp, sn, s, sd = math.cos(phi), math.sin(phi), geom.s, geom.sd
    h = (x1 - x0) / n_lines
    x = x0 + (np.arange(n_lines) + 0.5) * h
    ya = np.full(n_lines, y0, dtype=float)
    yb = np.full(n_lines, y1, dtype=float)
    # sd * l - eta * t >= 0 (lower edge), <= 0 (upper edge); linear in y
    for eta, sign in ((eta_lo, 1.0), (eta_hi, -1.0)):
        if not math.isfinite(eta):
            continue
        coef = sign * (sd * cp + eta * sn)
        rest = sign * (-sd * x * sn - eta * (s - x * cp))
        with np.errstate(divide="ignore", invalid="ignore"):
            root = -rest / coef
        if coef > 0:
            ya = np.maximum(ya, root)
        elif coef < 0:
            yb = np.minimum(yb, root)
        else:
            dead = rest < 0
            yb = np.where(dead, ya, yb)
    tau_lo = zeta_lo / sd
    tau_hi = zeta_hi / sd

    def extent(y):
        t = s - x[:, None] * cp - y * sn
        with np.errstate(invalid="ignore"):
            top = np.minimum(z1, tau_hi * t)
            bot = np.maximum(z0, tau_lo * t)
        return np.maximum(top - bot, 0.0)

    valid = yb > ya
    ya_c = np.where(valid, ya, y0)
    yb_c = np.where(valid, yb, y0)
    pts = [ya_c[:, None], yb_c[:, None]]
    if sn != 0.0:
        for tau in (tau_lo, tau_hi):
            if tau == 0.0 or not math.isfinite(tau):
                continue
            for zz in (z0, z1):
                if not math.isfinite(zz):
                    continue
                yk = (s - x * cp - zz / tau) / sn
                pts.append(np.clip(yk, ya_c, yb_c)[:, None])
    ys = np.sort(np.concatenate(pts, axis=1), axis=1)
    f = extent(ys)
    inner = 0.5 * ((f[:, 1:] + f[:, :-1]) * np.diff(ys, axis=1)).sum(axis=1)
    inner = np.where(valid, inner, 0.0)
    vol = inner.sum() * h
    return vol / ((x1 - x0) * (y1 - y0) * (z1 - z0)) if math.isfinite(z0) else vol


def line_voxel_weights(box, phi, geom: ScanGeometry, cells, n_lines=10_000) -> dict:
    """Dense line integration for a list of ``(iy, iz)`` cells."""
    out = {}
    for iy, iz in cells:
        my = iy - 0.5 * geom.n_det_y
        mz = iz - 0.5 * geom.n_det_z
        out[(iy, iz)] = line_integral_volume(
            box, phi, geom, my * geom.d_y, (my + 1) * geom.d_y,
            mz * geom.d_z, (mz + 1) * geom.d_z, n_lines)
    return out


# -------------------------------------------------------------- dense algebra

def dense_reference(W) -> np.ndarray:
    rows, cols = W.shape
    if rows > DENSE_LIMIT or cols > DENSE_LIMIT:
        raise TooLarge(f"{rows}x{cols} exceeds the dense limit {DENSE_LIMIT}")
    if sp.issparse(W):
        return W.toarray()
    return np.asarray(W, dtype=np.float64).copy()


def dense_matvec(W, u) -> np.ndarray:
    return dense_reference(W) @ u


def dense_rmatvec(W, p) -> np.ndarray:
    return dense_reference(W).T @ p


def dense_top_singular_value(W) -> float:
    D = dense_reference(W)
    if D.size == 0:
        return 0.0
    return float(np.linalg.svd(D, compute_uv=False)[0])


def dense_tikhonov_solve(W, p, lam) -> np.ndarray:
    """Solve ``(W^T W + lam I) u = W^T p``."""
    D = dense_reference(W)
    return np.linalg.solve(D.T @ D + lam * np.eye(D.shape[1]), D.T @ p)
