"""Line-based comparison weights: grid traversal path lengths and K-line averaging.

A ray runs from the source to a point on the detector.  Its intersection
lengths with the voxel grid come from the incremental parametric traversal
(one axis step per boundary crossing).  Corner crossings produce a
zero-length step that is skipped, so nothing is counted twice.

For a system matrix the lengths are scaled to the units of the exact
fraction weights: length times the cell footprint at the isocenter
(``d_y s / (s + d)``, or ``d_y d_z s^2 / (s + d)^2`` in 3D) divided by the
voxel area or volume.
"""
from __future__ import annotations

import math

import numpy as np
from numba import njit

from .geometry import ScanGeometry, VoxelIndex


@njit(cache=True)
def traverse(p0, p1, lo, h, n, out_idx, out_len):
    """Path lengths of the segment ``p0 -> p1`` through a regular 3D grid.

    ``lo`` is the grid's lower corner, ``h`` the cell size and ``n`` the cell
    counts per axis.  Writes linear indices ``(iz * ny + iy) * nx + ix`` and
    lengths; returns the number of cells visited.
    """
    d = p1 - p0
    t_in, t_out = 0.0, 1.0
    for k in range(3):
        hi_k = lo[k] + n[k] * h[k]
        if d[k] != 0.0:
            ta = (lo[k] - p0[k]) / d[k]
            tb = (hi_k - p0[k]) / d[k]
            t_in = max(t_in, min(ta, tb))
            t_out = min(t_out, max(ta, tb))
        elif p0[k] < lo[k] or p0[k] > hi_k:
            return 0
    if t_out <= t_in:
        return 0
    length = math.sqrt(d[0] * d[0] + d[1] * d[1] + d[2] * d[2])
    idx = np.empty(3, dtype=np.int64)
    step = np.zeros(3, dtype=np.int64)
    t_next = np.full(3, np.inf)
    dt = np.full(3, np.inf)
    for k in range(3):
        pk = p0[k] + t_in * d[k]
        i = int(math.floor((pk - lo[k]) / h[k]))
        idx[k] = min(max(i, 0), n[k] - 1)
        if d[k] > 0.0:
            step[k] = 1
            t_next[k] = (lo[k] + (idx[k] + 1) * h[k] - p0[k]) / d[k]
            dt[k] = h[k] / d[k]
        elif d[k] < 0.0:
            step[k] = -1
            t_next[k] = (lo[k] + idx[k] * h[k] - p0[k]) / d[k]
            dt[k] = -h[k] / d[k]
    cnt = 0
    t_cur = t_in
    while True:
        k = 0
        if t_next[1] < t_next[k]:
            k = 1
        if t_next[2] < t_next[k]:
            k = 2
        t_end = min(t_next[k], t_out)
        seg = (t_end - t_cur) * length
        if seg > 0.0:
            out_idx[cnt] = (idx[2] * n[1] + idx[1]) * n[0] + idx[0]
            out_len[cnt] = seg
            cnt += 1
        if t_end >= t_out:
            break
        t_cur = t_end
        idx[k] += step[k]
        if idx[k] < 0 or idx[k] >= n[k]:
            break
        t_next[k] += dt[k]
    return cnt


@njit(cache=True)
def line_block(cphi, sphi, s, d, eta_c, zeta_c, off_y, off_z, lo, h, n, scale):
    """CSR block of one projection angle for rays through the given cell offsets.

    ``eta_c``/``zeta_c`` are the cell-center detector coordinates (raster
    order, y fastest); every cell averages the rays at ``center + (off_y[i],
    off_z[j])``.  Returns ``(counts, cols, vals)`` with sorted columns per row.
    """
    n_cells = eta_c.shape[0]
    n_vox = n[0] * n[1] * n[2]
    n_rays = off_y.shape[0] * off_z.shape[0]
    max_ray = n[0] + n[1] + n[2] + 3
    acc = np.zeros(n_vox)
    touched = np.empty(n_vox, dtype=np.int64)
    seen = np.zeros(n_vox, dtype=np.bool_)
    ray_idx = np.empty(max_ray, dtype=np.int64)
    ray_len = np.empty(max_ray)
    counts = np.zeros(n_cells, dtype=np.int64)
    cap = max(n_cells * max_ray, 16)
    cols = np.empty(cap, dtype=np.int32)
    vals = np.empty(cap)
    total = 0
    src = np.array([s * cphi, s * sphi, 0.0])
    det = np.empty(3)
    w_ray = scale / n_rays
    for r in range(n_cells):
        n_t = 0
        for oz in off_z:
            for oy in off_y:
                eta = eta_c[r] + oy
                zeta = zeta_c[r] + oz
                det[0] = -d * cphi - eta * sphi
                det[1] = -d * sphi + eta * cphi
                det[2] = zeta
                cnt = traverse(src, det, lo, h, n, ray_idx, ray_len)
                for i in range(cnt):
                    j = ray_idx[i]
                    if not seen[j]:
                        seen[j] = True
                        touched[n_t] = j
                        n_t += 1
                    acc[j] += ray_len[i]
        if total + n_t > cap:
            new_cap = max(2 * cap, total + n_t)
            cols2 = np.empty(new_cap, dtype=np.int32)
            vals2 = np.empty(new_cap)
            cols2[:total] = cols[:total]
            vals2[:total] = vals[:total]
            cols, vals, cap = cols2, vals2, new_cap
        order = np.sort(touched[:n_t])
        for i in range(n_t):
            j = order[i]
            cols[total] = j
            vals[total] = acc[j] * w_ray
            total += 1
            acc[j] = 0.0
            seen[j] = False
        counts[r] = n_t
    return counts, cols[:total].copy(), vals[:total].copy()


def ray_offsets(k: int, pitch: float) -> np.ndarray:
    """``k`` equally spaced offsets across a cell of width ``pitch``; ``k = 1`` is the center."""
    if k < 1:
        raise ValueError("K must be at least 1")
    return ((np.arange(k) + 0.5) / k - 0.5) * pitch


def grid_arrays(geom: ScanGeometry):
    """Lower corner, cell size and counts of the voxel grid as traversal arrays."""
    if geom.ndim == 3:
        h = np.array([geom.a, geom.b, geom.c])
        n = np.array([geom.n_x, geom.n_y, geom.n_z], dtype=np.int64)
    else:
        # a single slab of unit height around z = 0 carries the 2D grid
        h = np.array([geom.a, geom.b, 1.0])
        n = np.array([geom.n_x, geom.n_y, 1], dtype=np.int64)
    lo = -0.5 * n * h
    return lo, h, n


def footprint_scale(geom: ScanGeometry) -> float:
    """Factor turning path length into the units of a fraction weight."""
    mag = geom.s / geom.sd
    if geom.ndim == 3:
        return geom.d_y * geom.d_z * mag * mag / (geom.a * geom.b * geom.c)
    return geom.d_y * mag / (geom.a * geom.b)


def cell_centers(geom: ScanGeometry):
    """Detector coordinates ``(eta, zeta)`` of all cell centers in raster order."""
    eta = (np.arange(geom.n_det_y) + 0.5 - 0.5 * geom.n_det_y) * geom.d_y
    if geom.ndim == 3:
        zeta = (np.arange(geom.n_det_z) + 0.5 - 0.5 * geom.n_det_z) * geom.d_z
    else:
        zeta = np.zeros(1)
    return np.tile(eta, zeta.size), np.repeat(zeta, eta.size)


def detector_ray(phi, eta, zeta, geom: ScanGeometry):
    """Source and detector endpoints of the ray hitting detector coordinate ``(eta, zeta)``."""
    c, s_ = math.cos(phi), math.sin(phi)
    src = np.array([geom.s * c, geom.s * s_, 0.0])
    det = np.array([-geom.d * c - eta * s_, -geom.d * s_ + eta * c, zeta])
    return src, det


def line_block_for_angle(phi, geom: ScanGeometry, k: int = 1):
    """CSR block ``(counts, cols, vals)`` of the K-line matrix for one angle.

    In 3D ``k`` rays are placed along each detector axis (``k^2`` per cell).
    """
    lo, h, n = grid_arrays(geom)
    eta_c, zeta_c = cell_centers(geom)
    off_y = ray_offsets(k, geom.d_y)
    off_z = ray_offsets(k, geom.d_z) if geom.ndim == 3 else np.zeros(1)
    return line_block(math.cos(phi), math.sin(phi), geom.s, geom.d, eta_c, zeta_c,
                      off_y, off_z, lo, h, n, footprint_scale(geom))


def _voxel_key(j, geom: ScanGeometry) -> VoxelIndex:
    ix = j % geom.n_x
    iy = (j // geom.n_x) % geom.n_y
    iz = j // (geom.n_x * geom.n_y)
    return geom.voxel_index(int(ix), int(iy), int(iz))


def line_weights(ray, geom: ScanGeometry) -> dict:
    """Path length of ``ray = (p0, p1)`` in every voxel it crosses, keyed by :class:`VoxelIndex`."""
    p0 = np.asarray(ray[0], dtype=float).reshape(-1)
    p1 = np.asarray(ray[1], dtype=float).reshape(-1)
    if p0.size == 2:
        p0 = np.append(p0, 0.0)
        p1 = np.append(p1, 0.0)
    lo, h, n = grid_arrays(geom)
    m = int(n.sum()) + 3
    idx = np.empty(m, dtype=np.int64)
    ln = np.empty(m)
    cnt = traverse(p0, p1, lo, h, n, idx, ln)
    out = {}
    for i in range(cnt):
        key = _voxel_key(int(idx[i]), geom)
        out[key] = out.get(key, 0.0) + float(ln[i])
    return out


def multiline_weights(cell, k: int, phi, geom: ScanGeometry) -> dict:
    """Average path lengths of ``k`` equally spaced rays across detector cell ``(iy[, iz])``.

    In 3D the rays form a ``k x k`` lattice over the cell.
    """
    iy = cell[0]
    iz = cell[1] if len(cell) > 1 else 0
    eta0 = (iy + 0.5 - 0.5 * geom.n_det_y) * geom.d_y
    zeta0 = (iz + 0.5 - 0.5 * geom.n_det_z) * geom.d_z if geom.ndim == 3 else 0.0
    off_y = ray_offsets(k, geom.d_y)
    off_z = ray_offsets(k, geom.d_z) if geom.ndim == 3 else np.zeros(1)
    acc: dict = {}
    for oz in off_z:
        for oy in off_y:
            for key, v in line_weights(detector_ray(phi, eta0 + oy, zeta0 + oz, geom), geom).items():
                acc[key] = acc.get(key, 0.0) + v
    n_rays = off_y.size * off_z.size
    return {key: v / n_rays for key, v in acc.items()}
