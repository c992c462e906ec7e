"""Exact area fractions of a pixel inside the fan of each detector cell.

A pixel seen from the source is cut by the edge rays of the detector cells.
After a quarter-turn normalisation (:func:`canonical_box`) the two bottom
corners precede the two top corners in fan angle, so the cumulative covered
area ``F(beta)`` of the pixel below the ray ``beta`` has three zones:

* a corner triangle (``A3``) while the ray crosses the bottom edge,
* that triangle plus a trapezoid (``A4``) while it crosses both x faces,
* one minus the opposite corner triangle while it crosses the top edge.

Cell weights are differences of ``F`` at consecutive detector edges.
"""
from __future__ import annotations

import math

import numpy as np
from numba import njit

from .errors import DegenerateGeometry
from .geometry import (
    EPS_ANG,
    ScanGeometry,
    VoxelIndex,
    as_voxel_index,
    box_of,
    detector_edge_angle,
)

DEGENERATE = -1


@njit(cache=True)
def canonical_box(x0, x1, y0, y1, cphi, sphi, s):
    """Quarter-turn a box so the source lies on its +x side.

    Returns ``(q, x0, x1, y0, y1, cos phi', sin phi')`` in the rotated frame.
    """
    u = (s * cphi - 0.5 * (x0 + x1)) / (x1 - x0)
    v = (s * sphi - 0.5 * (y0 + y1)) / (y1 - y0)
    if u >= abs(v):
        return 0, x0, x1, y0, y1, cphi, sphi
    if v >= abs(u):
        return 1, y0, y1, -x1, -x0, sphi, -cphi
    if -u >= abs(v):
        return 2, -x1, -x0, -y1, -y0, -cphi, -sphi
    return 3, -y1, -y0, x0, x1, -sphi, cphi


@njit(cache=True)
def a3(phi, g_corner, g_other, beta, ratio):
    """Corner-triangle fraction cut off by the ray ``beta``.

    ``g_corner`` is the fan angle of the cut corner, ``g_other`` that of the
    other end of the edge the ray crosses, ``ratio`` = edge length / face length.
    """
    sd = math.sin(g_corner - g_other)
    if sd == 0.0:
        return 0.0
    num = math.sin(phi - g_other) * math.sin(beta - g_corner) / sd
    if num == 0.0 or abs(phi - beta) < 1e-12:
        return 0.0
    den = abs(math.sin(2.0 * (phi - beta)))
    return ratio * num * num / den


@njit(cache=True)
def a4(phi, s_cos_phi, x_mid, beta_lo, beta_hi, face):
    """Trapezoid fraction between two rays crossing both x faces; ``face`` = y width."""
    return abs(s_cos_phi - x_mid) * abs(math.tan(phi - beta_lo) - math.tan(phi - beta_hi)) / face


@njit(cache=True)
def pixel_setup(x0, x1, y0, y1, cphi, sphi, s):
    """Canonical frame and sorted corner data of one pixel.

    Returns a flat float array::

        [ok, phi', cos', sin', x0, x1, y0, y1,
         G1, G2, G3, G4 (angles), tG1..tG4 (tangents),
         c1 (corner of zone 1, 0 for x0 / 1 for x1), c4 (corner of zone 3),
         t_V1..t_V4, l_V1..l_V4]
    """
    out = np.zeros(30)
    q, x0, x1, y0, y1, c, sn = canonical_box(x0, x1, y0, y1, cphi, sphi, s)
    xs = (x0, x1, x1, x0)
    ys = (y0, y0, y1, y1)
    for i in range(4):
        t = s - xs[i] * c - ys[i] * sn
        if t <= 1e-12 * s:
            return out
        out[20 + i] = t
        out[24 + i] = ys[i] * c - xs[i] * sn
    g = np.empty(4)
    tg = np.empty(4)
    for i in range(4):
        tg[i] = out[24 + i] / out[20 + i]
        g[i] = math.atan(tg[i])
    # bottom corners V1 (x0), V2 (x1); top corners V3 (x1), V4 (x0)
    if g[0] <= g[1]:
        c1 = 0
        G1, G2, tG1, tG2 = g[0], g[1], tg[0], tg[1]
    else:
        c1 = 1
        G1, G2, tG1, tG2 = g[1], g[0], tg[1], tg[0]
    if g[3] >= g[2]:
        c4 = 0
        G4, G3, tG4, tG3 = g[3], g[2], tg[3], tg[2]
    else:
        c4 = 1
        G4, G3, tG4, tG3 = g[2], g[3], tg[2], tg[3]
    out[0] = 1.0
    out[1] = math.atan2(sn, c)
    out[2] = c
    out[3] = sn
    out[4] = x0
    out[5] = x1
    out[6] = y0
    out[7] = y1
    out[8] = G1
    out[9] = G2
    out[10] = G3
    out[11] = G4
    out[12] = tG1
    out[13] = tG2
    out[14] = tG3
    out[15] = tG4
    out[16] = c1
    out[17] = c4
    return out


@njit(cache=True)
def cumulative_area(beta, tb, st, s, full_bottom):
    """Covered fraction ``F(beta)`` of the pixel on the low-angle side of ``beta``.

    ``tb = tan(beta)``; ``st`` is the :func:`pixel_setup` array and
    ``full_bottom`` the zone-1 triangle at ``Gamma_2``.
    """
    phi = st[1]
    ratio = (st[5] - st[4]) / (st[7] - st[6])
    if tb <= st[12]:
        return 0.0
    if tb <= st[13]:
        return a3(phi, st[8], st[9], beta, ratio)
    if tb <= st[14]:
        xm = 0.5 * (st[4] + st[5])
        return full_bottom + a4(phi, s * st[2], xm, st[9], beta, st[7] - st[6])
    if tb <= st[15]:
        return 1.0 - a3(phi, st[11], st[10], beta, ratio)
    return 1.0


@njit(cache=True)
def edge_range(lo_tan, hi_tan, tan_edges):
    """Edges ``k_lo..k_hi`` bracketing the tangent interval ``[lo_tan, hi_tan]``."""
    n = tan_edges.shape[0] - 1
    k_lo = np.searchsorted(tan_edges, lo_tan, side="right") - 1
    k_hi = np.searchsorted(tan_edges, hi_tan, side="left")
    if k_lo < 0:
        k_lo = 0
    if k_hi > n:
        k_hi = n
    return k_lo, k_hi


@njit(cache=True)
def pixel_weights(x0, x1, y0, y1, cphi, sphi, s, beta_edges, tan_edges, out_idx, out_w):
    """Fill ``out_idx``/``out_w`` with the nonzero cell weights of one pixel.

    Returns the number of entries, or ``DEGENERATE`` when a corner is not in
    front of the source.
    """
    st = pixel_setup(x0, x1, y0, y1, cphi, sphi, s)
    if st[0] == 0.0:
        return DEGENERATE
    k_lo, k_hi = edge_range(st[12], st[15], tan_edges)
    if k_lo >= k_hi:
        return 0
    ratio = (st[5] - st[4]) / (st[7] - st[6])
    full_bottom = a3(st[1], st[8], st[9], st[9], ratio)
    cnt = 0
    prev = cumulative_area(beta_edges[k_lo], tan_edges[k_lo], st, s, full_bottom)
    for k in range(k_lo + 1, k_hi + 1):
        cur = cumulative_area(beta_edges[k], tan_edges[k], st, s, full_bottom)
        w = cur - prev
        prev = cur
        if w > 0.0:
            out_idx[cnt] = k - 1
            out_w[cnt] = w
            cnt += 1
    return cnt


# ------------------------------------------------------------------ Python API

def _edge_arrays(geom: ScanGeometry):
    tan_edges = geom.tan_beta_edges()
    return np.arctan(tan_edges), tan_edges


def triangle_area_factor(phi, gamma_corner, gamma_other, beta, geom: ScanGeometry,
                         ratio=None) -> float:
    """Relative area of the corner triangle between a pixel edge, a face and ray ``beta``.

    ``gamma_corner`` is the fan angle of the cut corner and ``gamma_other``
    the other corner of the crossed edge.  ``ratio`` defaults to ``a / b``.
    """
    ratio = geom.a / geom.b if ratio is None else ratio
    if abs(math.sin(gamma_corner - gamma_other)) < EPS_ANG:
        return 0.0
    if abs(math.sin(phi - beta)) < EPS_ANG:
        # ray parallel to the x faces cuts no corner
        return 0.0
    num = math.sin(phi - gamma_other) * math.sin(beta - gamma_corner) \
        / math.sin(gamma_corner - gamma_other)
    if abs(math.cos(phi - beta)) < EPS_ANG and abs(num) >= EPS_ANG:
        raise DegenerateGeometry("triangle factor for a ray parallel to the y faces")
    return float(a3(phi, gamma_corner, gamma_other, beta, ratio))


def trapezoid_area_factor(phi, n_x, beta_lo, beta_hi, geom: ScanGeometry) -> float:
    """Relative area between two rays that cross both x faces of column ``n_x``."""
    for beta in (beta_lo, beta_hi):
        if abs(math.cos(phi - beta)) < EPS_ANG:
            raise DegenerateGeometry("ray parallel to the x faces")
    return float(a4(phi, geom.s * math.cos(phi), (n_x + 0.5) * geom.a, beta_lo, beta_hi, geom.b))


def pixel_area_factors_box(box, phi, geom: ScanGeometry) -> dict:
    """Weights ``{cell index: fraction}`` of the pixel ``(x0, x1, y0, y1)``."""
    beta_edges, tan_edges = _edge_arrays(geom)
    idx = np.empty(geom.n_det_y, dtype=np.int64)
    w = np.empty(geom.n_det_y)
    x0, x1, y0, y1 = box[:4]
    cnt = pixel_weights(x0, x1, y0, y1, math.cos(phi), math.sin(phi), geom.s,
                        beta_edges, tan_edges, idx, w)
    if cnt == DEGENERATE:
        raise DegenerateGeometry("pixel corner not in front of the source")
    return {int(idx[i]): float(w[i]) for i in range(cnt)}


def pixel_area_factors(n, phi, geom: ScanGeometry) -> dict:
    """Weights of pixel ``n`` keyed by detector cell index ``0..n_det_y-1``.

    Cell ``i`` lies between signed edges ``i - n_det_y/2`` and ``i + 1 - n_det_y/2``.
    """
    return pixel_area_factors_box(box_of(as_voxel_index(n), geom), phi, geom)


def zone_atoms(n: VoxelIndex, phi: float, geom: ScanGeometry) -> dict:
    """Sorted corner angles and the zone-1 full triangle of a pixel (for inspection)."""
    x0, x1, y0, y1 = box_of(as_voxel_index(n), geom)[:4]
    st = pixel_setup(x0, x1, y0, y1, math.cos(phi), math.sin(phi), geom.s)
    if st[0] == 0.0:
        raise DegenerateGeometry("pixel corner not in front of the source")
    return dict(phi=st[1], Gamma=tuple(st[8:12]), box=tuple(st[4:8]),
                zone1_corner="x1" if st[16] else "x0", zone3_corner="x1" if st[17] else "x0")


