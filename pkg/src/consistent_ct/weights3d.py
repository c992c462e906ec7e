"""Exact volume fractions of a voxel inside the cone of each detector cell.

Notation
--------
For a row plane ``z = tau * t`` (``tau = tan alpha`` of a detector row edge)
and a height ``z_p`` the signed excess ``e = z_p - tau * t`` is linear over the
top view.  ``Phi(beta; z_p, tau)`` integrates ``max(e, 0)`` over the part of the
top view with fan angle below ``beta``; the volume of the voxel above the
plane and below ``z_p`` follows.  The factors ``g``, ``f``, ``h`` and ``g_g``
are ``e / (tau a)`` at the ray's crossing with the front face, the rear face,
the bottom edge and at the cut corner.

Atoms
-----
* corner triangle: exact integral of ``max(e, 0)`` over a triangle, evaluated
  per sign pattern of its three vertex values (the ``C`` flags);
* trapezoid: difference of the two corner tetrahedra on the front and rear
  faces, arranged so that no ``1 / sin(phi)`` survives when both rays reach a
  face.  ``phi -> 0`` therefore needs no separate branch in the kernel.

Rows are composed from the volume above (``tau > 0``) or below (``tau < 0``)
each row edge plane; the row straddling ``z = 0`` receives the residual.  The
literal closed forms are kept next to the stable ones for cross-checking.
"""
from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np
from numba import njit

from .errors import CentralRow, DegenerateGeometry, SingularPhi
from .geometry import (
    EPS_ANG,
    EPS_SING,
    ScanGeometry,
    as_voxel_index,
    box_of,
    detector_edge_angle,
    row_edge_slope,
    vertex_angles,
)
from .weights2d import DEGENERATE, a3, cumulative_area, edge_range, pixel_setup


class FactorTriple(NamedTuple):
    g: float
    f: float
    h: float
    g_g: float
    tan_alpha: float


class CoefficientVector(NamedTuple):
    flags: tuple


# ------------------------------------------------------------------ kernels

@njit(cache=True)
def tri_mean(e1, e2, e3):
    """``3 / A`` times the integral of ``max(e, 0)`` over a triangle with vertex values ``e``."""
    p1, p2, p3 = e1 > 0.0, e2 > 0.0, e3 > 0.0
    n_on = int(p1) + int(p2) + int(p3)
    if n_on == 0:
        return 0.0
    if n_on == 3:
        return e1 + e2 + e3
    if n_on == 1:
        if p1:
            return e1 ** 3 / ((e1 - e2) * (e1 - e3))
        if p2:
            return e2 ** 3 / ((e2 - e1) * (e2 - e3))
        return e3 ** 3 / ((e3 - e1) * (e3 - e2))
    if not p1:
        return e1 + e2 + e3 + (-e1) ** 3 / ((e2 - e1) * (e3 - e1))
    if not p2:
        return e1 + e2 + e3 + (-e2) ** 3 / ((e1 - e2) * (e3 - e2))
    return e1 + e2 + e3 + (-e3) ** 3 / ((e1 - e3) * (e2 - e3))


@njit(cache=True)
def _lerp_param(tC, lC, tX, lX, T):
    den = (lX - lC) - (tX - tC) * T
    if den == 0.0:
        return 0.0
    lam = (tC * T - lC) / den
    return min(max(lam, 0.0), 1.0)


@njit(cache=True)
def corner_triangle(tC, lC, tO, lO, tF, lF, T, area, zp, tau):
    """Integral of ``max(zp - tau t, 0)`` over the corner triangle cut by ``tan(beta) = T``.

    ``C`` is the corner, ``O`` the other end of the crossed edge and ``F``
    the other end of the crossed face; ``area`` is the full rectangle area.
    """
    lo = _lerp_param(tC, lC, tO, lO, T)
    lf = _lerp_param(tC, lC, tF, lF, T)
    if lo == 0.0 or lf == 0.0:
        return 0.0
    e_c = zp - tau * tC
    e_o = zp - tau * (tC + lo * (tO - tC))
    e_f = zp - tau * (tC + lf * (tF - tC))
    return 0.5 * lo * lf * area * tri_mean(e_c, e_o, e_f) / 3.0


@njit(cache=True)
def face_channel(T1, T2, c, sn, D, zp, tau):
    """Volume above the plane and below ``zp`` behind one x face, between two rays.

    ``D = s cos(phi) - x_face``; ``T1 < T2`` are the ray tangents.
    """
    k1 = c + sn * T1
    k2 = c + sn * T2
    ts = zp / tau
    G1 = ts - D / k1
    G2 = ts - D / k2
    on1 = G1 > 0.0
    on2 = G2 > 0.0
    if on1 and on2:
        return tau / 6.0 * (T2 - T1) * (D * (G1 * G1 + G1 * G2 + G2 * G2) / k2 + G2 ** 3)
    if on1:
        if sn == 0.0:
            return 0.0
        return -tau * k1 * G1 ** 3 / (6.0 * sn)
    if on2:
        if sn == 0.0:
            return 0.0
        return tau * k2 * G2 ** 3 / (6.0 * sn)
    return 0.0


@njit(cache=True)
def trapezoid(T1, T2, c, sn, s, x0, x1, zp, tau):
    front = face_channel(T1, T2, c, sn, s * c - x1, zp, tau)
    rear = face_channel(T1, T2, c, sn, s * c - x0, zp, tau)
    return max(front - rear, 0.0)


@njit(cache=True)
def _corner_ids(st):
    if st[16] == 0.0:
        c1, o1, f1 = 0, 1, 3
    else:
        c1, o1, f1 = 1, 0, 2
    if st[17] == 0.0:
        c4, o4, f4 = 3, 2, 0
    else:
        c4, o4, f4 = 2, 3, 1
    return c1, o1, f1, c4, o4, f4


@njit(cache=True)
def _zone1(st, T, zp, tau, area):
    c1, o1, f1, c4, o4, f4 = _corner_ids(st)
    return corner_triangle(st[20 + c1], st[24 + c1], st[20 + o1], st[24 + o1],
                           st[20 + f1], st[24 + f1], T, area, zp, tau)


@njit(cache=True)
def _zone3(st, T, zp, tau, area):
    c1, o1, f1, c4, o4, f4 = _corner_ids(st)
    return corner_triangle(st[20 + c4], st[24 + c4], st[20 + o4], st[24 + o4],
                           st[20 + f4], st[24 + f4], T, area, zp, tau)


@njit(cache=True)
def phi_anchors(st, s, zp, tau, area):
    """``Phi`` at ``Gamma_2`` and over the whole top view."""
    base = _zone1(st, st[13], zp, tau, area)
    mid = trapezoid(st[13], st[14], st[2], st[3], s, st[4], st[5], zp, tau)
    top = _zone3(st, st[14], zp, tau, area)
    return base, base + mid + top


@njit(cache=True)
def cumulative_excess(T, st, s, zp, tau, area, base, total):
    """``Phi(beta; zp, tau)`` for ``tan(beta) = T`` and ``tau > 0``."""
    if T <= st[12]:
        return 0.0
    if T <= st[13]:
        return _zone1(st, T, zp, tau, area)
    if T <= st[14]:
        return base + trapezoid(st[13], T, st[2], st[3], s, st[4], st[5], zp, tau)
    if T <= st[15]:
        return total - _zone3(st, T, zp, tau, area)
    return total


@njit(cache=True)
def _fill_above(col, st, s, tan_edges, k_lo, nk, z_top, z_bot, tau, area, t_min, t_max,
                F, h):
    """Volume of the voxel ``[z_bot, z_top]`` above ``z = tau t`` on the low side of each edge."""
    if tau * t_min >= z_top:
        for i in range(nk):
            col[i] = 0.0
        return
    if tau * t_max <= z_bot:
        for i in range(nk):
            col[i] = F[i] * area * h
        return
    b1, tot1 = phi_anchors(st, s, z_top, tau, area)
    b0, tot0 = phi_anchors(st, s, z_bot, tau, area)
    for i in range(nk):
        T = tan_edges[k_lo + i]
        col[i] = (cumulative_excess(T, st, s, z_top, tau, area, b1, tot1)
                  - cumulative_excess(T, st, s, z_bot, tau, area, b0, tot0))


@njit(cache=True)
def voxel_weights(x0, x1, y0, y1, z0, z1, cphi, sphi, s, beta_edges, tan_edges, tanz_edges,
                  n_det_y, out_cell, out_w, F, A, B):
    """Fill ``out_cell`` (raster index ``iz * n_det_y + iy``) and ``out_w`` for one voxel.

    ``F`` (length >= n_det_y + 1) and ``A``, ``B`` (shape >= (n_det_y + 1,
    n_det_z + 1)) are scratch buffers.  Returns the entry count or
    ``DEGENERATE``.
    """
    st = pixel_setup(x0, x1, y0, y1, cphi, sphi, s)
    if st[0] == 0.0:
        return DEGENERATE
    k_lo, k_hi = edge_range(st[12], st[15], tan_edges)
    if k_lo >= k_hi:
        return 0
    t_min = min(min(st[20], st[21]), min(st[22], st[23]))
    t_max = max(max(st[20], st[21]), max(st[22], st[23]))
    s_lo = min(z0 / t_min, z0 / t_max)
    s_hi = max(z1 / t_min, z1 / t_max)
    j_lo, j_hi = edge_range(s_lo, s_hi, tanz_edges)
    if j_lo >= j_hi:
        return 0
    nk = k_hi - k_lo + 1
    nj = j_hi - j_lo + 1
    area = (st[5] - st[4]) * (st[7] - st[6])
    h = z1 - z0
    ratio = (st[5] - st[4]) / (st[7] - st[6])
    full_bottom = a3(st[1], st[8], st[9], st[9], ratio)
    for i in range(nk):
        k = k_lo + i
        F[i] = cumulative_area(beta_edges[k], tan_edges[k], st, s, full_bottom)
    for jj in range(nj):
        tau = tanz_edges[j_lo + jj]
        if tau > 0.0:
            _fill_above(A[:, jj], st, s, tan_edges, k_lo, nk, z1, z0, tau, area,
                        t_min, t_max, F, h)
        elif tau < 0.0:
            _fill_above(B[:, jj], st, s, tan_edges, k_lo, nk, -z0, -z1, -tau, area,
                        t_min, t_max, F, h)
        else:
            up = max(0.0, z1 - max(z0, 0.0))
            dn = max(0.0, min(z1, 0.0) - z0)
            for i in range(nk):
                A[i, jj] = F[i] * area * up
                B[i, jj] = F[i] * area * dn
    vol = area * h
    cnt = 0
    for i in range(nk - 1):
        strip = (F[i + 1] - F[i]) * vol
        if strip <= 0.0:
            continue
        for jj in range(nj - 1):
            t_lo = tanz_edges[j_lo + jj]
            t_hi = tanz_edges[j_lo + jj + 1]
            if t_lo >= 0.0:
                w = (A[i + 1, jj] - A[i, jj]) - (A[i + 1, jj + 1] - A[i, jj + 1])
            elif t_hi <= 0.0:
                w = (B[i + 1, jj + 1] - B[i, jj + 1]) - (B[i + 1, jj] - B[i, jj])
            else:
                w = strip - (A[i + 1, jj + 1] - A[i, jj + 1]) - (B[i + 1, jj] - B[i, jj])
            w /= vol
            if w > 0.0:
                out_cell[cnt] = (j_lo + jj) * n_det_y + k_lo + i
                out_w[cnt] = w
                cnt += 1
    return cnt


class VoxelWorkspace:
    """Edge tables and scratch buffers for repeated :func:`voxel_weights` calls."""

    def __init__(self, geom: ScanGeometry):
        self.tan_edges = geom.tan_beta_edges()
        self.beta_edges = np.arctan(self.tan_edges)
        self.tanz_edges = geom.tan_alpha_edges()
        ny, nz = geom.n_det_y + 1, geom.n_det_z + 1
        self.F = np.empty(ny)
        self.A = np.zeros((ny, nz))
        self.B = np.zeros((ny, nz))
        self.cell = np.empty(geom.n_det, dtype=np.int64)
        self.w = np.empty(geom.n_det)


def voxel_volume_factors_box(box, phi, geom: ScanGeometry, ws: VoxelWorkspace = None,
                             max_rows=None) -> dict:
    """Weights ``{(iy, iz): fraction}`` of the voxel ``(x0, x1, y0, y1, z0, z1)``."""
    from .errors import ZRestrictionViolation

    ws = ws or VoxelWorkspace(geom)
    cnt = voxel_weights(*box, math.cos(phi), math.sin(phi), geom.s, ws.beta_edges,
                        ws.tan_edges, ws.tanz_edges, geom.n_det_y, ws.cell, ws.w,
                        ws.F, ws.A, ws.B)
    if cnt == DEGENERATE:
        raise DegenerateGeometry("voxel corner not in front of the source")
    out = {(int(ws.cell[i] % geom.n_det_y), int(ws.cell[i] // geom.n_det_y)): float(ws.w[i])
           for i in range(cnt)}
    if max_rows is not None:
        rows = {iz for _, iz in out}
        if len(rows) > max_rows:
            raise ZRestrictionViolation(f"voxel spans {len(rows)} detector rows")
    return out


def voxel_volume_factors(n, phi, geom: ScanGeometry, max_rows=None) -> dict:
    """Weights of voxel ``n`` keyed by ``(iy, iz)`` detector cell indices."""
    return voxel_volume_factors_box(box_of(as_voxel_index(n), geom), phi, geom,
                                    max_rows=max_rows)


# ------------------------------------------------------- closed-form factors

def _tau(m_z, geom):
    if m_z == 0:
        raise CentralRow("m_z = 0 has no row plane slope")
    return row_edge_slope(m_z, geom)


def _m_of_beta(beta, geom):
    return math.tan(beta) * geom.sd / geom.d_y


def factors(m_y, m_z, n, phi, geom: ScanGeometry) -> FactorTriple:
    """``g``, ``f``, ``h``, ``g_g`` of the ray ``(m_y, m_z)`` against voxel ``n``.

    ``g``/``f`` refer to the faces ``x = (n_x+1) a`` / ``x = n_x a``, ``h`` to the
    edge ``y = n_y b`` and ``g_g`` to the corner ``((n_x+1) a, n_y b)``, all at the
    top height ``(n_z+1) c``.  ``m_y`` may be fractional.
    """
    n = as_voxel_index(n)
    tau = _tau(m_z, geom)
    beta = detector_edge_angle(m_y, geom)
    a, b, c, s = geom.a, geom.b, geom.c, geom.s
    cb = math.cos(beta)
    cpb, spb = math.cos(phi - beta), math.sin(phi - beta)
    if abs(cpb) < EPS_ANG:
        raise DegenerateGeometry("ray parallel to the x faces")
    g0 = c / a * (n.n_z + 1) / tau
    g = g0 - cb / cpb * (s * math.cos(phi) - (n.n_x + 1) * a) / a
    f = g0 - cb / cpb * (s * math.cos(phi) - n.n_x * a) / a
    if spb != 0.0:
        h = g0 - cb / spb * (s * math.sin(phi) - n.n_y * b) / a
    else:
        h = -math.copysign(math.inf, s * math.sin(phi) - n.n_y * b)
    gg = g0 - (s - (n.n_x + 1) * a * math.cos(phi) - n.n_y * b * math.sin(phi)) / a
    return FactorTriple(g, f, h, gg, tau)


def factors_gamma_form(m_y, m_z, n, phi, geom: ScanGeometry) -> FactorTriple:
    """Same factors written through the corner angles ``gamma_1``, ``gamma_2``.

    The substitution uses ``a`` for the edge length, so it agrees with
    :func:`factors` for ``a = b`` only in ``h``.
    """
    n = as_voxel_index(n)
    tau = _tau(m_z, geom)
    beta = detector_edge_angle(m_y, geom)
    g1, g2 = vertex_angles(n, phi, geom)[:2]
    sd = math.sin(g1 - g2)
    if abs(sd) < EPS_ANG:
        raise DegenerateGeometry("bottom edge seen edge-on")
    cb = math.cos(beta)
    cpb, spb = math.cos(phi - beta), math.sin(phi - beta)
    g0 = geom.c / geom.a * (n.n_z + 1) / tau
    g = g0 - cb * math.cos(phi - g2) * math.sin(phi - g1) / (cpb * sd)
    f = g0 - cb * math.cos(phi - g1) * math.sin(phi - g2) / (cpb * sd)
    h = g0 - cb * math.sin(phi - g2) * math.sin(phi - g1) / (spb * sd)
    gg = g0 - math.cos(g2) * math.sin(phi - g1) / sd
    return FactorTriple(g, f, h, gg, tau)


def identity_residuals(m_y, m_z, n, phi, geom: ScanGeometry) -> dict:
    """Relative residuals of the factor and corner-angle identities.

    Keys: ``f_minus_g``, ``gi_gg``, ``cot_diff``, ``sin_ny``, ``cos_nx``,
    ``cos_nx1``.  The corner-angle relations treat the bottom edge of length ``a``.
    """
    n = as_voxel_index(n)
    tri = factors(m_y, m_z, n, phi, geom)
    beta = detector_edge_angle(m_y, geom)
    k, j = _ratio(phi, beta)
    a, s = geom.a, geom.s
    g1, g2 = vertex_angles(n, phi, geom)[:2]
    sd = math.sin(g1 - g2)
    sny = s * math.sin(phi) - n.n_y * geom.b
    cnx = s * math.cos(phi) - n.n_x * a
    cnx1 = s * math.cos(phi) - (n.n_x + 1) * a

    def rel(lhs, rhs, *terms):
        # scaled by the largest term, so cancellation in the lhs is not charged
        return abs(sum(lhs) - rhs) / max(max(abs(t) for t in lhs + terms), abs(rhs), 1e-300)

    c1 = math.cos(phi - g1) / math.sin(phi - g1)
    c2 = math.cos(phi - g2) / math.sin(phi - g2)
    return dict(
        f_minus_g=rel((tri.g, -tri.f), 1.0 / k),
        gi_gg=rel((math.cos(phi) * k * tri.g, math.sin(phi) * j * tri.h), tri.g_g),
        cot_diff=rel((c1, -c2), a / sny),
        sin_ny=rel((sny,), a * math.sin(phi - g2) * math.sin(phi - g1) / sd),
        cos_nx=rel((cnx,), a * math.sin(phi - g2) * math.cos(phi - g1) / sd),
        cos_nx1=rel((cnx1,), a * math.cos(phi - g2) * math.sin(phi - g1) / sd),
    )


def _ratio(phi, beta):
    return math.cos(phi - beta) / math.cos(beta), math.sin(phi - beta) / math.cos(beta)


def tetra_volume(triple: FactorTriple, phi, geom: ScanGeometry, face="front") -> float:
    """Corner tetrahedron cut from the front (``g``) or rear (``f``) face; absolute volume.

    ``cos(phi - beta) / cos(beta)`` is recovered as ``1 / (g - f)``.
    """
    if abs(math.sin(phi)) <= EPS_SING:
        raise SingularPhi("use the phi = 0 branch")
    if face not in ("front", "rear"):
        raise ValueError("face must be 'front' or 'rear'")
    k = 1.0 / (triple.g - triple.f)
    val = triple.g if face == "front" else triple.f
    return geom.a ** 3 / 6.0 * abs(triple.tan_alpha / math.sin(phi) * k * val ** 3)


def _as_flags(C):
    if C is None:
        return None
    return tuple(int(v) for v in (C.flags if isinstance(C, CoefficientVector) else C))


def coefficient_flags(values) -> CoefficientVector:
    """Flags from factor signs; a factor of exactly zero maps to 0."""
    return CoefficientVector(tuple(int(v > 0.0) for v in values))


def _check_flags(values, C):
    auto = coefficient_flags(values).flags
    given = _as_flags(C)
    if given is not None and given != auto:
        raise ValueError(f"flags {given} disagree with factor signs {auto}")
    return auto


def _pick_flags(values, C):
    given = _as_flags(C)
    return given if given is not None else coefficient_flags(values).flags


def _pair(m_z, beta_lo, beta_hi, n, phi, geom):
    return (factors(_m_of_beta(beta_lo, geom), m_z, n, phi, geom),
            factors(_m_of_beta(beta_hi, geom), m_z, n, phi, geom))


def vol_rel_trapezoid_literal(m_z, beta_lo, beta_hi, C, n, phi, geom: ScanGeometry):
    """Printed closed form of the top-view trapezoid volume (relative to ``abc``).

    Valid for rising planes (``m_z > 0``); loses about ``eps / (sin(phi) dtan)``
    to cancellation.
    """
    if abs(math.sin(phi)) <= EPS_SING:
        raise SingularPhi("use vol_rel_trapezoid_singular")
    lo, hi = _pair(m_z, beta_lo, beta_hi, n, phi, geom)
    cg0, cf0, cg1, cf1 = _pick_flags((lo.g, lo.f, hi.g, hi.f), C)
    k0, _ = _ratio(phi, beta_lo)
    k1, _ = _ratio(phi, beta_hi)
    bracket = (k0 * (cg0 * lo.g ** 3 - cf0 * lo.f ** 3)
               - k1 * (cg1 * hi.g ** 3 - cf1 * hi.f ** 3))
    return geom.a ** 2 / (6.0 * geom.b * geom.c) * abs(lo.tan_alpha / math.sin(phi) * bracket)


def vol_rel_trapezoid(m_z, beta_lo, beta_hi, C, n, phi, geom: ScanGeometry):
    """Volume between two rays crossing both x faces, above row plane ``m_z``, below the top.

    Relative to ``abc``, with no floor.  Evaluated without the ``1/sin(phi)``
    cancellation; ``C`` (if not None) must match the factor signs of
    ``(g_lo, f_lo, g_hi, f_hi)``.
    """
    if abs(math.sin(phi)) <= EPS_SING:
        raise SingularPhi("use vol_rel_trapezoid_singular")
    return _vol_rel_trapezoid_any(m_z, beta_lo, beta_hi, C, n, phi, geom)


def _vol_rel_trapezoid_any(m_z, beta_lo, beta_hi, C, n, phi, geom):
    n = as_voxel_index(n)
    lo, hi = _pair(m_z, beta_lo, beta_hi, n, phi, geom)
    _check_flags((lo.g, lo.f, hi.g, hi.f), C)
    tau = lo.tan_alpha
    x0, x1 = n.n_x * geom.a, (n.n_x + 1) * geom.a
    zp = (n.n_z + 1) * geom.c
    T1, T2 = sorted((math.tan(beta_lo), math.tan(beta_hi)))
    c, sn = math.cos(phi), math.sin(phi)
    if tau > 0:
        v = trapezoid(T1, T2, c, sn, geom.s, x0, x1, zp, tau)
    else:
        # max(e, 0) = e + max(-e, 0); the second term is a rising-plane problem
        v = trapezoid(T1, T2, c, sn, geom.s, x0, x1, -zp, -tau)
        if T2 > T1:
            area, t_mean = _trapezoid_moments(T1, T2, c, sn, geom.s * c - x1, geom.s * c - x0)
            v += area * (zp - tau * t_mean)
    return v / (geom.a * geom.b * geom.c)


def _trapezoid_moments(T1, T2, c, sn, D1, D0):
    """Area and mean depth of the quadrilateral between two rays and two x faces."""
    pts = []
    for D, T in ((D1, T1), (D1, T2), (D0, T2), (D0, T1)):
        t = D / (c + sn * T)
        pts.append((t, t * T))
    area = 0.0
    ct = 0.0
    for i in range(4):
        (t0, l0), (t1, l1) = pts[i], pts[(i + 1) % 4]
        cr = t0 * l1 - t1 * l0
        area += cr
        ct += (t0 + t1) * cr
    return abs(area) / 2.0, ct / (3.0 * area)


def vol_rel_trapezoid_singular(m_z, beta_lo, beta_hi, C, n, geom: ScanGeometry):
    """Trapezoid volume at ``phi = 0``, where ``g`` and ``f`` do not depend on the ray.

    The polynomial holds for rising planes; ``m_z < 0`` goes through the
    stable evaluation at ``phi = 0``.
    """
    n = as_voxel_index(n)
    if m_z < 0:
        return _vol_rel_trapezoid_any(m_z, beta_lo, beta_hi, C, n, 0.0, geom)
    tri = factors(_m_of_beta(beta_lo, geom), m_z, n, 0.0, geom)
    flags = _as_flags(C)
    cg, cf = flags[:2] if flags is not None else coefficient_flags((tri.g, tri.f)).flags
    sa = geom.s / geom.a
    bracket = (cg * tri.g ** 2 * (tri.g + 3 * sa - 3 * n.n_x - 3)
               - cf * tri.f ** 2 * (tri.f + 3 * sa - 3 * n.n_x))
    return geom.a ** 2 / (6.0 * geom.b * geom.c) * abs(
        tri.tan_alpha * bracket * (math.tan(beta_lo) - math.tan(beta_hi)))


def vol_rel_triangle_literal(m_z, beta, C, n, phi, geom: ScanGeometry):
    """Printed closed form of the corner-triangle volume at ``((n_x+1) a, n_y b)``."""
    if abs(math.sin(phi)) <= EPS_SING or abs(math.cos(phi)) <= EPS_SING:
        raise SingularPhi("use vol_rel_triangle_singular")
    tri = factors(_m_of_beta(beta, geom), m_z, n, phi, geom)
    cy, cx, cg = _pick_flags((tri.g, tri.h, tri.g_g), C)
    k, j = _ratio(phi, beta)
    bracket = (cy * k * tri.g ** 3 + cx * math.tan(phi) * j * tri.h ** 3
               - cg * tri.g_g ** 3 / math.cos(phi))
    return geom.a ** 2 / (6.0 * geom.b * geom.c) * abs(tri.tan_alpha / math.sin(phi) * bracket)


def vol_rel_triangle(m_z, beta, C, n, phi, geom: ScanGeometry):
    """Corner-triangle volume at ``((n_x+1) a, n_y b)`` above row plane ``m_z``.

    The triangle is bounded by the front face, the bottom edge and the ray
    ``beta``.  Evaluated per sign pattern of ``(g, h, g_g)``; ``C`` (if not
    None) must match those signs.
    """
    if abs(math.sin(phi)) <= EPS_SING:
        raise SingularPhi("use vol_rel_triangle_singular")
    return _vol_rel_triangle_any(m_z, beta, C, n, phi, geom)


def _vol_rel_triangle_any(m_z, beta, C, n, phi, geom):
    n = as_voxel_index(n)
    tri = factors(_m_of_beta(beta, geom), m_z, n, phi, geom)
    _check_flags((tri.g, tri.h, tri.g_g), C)
    g1, g2 = vertex_angles(n, phi, geom)[:2]
    frac = a3(phi, g2, g1, beta, geom.a / geom.b)
    scale = tri.tan_alpha * geom.a
    mean = tri_mean(scale * tri.g, scale * tri.h, scale * tri.g_g)
    return abs(frac * mean / 3.0) / geom.c


def vol_rel_triangle_singular(m_z, beta, C, n, geom: ScanGeometry):
    """Corner-triangle volume at ``phi = 0``.

    The per-pattern triangle integral has no ``1/sin(phi)`` and is evaluated
    directly at ``phi = 0``; see :func:`vol_rel_triangle_singular_literal`
    for the expanded polynomial, which cancels badly for thin triangles.
    """
    return _vol_rel_triangle_any(m_z, beta, C, n, 0.0, geom)


def vol_rel_triangle_singular_literal(m_z, beta, C, n, geom: ScanGeometry):
    """Expanded ``phi = 0`` polynomial of the corner-triangle volume."""
    n = as_voxel_index(n)
    tri = factors(_m_of_beta(beta, geom), m_z, n, 0.0, geom)
    flags = _as_flags(C)
    cy, cx = flags[:2] if flags is not None else coefficient_flags((tri.g, tri.h)).flags
    g1, g2 = vertex_angles(n, 0.0, geom)[:2]
    tb = math.tan(beta)
    q = math.sin(g1) * math.sin(beta - g2) / (math.sin(g1 - g2) * math.cos(beta))
    bracket = cy * tri.g ** 2 * (tb * tri.g - 3 * q) - cx * tb * tri.h ** 3
    return geom.a ** 2 / (6.0 * geom.b * geom.c) * abs(tri.tan_alpha * bracket)


def vol_rel(m_z, betas, C, n, phi, geom: ScanGeometry):
    """Dispatch on ``len(betas)`` (1: triangle, 2: trapezoid) and on ``phi``."""
    singular = abs(math.sin(phi)) <= EPS_SING
    if len(betas) == 2:
        if singular:
            return vol_rel_trapezoid_singular(m_z, betas[0], betas[1], C, n, geom)
        return vol_rel_trapezoid(m_z, betas[0], betas[1], C, n, phi, geom)
    if singular:
        return vol_rel_triangle_singular(m_z, betas[0], C, n, geom)
    return vol_rel_triangle(m_z, betas[0], C, n, phi, geom)


def vol_res(m_z, betas, C_m, C_m_minus, n, phi, geom: ScanGeometry):
    """Volume between row planes ``m_z - 1`` and ``m_z``, clamped at 0."""
    upper = vol_rel(m_z - 1, betas, C_m_minus, n, phi, geom)
    lower = vol_rel(m_z, betas, C_m, n, phi, geom)
    return max(upper - lower, 0.0)
