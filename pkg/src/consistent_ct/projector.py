"""System matrix assembly, forward and adjoint projection, spectral norm.

Rows are ordered angle-major: ``row = angle * N_d + iz * n_det_y + iy``.
Columns follow the image raster ``(iz * n_y + iy) * n_x + ix``.  Every angle
is assembled into its own CSR block with sorted columns, and the blocks are
concatenated in angle order, so the result does not depend on scheduling.
"""
from __future__ import annotations

import math
import os
import re
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from numba import njit

from .baseline import line_block_for_angle
from .errors import (
    DegenerateGeometry,
    DimensionMismatch,
    InvalidSpec,
    OutOfMemory,
    ZeroMatrix,
)
from .geometry import ScanGeometry, validate_z_restriction
from .weights2d import DEGENERATE, pixel_weights
from .weights3d import voxel_weights

BYTES_PER_NNZ = 12


@njit(cache=True)
def _grow(cols, vals, need):
    cap = max(2 * cols.shape[0], need)
    c2 = np.empty(cap, dtype=np.int32)
    v2 = np.empty(cap)
    c2[:cols.shape[0]] = cols
    v2[:vals.shape[0]] = vals
    return c2, v2


@njit(cache=True)
def _coo_to_csr(rows, cols, vals, total, n_rows):
    counts = np.zeros(n_rows, dtype=np.int64)
    for i in range(total):
        counts[rows[i]] += 1
    start = np.zeros(n_rows + 1, dtype=np.int64)
    for r in range(n_rows):
        start[r + 1] = start[r] + counts[r]
    pos = start[:-1].copy()
    out_c = np.empty(total, dtype=np.int32)
    out_v = np.empty(total)
    # stable scatter keeps the voxel order, so columns come out sorted
    for i in range(total):
        r = rows[i]
        out_c[pos[r]] = cols[i]
        out_v[pos[r]] = vals[i]
        pos[r] += 1
    return counts, out_c, out_v


@njit(cache=True)
def consistent_block_2d(cphi, sphi, s, beta_edges, tan_edges, nx, ny, a, b):
    """CSR block ``(counts, cols, vals)`` of one angle; ``counts[0] < 0`` flags a degenerate pixel."""
    n_det = tan_edges.shape[0] - 1
    cap = nx * ny * 4 + 16
    rows = np.empty(cap, dtype=np.int32)
    cols = np.empty(cap, dtype=np.int32)
    vals = np.empty(cap)
    idx = np.empty(n_det, dtype=np.int64)
    w = np.empty(n_det)
    total = 0
    for iy in range(ny):
        y0 = (iy - 0.5 * ny) * b
        for ix in range(nx):
            x0 = (ix - 0.5 * nx) * a
            cnt = pixel_weights(x0, x0 + a, y0, y0 + b, cphi, sphi, s, beta_edges, tan_edges,
                                idx, w)
            if cnt == DEGENERATE:
                bad = np.full(1, -1, dtype=np.int64)
                return bad, cols[:0], vals[:0]
            if total + cnt > cap:
                cols, vals = _grow(cols, vals, total + cnt)
                r2 = np.empty(cols.shape[0], dtype=np.int32)
                r2[:total] = rows[:total]
                rows = r2
                cap = cols.shape[0]
            j = iy * nx + ix
            for i in range(cnt):
                rows[total] = idx[i]
                cols[total] = j
                vals[total] = w[i]
                total += 1
    return _coo_to_csr(rows, cols, vals, total, n_det)


@njit(cache=True)
def consistent_block_3d(cphi, sphi, s, beta_edges, tan_edges, tanz_edges, nx, ny, nz, a, b, c,
                        max_rows):
    """CSR block of one angle in 3D.

    ``counts[0] = -1`` flags a degenerate voxel, ``-2`` a voxel touching more
    than ``max_rows`` detector rows (``max_rows <= 0`` disables the check).
    """
    n_dy = tan_edges.shape[0] - 1
    n_dz = tanz_edges.shape[0] - 1
    n_det = n_dy * n_dz
    cap = nx * ny * nz * 8 + 16
    rows = np.empty(cap, dtype=np.int32)
    cols = np.empty(cap, dtype=np.int32)
    vals = np.empty(cap)
    cell = np.empty(n_det, dtype=np.int64)
    w = np.empty(n_det)
    F = np.empty(n_dy + 1)
    A = np.zeros((n_dy + 1, n_dz + 1))
    B = np.zeros((n_dy + 1, n_dz + 1))
    total = 0
    for iz in range(nz):
        z0 = (iz - 0.5 * nz) * c
        for iy in range(ny):
            y0 = (iy - 0.5 * ny) * b
            for ix in range(nx):
                x0 = (ix - 0.5 * nx) * a
                cnt = voxel_weights(x0, x0 + a, y0, y0 + b, z0, z0 + c, cphi, sphi, s,
                                    beta_edges, tan_edges, tanz_edges, n_dy, cell, w, F, A, B)
                if cnt == DEGENERATE:
                    bad = np.full(1, -1, dtype=np.int64)
                    return bad, cols[:0], vals[:0]
                if max_rows > 0 and cnt > 0:
                    r_lo = cell[0] // n_dy
                    r_hi = r_lo
                    for i in range(cnt):
                        rz = cell[i] // n_dy
                        r_lo = min(r_lo, rz)
                        r_hi = max(r_hi, rz)
                    if r_hi - r_lo + 1 > max_rows:
                        bad = np.full(1, -2, dtype=np.int64)
                        return bad, cols[:0], vals[:0]
                if total + cnt > cap:
                    cols, vals = _grow(cols, vals, total + cnt)
                    r2 = np.empty(cols.shape[0], dtype=np.int32)
                    r2[:total] = rows[:total]
                    rows = r2
                    cap = cols.shape[0]
                j = (iz * ny + iy) * nx + ix
                for i in range(cnt):
                    rows[total] = cell[i]
                    cols[total] = j
                    vals[total] = w[i]
                    total += 1
    return _coo_to_csr(rows, cols, vals, total, n_det)


# ---------------------------------------------------------------- matrix type

@dataclass
class SparseSystemMatrix:
    """CSR system matrix with its geometry, build mode and optional normalization."""

    csr: sp.csr_matrix
    geometry: ScanGeometry | None = None
    mode: str = "consistent"
    normalization: float | None = None
    build_seconds: float = 0.0
    meta: dict = field(default_factory=dict)

    @property
    def shape(self):
        return self.csr.shape

    @property
    def n_rows(self) -> int:
        return self.csr.shape[0]

    @property
    def n_cols(self) -> int:
        return self.csr.shape[1]

    @property
    def nnz(self) -> int:
        return self.csr.nnz

    @property
    def geometry_hash(self) -> str:
        return self.geometry.digest() if self.geometry is not None else ""

    def forward(self, u):
        return forward(self, u)

    def adjoint(self, p):
        return adjoint(self, p)


def parse_mode(mode: str):
    """``'consistent'``, ``'line'`` or ``'multiline:K'`` -> ``(kind, K)``."""
    m = re.fullmatch(r"(consistent|line|multiline)(?::(\d+))?", mode.strip())
    if not m:
        raise InvalidSpec(f"unknown mode {mode!r}")
    kind, k = m.group(1), m.group(2)
    if kind == "multiline":
        if k is None or int(k) < 1:
            raise InvalidSpec("multiline needs K >= 1, e.g. multiline:8")
        return "line", int(k)
    if k is not None:
        raise InvalidSpec(f"mode {kind} takes no K")
    return kind, 1


def estimate_nnz(geom: ScanGeometry, mode: str = "consistent") -> int:
    """Rough upper estimate of the number of nonzeros."""
    kind, _ = parse_mode(mode)
    mag = geom.sd / geom.s
    per_y = math.hypot(geom.a, geom.b) * mag / geom.d_y + 2
    if kind == "line":
        per_row = geom.n_x + geom.n_y + (geom.n_z if geom.ndim == 3 else 0)
        return int(geom.n_rows * per_row)
    if geom.ndim == 3:
        per_z = geom.c * mag * 1.1 / geom.d_z + 2
        return int(geom.n_cols * geom.n_angles * min(per_y, geom.n_det_y) * min(per_z, geom.n_det_z))
    return int(geom.n_cols * geom.n_angles * min(per_y, geom.n_det_y))


def _available_bytes() -> int:
    try:
        return os.sysconf("SC_AVPHYS_PAGES") * os.sysconf("SC_PAGE_SIZE")
    except (ValueError, OSError, AttributeError):
        return 1 << 62


def _angle_block(phi, geom: ScanGeometry, kind, k, tables, max_rows):
    cphi, sphi = math.cos(phi), math.sin(phi)
    if kind == "line":
        return line_block_for_angle(phi, geom, k)
    beta_edges, tan_edges, tanz_edges = tables
    if geom.ndim == 2:
        out = consistent_block_2d(cphi, sphi, geom.s, beta_edges, tan_edges,
                                  geom.n_x, geom.n_y, geom.a, geom.b)
    else:
        out = consistent_block_3d(cphi, sphi, geom.s, beta_edges, tan_edges, tanz_edges,
                                  geom.n_x, geom.n_y, geom.n_z, geom.a, geom.b, geom.c,
                                  max_rows)
    counts = out[0]
    if counts.shape[0] and counts[0] == -1:
        raise DegenerateGeometry(f"a voxel corner is not in front of the source at phi={phi}")
    if counts.shape[0] and counts[0] == -2:
        from .errors import ZRestrictionViolation
        raise ZRestrictionViolation(f"a voxel spans more than {max_rows} detector rows")
    return out


def _tables(geom: ScanGeometry):
    tan_edges = geom.tan_beta_edges()
    return np.arctan(tan_edges), tan_edges, geom.tan_alpha_edges()


def iter_angle_blocks(geom: ScanGeometry, mode: str = "consistent", max_rows=None):
    """Yield ``(angle index, csr block)`` one projection angle at a time."""
    kind, k = parse_mode(mode)
    tables = _tables(geom)
    mr = 0 if max_rows is None else int(max_rows)
    for ia, phi in enumerate(geom.angles):
        counts, cols, vals = _angle_block(phi, geom, kind, k, tables, mr)
        indptr = np.zeros(counts.size + 1, dtype=np.int64)
        np.cumsum(counts, out=indptr[1:])
        yield ia, sp.csr_matrix((vals, cols, indptr), shape=(geom.n_det, geom.n_cols))


def build_system_matrix(geom: ScanGeometry, mode: str = "consistent", *, max_rows=None,
                        check_memory=True) -> SparseSystemMatrix:
    """Assemble ``W`` for ``mode`` in ``{'consistent', 'line', 'multiline:K'}``.

    ``max_rows`` enables the z-restriction check in 3D consistent mode
    (``validate_z_restriction`` is run first, then every voxel is checked).
    """
    import time

    geom.validate()
    kind, k = parse_mode(mode)
    if kind == "consistent" and geom.ndim == 3 and max_rows is not None:
        validate_z_restriction(geom, max_rows)
    if check_memory:
        est = estimate_nnz(geom, mode)
        need = est * BYTES_PER_NNZ * 2
        if need > _available_bytes():
            raise OutOfMemory(f"estimated {est} nonzeros ({need / 2**30:.1f} GiB peak) "
                              f"for {geom.n_rows} rows")
    t0 = time.perf_counter()
    tables = _tables(geom)
    mr = 0 if max_rows is None else int(max_rows)
    counts_all, cols_all, vals_all = [], [], []
    for phi in geom.angles:
        counts, cols, vals = _angle_block(phi, geom, kind, k, tables, mr)
        counts_all.append(counts)
        cols_all.append(cols)
        vals_all.append(vals)
    indptr = np.zeros(geom.n_rows + 1, dtype=np.int64)
    np.cumsum(np.concatenate(counts_all), out=indptr[1:])
    cols = np.concatenate(cols_all) if cols_all else np.zeros(0, dtype=np.int32)
    vals = np.concatenate(vals_all) if vals_all else np.zeros(0)
    del cols_all, vals_all
    if indptr[-1] < np.iinfo(np.int32).max:
        indptr = indptr.astype(np.int32)
    csr = sp.csr_matrix((vals, cols, indptr), shape=(geom.n_rows, geom.n_cols), copy=False)
    csr.has_sorted_indices = True
    return SparseSystemMatrix(csr, geom, mode=mode, build_seconds=time.perf_counter() - t0)


# ------------------------------------------------------------------ products

def _flat(x, n, what):
    arr = np.asarray(x, dtype=np.float64)
    if arr.size != n:
        raise DimensionMismatch(f"{what} has {arr.size} values, expected {n}")
    return arr.reshape(-1)


def forward(W, u) -> np.ndarray:
    """``p = W u``; returned in sinogram shape when ``W`` carries a geometry."""
    csr = W.csr if isinstance(W, SparseSystemMatrix) else W
    p = csr @ _flat(u, csr.shape[1], "image")
    geom = getattr(W, "geometry", None)
    return p.reshape(geom.sino_shape) if geom is not None else p


def adjoint(W, p) -> np.ndarray:
    """``u = W^T p``; returned in image shape when ``W`` carries a geometry."""
    csr = W.csr if isinstance(W, SparseSystemMatrix) else W
    u = csr.T @ _flat(p, csr.shape[0], "sinogram")
    geom = getattr(W, "geometry", None)
    return u.reshape(geom.image_shape) if geom is not None else u


def forward_matrix_free(geom: ScanGeometry, u, mode: str = "consistent") -> np.ndarray:
    """``W u`` with the weights recomputed angle by angle instead of stored."""
    x = _flat(u, geom.n_cols, "image")
    out = np.empty(geom.n_rows)
    for ia, block in iter_angle_blocks(geom, mode):
        out[ia * geom.n_det:(ia + 1) * geom.n_det] = block @ x
    return out.reshape(geom.sino_shape)


def adjoint_matrix_free(geom: ScanGeometry, p, mode: str = "consistent") -> np.ndarray:
    """``W^T p`` with the weights recomputed angle by angle."""
    y = _flat(p, geom.n_rows, "sinogram")
    out = np.zeros(geom.n_cols)
    for ia, block in iter_angle_blocks(geom, mode):
        out += block.T @ y[ia * geom.n_det:(ia + 1) * geom.n_det]
    return out.reshape(geom.image_shape)


def adjoint_mismatch(W, u, p) -> float:
    """``|<W u, p> - <u, W^T p>|`` relative to its Cauchy-Schwarz bound.

    The bound is ``max(||W u|| ||p||, ||u|| ||W^T p||)``.
    """
    csr = W.csr if isinstance(W, SparseSystemMatrix) else W
    u = np.asarray(u, dtype=float).reshape(-1)
    p = np.asarray(p, dtype=float).reshape(-1)
    wu = csr @ u
    wtp = csr.T @ p
    diff = abs(float(np.dot(wu, p)) - float(np.dot(u, wtp)))
    scale = max(np.linalg.norm(wu) * np.linalg.norm(p), np.linalg.norm(u) * np.linalg.norm(wtp))
    return diff / scale if scale > 0 else diff


def spectral_norm(W, iters: int = 100, seed: int = 0, history: list | None = None) -> float:
    """Power-iteration estimate of ``||W||_2`` through ``W^T W``.

    Successive estimates ``||W x_k||`` with unit ``x_k`` are nondecreasing;
    they are appended to ``history`` when given.
    """
    csr = W.csr if isinstance(W, SparseSystemMatrix) else W
    if not sp.issparse(csr):
        csr = np.asarray(csr, dtype=np.float64)
    if not np.any(csr.data if sp.issparse(csr) else csr):
        raise ZeroMatrix("spectral norm of a zero matrix")
    x = np.random.default_rng(seed).standard_normal(csr.shape[1])
    x /= np.linalg.norm(x)
    est = 0.0
    for _ in range(iters):
        y = csr @ x
        est = float(np.linalg.norm(y))
        if history is not None:
            history.append(est)
        z = csr.T @ y
        nz = np.linalg.norm(z)
        if nz == 0.0:
            break
        x = z / nz
    return float(np.linalg.norm(csr @ x))
