"""Scan geometry, index types and the shared angle / intersection formulas.

Coordinate frame
----------------
The source sits at ``S = s (cos phi, sin phi, 0)`` and rotates about the z
axis.  The flat detector is perpendicular to the central ray at distance ``d``
behind the origin.  For a point ``P`` the depth along the central ray is
``t = s - x cos phi - y sin phi`` and the lateral offset is
``l = y cos phi - x sin phi``; the fan angle of ``P`` is ``atan(l / t)`` and the
cone slope is ``z / t``.

Detector edge ``k`` (``k = 0..n_det``) sits at ``(k - n_det / 2) * pitch`` on the
detector, so the array is centred on the central ray.  Cell ``i`` spans edges
``i`` and ``i + 1``.  Signed edge indices ``m = k - n_det / 2`` are used by the
closed-form helpers below.

The voxel grid is centred on the rotation axis: voxel ``ix`` covers
``[(ix - n_x / 2) a, (ix - n_x / 2 + 1) a]`` and likewise in y and z.  A
:class:`VoxelIndex` holds the signed lattice coordinates ``(n_x, n_y, n_z)`` of
the voxel's lower corner in units of the pitch.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .errors import (
    DegenerateGeometry,
    InvalidGeometry,
    RayParallelToFace,
    ZRestrictionViolation,
)

EPS_DEN = 1e-12  # relative to s
EPS_ANG = 1e-12
EPS_SING = 1e-8


class VoxelIndex(NamedTuple):
    n_x: float
    n_y: float
    n_z: float = 0.0


class DetectorIndex(NamedTuple):
    m_y: float
    m_z: float = 0.0


class IntersectionPoint(NamedTuple):
    x: float
    y: float
    z: float = 0.0


@dataclass(frozen=True)
class AngleSet:
    phi: float
    beta: dict
    gamma: tuple
    gamma_sorted: tuple


def equidistant_angles(n: int, start: float = 0.0, end: float = 2.0 * math.pi) -> tuple:
    """``n`` angles equally spaced in ``[start, end)``."""
    if n < 1:
        raise InvalidGeometry("need at least one projection angle")
    step = (end - start) / n
    return tuple(float(start + k * step) for k in range(n))


@dataclass(frozen=True)
class ScanGeometry:
    s: float
    d: float
    d_y: float
    n_det_y: int
    a: float
    b: float
    n_x: int
    n_y: int
    angles: tuple
    d_z: float = 1.0
    n_det_z: int = 1
    c: float = 1.0
    n_z: int = 1
    ndim: int = 2
    _hash: str = field(default="", init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "angles", tuple(float(p) for p in self.angles))
        self.validate()

    @classmethod
    def fan(cls, *, s, d, d_y, n_det_y, a, b, n_x, n_y, angles) -> "ScanGeometry":
        return cls(s=float(s), d=float(d), d_y=float(d_y), n_det_y=int(n_det_y),
                   a=float(a), b=float(b), n_x=int(n_x), n_y=int(n_y), angles=angles,
                   ndim=2)

    @classmethod
    def cone(cls, *, s, d, d_y, d_z, n_det_y, n_det_z, a, b, c, n_x, n_y, n_z,
             angles) -> "ScanGeometry":
        return cls(s=float(s), d=float(d), d_y=float(d_y), n_det_y=int(n_det_y),
                   a=float(a), b=float(b), n_x=int(n_x), n_y=int(n_y), angles=angles,
                   d_z=float(d_z), n_det_z=int(n_det_z), c=float(c), n_z=int(n_z),
                   ndim=3)

    def validate(self) -> None:
        vals = dict(s=self.s, d=self.d, d_y=self.d_y, d_z=self.d_z, a=self.a, b=self.b, c=self.c)
        if not all(math.isfinite(v) for v in vals.values()):
            raise InvalidGeometry(f"non-finite geometry value in {vals}")
        if self.s <= 0:
            raise InvalidGeometry("source distance s must be positive")
        if self.d < 0:
            raise InvalidGeometry("detector distance d must be non-negative")
        for name in ("d_y", "d_z", "a", "b", "c"):
            if getattr(self, name) <= 0:
                raise InvalidGeometry(f"pitch {name} must be positive")
        for name in ("n_det_y", "n_det_z", "n_x", "n_y", "n_z"):
            if getattr(self, name) < 1:
                raise InvalidGeometry(f"count {name} must be >= 1")
        if self.ndim not in (2, 3):
            raise InvalidGeometry("ndim must be 2 or 3")
        if self.ndim == 2 and (self.n_z != 1 or self.n_det_z != 1):
            raise InvalidGeometry("2D geometry must have n_z = n_det_z = 1")
        if not self.angles:
            raise InvalidGeometry("empty angle list")
        if not all(math.isfinite(p) for p in self.angles):
            raise InvalidGeometry("angles must be finite")
        # every pixel corner must stay strictly inside the source circle
        rx = 0.5 * self.n_x * self.a
        ry = 0.5 * self.n_y * self.b
        if math.hypot(rx, ry) >= self.s * (1.0 - 1e-9):
            raise InvalidGeometry("voxel grid reaches the source trajectory")

    # sizes
    @property
    def is_3d(self) -> bool:
        return self.ndim == 3

    @property
    def n_angles(self) -> int:
        return len(self.angles)

    @property
    def n_det(self) -> int:
        return self.n_det_y * self.n_det_z

    @property
    def n_rows(self) -> int:
        return self.n_angles * self.n_det

    @property
    def n_cols(self) -> int:
        return self.n_x * self.n_y * self.n_z

    @property
    def image_shape(self) -> tuple:
        if self.ndim == 2:
            return (self.n_y, self.n_x)
        return (self.n_z, self.n_y, self.n_x)

    @property
    def sino_shape(self) -> tuple:
        if self.ndim == 2:
            return (self.n_angles, self.n_det_y)
        return (self.n_angles, self.n_det_z, self.n_det_y)

    @property
    def sd(self) -> float:
        return self.s + self.d

    # detector and grid layout
    def y_edges(self) -> np.ndarray:
        """Signed edge indices ``m`` of the detector columns."""
        return np.arange(self.n_det_y + 1, dtype=np.float64) - 0.5 * self.n_det_y

    def z_edges(self) -> np.ndarray:
        return np.arange(self.n_det_z + 1, dtype=np.float64) - 0.5 * self.n_det_z

    def tan_beta_edges(self) -> np.ndarray:
        return self.y_edges() * self.d_y / self.sd

    def tan_alpha_edges(self) -> np.ndarray:
        return self.z_edges() * self.d_z / self.sd

    def voxel_index(self, ix: int, iy: int, iz: int = 0) -> VoxelIndex:
        return VoxelIndex(ix - 0.5 * self.n_x, iy - 0.5 * self.n_y,
                          iz - 0.5 * self.n_z if self.ndim == 3 else 0.0)

    def voxel_box(self, ix: int, iy: int, iz: int = 0) -> tuple:
        """``(x0, x1, y0, y1, z0, z1)`` of a grid voxel."""
        n = self.voxel_index(ix, iy, iz)
        return box_of(n, self)

    # serialisation
    def to_dict(self) -> dict:
        out = dict(s=self.s, d=self.d, d_y=self.d_y, n_det_y=self.n_det_y,
                   a=self.a, b=self.b, n_x=self.n_x, n_y=self.n_y, ndim=self.ndim,
                   angles=list(self.angles))
        if self.ndim == 3:
            out.update(d_z=self.d_z, n_det_z=self.n_det_z, c=self.c, n_z=self.n_z)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "ScanGeometry":
        data = dict(data)
        ndim = int(data.pop("ndim", 2))
        if ndim == 2:
            for key in ("d_z", "n_det_z", "c", "n_z"):
                data.pop(key, None)
            return cls.fan(**data)
        return cls.cone(**data)

    def digest(self) -> str:
        if not self._hash:
            blob = json.dumps(self.to_dict(), sort_keys=True).encode()
            object.__setattr__(self, "_hash", hashlib.sha256(blob).hexdigest())
        return self._hash


def box_of(n: VoxelIndex, geom: ScanGeometry) -> tuple:
    x0, y0, z0 = n.n_x * geom.a, n.n_y * geom.b, n.n_z * geom.c
    return (x0, x0 + geom.a, y0, y0 + geom.b, z0, z0 + geom.c)


def source_frame(x, y, phi, s):
    """Depth ``t`` and lateral offset ``l`` of points in the source frame."""
    cp, sp = math.cos(phi), math.sin(phi)
    t = s - x * cp - y * sp
    lat = y * cp - x * sp
    return t, lat


def detector_edge_angle(m_y, geom: ScanGeometry) -> float:
    """Fan angle of detector edge ``m_y`` (signed index, 0 on the central ray)."""
    return math.atan(m_y * geom.d_y / geom.sd)


def row_edge_slope(m_z, geom: ScanGeometry) -> float:
    """``tan alpha`` of detector row edge ``m_z``."""
    return m_z * geom.d_z / geom.sd


def _vertex_tan(x, y, phi, geom):
    cp, sp = math.cos(phi), math.sin(phi)
    den = geom.s - y * sp - x * cp
    if abs(den) < EPS_DEN * geom.s:
        raise DegenerateGeometry(f"vertex ({x}, {y}) lies in the source plane at phi={phi}")
    return (y * cp - x * sp) / den


def vertex_angles(n: VoxelIndex, phi: float, geom: ScanGeometry) -> tuple:
    """``(gamma_1, gamma_2, gamma_3, gamma_4)`` of the top-view corners.

    Corners are ``V1 = (n_x a, n_y b)``, ``V2 = ((n_x+1) a, n_y b)``,
    ``V3 = ((n_x+1) a, (n_y+1) b)`` and ``V4 = (n_x a, (n_y+1) b)``.
    """
    x0, x1 = n.n_x * geom.a, (n.n_x + 1) * geom.a
    y0, y1 = n.n_y * geom.b, (n.n_y + 1) * geom.b
    return tuple(math.atan(_vertex_tan(x, y, phi, geom))
                 for x, y in ((x0, y0), (x1, y0), (x1, y1), (x0, y1)))


def source_quadrant(cx, cy, phi, geom: ScanGeometry) -> int:
    """Quarter turn ``q`` that brings the source to the +x side of a voxel centre."""
    u = (geom.s * math.cos(phi) - cx) / geom.a
    v = (geom.s * math.sin(phi) - cy) / geom.b
    if u >= abs(v):
        return 0
    if v >= abs(u):
        return 1
    if -u >= abs(v):
        return 2
    return 3


def _wrap(phi):
    w = math.remainder(phi, 2.0 * math.pi)
    return math.pi if w == -math.pi else w


def canonical_orientation(n: VoxelIndex, phi: float, geom: ScanGeometry):
    """Rotate ``(n, phi)`` by quarter turns until the source faces the voxel's +x side.

    Returns ``(n', phi', q)``; ``q`` quarter turns were removed, so ``phi' =
    phi - q pi/2`` (wrapped to ``(-pi, pi]``).  One quarter turn maps the
    lattice index ``(n_x, n_y)`` to ``(n_y, -n_x - 1)``.  For ``a != b`` the
    rotated voxel has swapped pitches, which :func:`rotated_pitches` reports.
    """
    cx = (n.n_x + 0.5) * geom.a
    cy = (n.n_y + 0.5) * geom.b
    q = source_quadrant(cx, cy, phi, geom)
    nx, ny = n.n_x, n.n_y
    for _ in range(q):
        nx, ny = ny, -nx - 1
    return VoxelIndex(nx, ny, n.n_z), _wrap(phi - q * 0.5 * math.pi), q


def rotated_pitches(q: int, geom: ScanGeometry) -> tuple:
    return (geom.a, geom.b) if q % 2 == 0 else (geom.b, geom.a)


def relevant_detectors_2d(n: VoxelIndex, phi: float, geom: ScanGeometry) -> tuple:
    """Inclusive signed edge-index range ``(m_min, m_max)`` touched by a pixel.

    Boundary edges are included; tangent rays then carry zero weight.  The
    range is clipped to the detector, ``m_min > m_max`` means empty.
    """
    gam = vertex_angles(n, phi, geom)
    half = 0.5 * geom.n_det_y
    lo = math.floor(math.tan(min(gam)) * geom.sd / geom.d_y + half)
    hi = math.ceil(math.tan(max(gam)) * geom.sd / geom.d_y + half)
    lo, hi = max(lo, 0), min(hi, geom.n_det_y)
    return lo - half, hi - half


def z_row_bounds(phi, geom: ScanGeometry, gamma_min, gamma_max, z_min, z_max, x) -> tuple:
    """Real-valued bounds on ``m_z`` for vertices on the plane ``x``."""
    den = geom.s * math.cos(phi) - x
    if abs(den) < EPS_DEN * geom.s:
        raise DegenerateGeometry("plane x passes through the source")
    scale = geom.sd / geom.d_z / den
    lo = scale * math.cos(phi - gamma_min) / math.cos(gamma_min) * z_min
    hi = scale * math.cos(phi - gamma_max) / math.cos(gamma_max) * z_max
    return lo, hi


def relevant_detectors_z(n: VoxelIndex, phi: float, geom: ScanGeometry) -> tuple:
    """Inclusive signed row-edge range ``(mz_min, mz_max)`` touched by a voxel.

    Every vertex of the voxel is projected with the cone-slope relation on its
    own x face; the extreme slopes bound the rows.  Empty when ``mz_min > mz_max``.
    """
    x0, x1, y0, y1, z0, z1 = box_of(n, geom)
    if z1 <= z0:
        return 0.0, -1.0
    slopes = []
    gam = vertex_angles(n, phi, geom)
    for (x, g) in ((x0, gam[0]), (x1, gam[1]), (x1, gam[2]), (x0, gam[3])):
        lo, hi = z_row_bounds(phi, geom, g, g, z0, z1, x)
        slopes += [lo, hi]
    half = 0.5 * geom.n_det_z
    lo = max(math.floor(min(slopes) + half), 0)
    hi = min(math.ceil(max(slopes) + half), geom.n_det_z)
    return lo - half, hi - half


def intersection_points_2d(m_y, n: VoxelIndex, phi: float, geom: ScanGeometry) -> tuple:
    """Points where the ray to edge ``m_y`` meets ``x = (n_x+1) a`` and ``y = n_y b``."""
    beta = detector_edge_angle(m_y, geom)
    dphi = phi - beta
    cp, sp = math.cos(phi), math.sin(phi)
    xf = (n.n_x + 1) * geom.a
    yf = n.n_y * geom.b
    limit = 1.0 / EPS_DEN
    if abs(math.cos(dphi)) < 1.0 / limit:
        raise RayParallelToFace("ray parallel to the x face")
    if abs(math.sin(dphi)) < 1.0 / limit:
        raise RayParallelToFace("ray parallel to the y face")
    px = IntersectionPoint(xf, geom.s * sp - (geom.s * cp - xf) * math.tan(dphi))
    py = IntersectionPoint(geom.s * cp - (geom.s * sp - yf) / math.tan(dphi), yf)
    return px, py


def ray_point_relations(beta, m_z, phi, geom: ScanGeometry, *, x=None, y=None, z=None,
                        form: int = 0) -> IntersectionPoint:
    """Complete a point on the ray ``(beta, m_z)`` from one known coordinate.

    ``form`` selects between the two algebraically equal expressions of each
    relation; callers pick the one whose denominator is safe.
    """
    if sum(v is not None for v in (x, y, z)) != 1:
        raise ValueError("give exactly one of x, y, z")
    tan_a = row_edge_slope(m_z, geom)
    cp, sp = math.cos(phi), math.sin(phi)
    cb = math.cos(beta)
    k = math.cos(phi - beta) / cb
    j = math.sin(phi - beta) / cb
    s = geom.s

    def need(v, what):
        if abs(v) < EPS_ANG:
            raise DegenerateGeometry(f"vanishing {what}")
        return v

    if x is not None:
        if form == 0:
            yy = s * sp - (s * cp - x) * math.tan(phi - beta)
        else:
            yy = s * math.sin(beta) / need(math.cos(phi - beta), "cos(phi-beta)") \
                + x * math.tan(phi - beta)
        zz = tan_a * (s * cp - x) / need(k, "cos(phi-beta)")
        return IntersectionPoint(x, yy, zz)
    if y is not None:
        if form == 0:
            xx = s * cp - (s * sp - y) / math.tan(need(phi - beta, "sin(phi-beta)"))
        else:
            xx = -s * math.sin(beta) / need(math.sin(phi - beta), "sin(phi-beta)") \
                + y / math.tan(phi - beta)
        zz = tan_a * (s * sp - y) / need(j, "sin(phi-beta)")
        return IntersectionPoint(xx, y, zz)
    inv = geom.sd / (need(m_z, "m_z") * geom.d_z)
    if form == 0:
        xx = s * cp - k * inv * z
        yy = s * sp - j * inv * z
    else:
        xx = s * cp - k * inv * z
        yy = s * sp + ((s * cp - xx) * cp - inv * z) / need(sp, "sin(phi)")
    return IntersectionPoint(xx, yy, z)


def angle_set(n: VoxelIndex, phi: float, geom: ScanGeometry) -> AngleSet:
    gam = vertex_angles(n, phi, geom)
    lo, hi = relevant_detectors_2d(n, phi, geom)
    beta = {}
    m = lo
    while m <= hi:
        beta[m] = detector_edge_angle(m, geom)
        m += 1
    return AngleSet(phi=phi, beta=beta, gamma=gam, gamma_sorted=tuple(sorted(gam)))


def max_rows_per_voxel(geom: ScanGeometry) -> int:
    """Largest number of detector rows any voxel touches over all angles."""
    if geom.ndim == 2:
        return 1
    xe = (np.arange(geom.n_x + 1) - 0.5 * geom.n_x) * geom.a
    ye = (np.arange(geom.n_y + 1) - 0.5 * geom.n_y) * geom.b
    ze = (np.arange(geom.n_z + 1) - 0.5 * geom.n_z) * geom.c
    half = 0.5 * geom.n_det_z
    worst = 0
    for phi in geom.angles:
        t = geom.s - xe[None, :] * math.cos(phi) - ye[:, None] * math.sin(phi)
        # depth extremes over the four corners of each column
        quad = np.stack([t[:-1, :-1], t[:-1, 1:], t[1:, :-1], t[1:, 1:]])
        tmin, tmax = quad.min(axis=0), quad.max(axis=0)
        z0, z1 = ze[:-1], ze[1:]
        lo_slope = np.minimum(z0[:, None, None] / tmin, z0[:, None, None] / tmax)
        hi_slope = np.maximum(z1[:, None, None] / tmin, z1[:, None, None] / tmax)
        lo = np.clip(np.floor(lo_slope * geom.sd / geom.d_z + half), 0, geom.n_det_z)
        hi = np.clip(np.ceil(hi_slope * geom.sd / geom.d_z + half), 0, geom.n_det_z)
        worst = max(worst, int((hi - lo).max()))
    return worst


def validate_z_restriction(geom: ScanGeometry, max_rows: int = 3) -> int:
    rows = max_rows_per_voxel(geom)
    if rows > max_rows:
        raise ZRestrictionViolation(
            f"a voxel projects onto {rows} detector rows (limit {max_rows})")
    return rows


def angles_array(geom: ScanGeometry) -> np.ndarray:
    return np.asarray(geom.angles, dtype=np.float64)


def as_voxel_index(n: Sequence) -> VoxelIndex:
    return n if isinstance(n, VoxelIndex) else VoxelIndex(*n)
