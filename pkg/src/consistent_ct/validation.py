"""Oracle suites shared by ``consistent-ct validate`` and the acceptance tests.

Every suite returns a list of report rows ``{suite, case, metric, value,
tol, passed}``.  Randomness comes from ``numpy.random.default_rng(seed)`` so a
suite is reproducible from its arguments alone.
"""
from __future__ import annotations

import csv
import math
from collections import defaultdict

import numpy as np

from . import weights3d as w3
from .errors import CentralRow, DegenerateGeometry, InvalidSpec
from .geometry import ScanGeometry, VoxelIndex, vertex_angles
from .oracle import (
    clip_area_2d,
    clip_pixel_weights,
    cell_wedge,
    line_integral_volume,
    line_voxel_weights,
    mc_voxel_histogram,
)
from .projector import adjoint_mismatch, build_system_matrix
from .weights2d import pixel_area_factors_box

REPORT_FIELDS = ("suite", "case", "metric", "value", "tol", "passed")


def _row(suite, case, metric, value, tol, passed=None):
    value = float(value)
    if passed is None:
        passed = value <= tol
    return dict(suite=suite, case=case, metric=metric, value=value, tol=tol, passed=bool(passed))


def write_report(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=REPORT_FIELDS)
        w.writeheader()
        for r in rows:
            w.writerow({**r, "value": repr(r["value"]), "tol": repr(float(r["tol"]))})


def all_passed(rows) -> bool:
    return all(r["passed"] for r in rows)


def worst(rows, metric=None) -> float:
    vals = [r["value"] for r in rows if metric is None or r["metric"] == metric]
    return max(vals) if vals else 0.0


# ---------------------------------------------------------------- geometries

def random_fan_geometry(rng, n=8) -> ScanGeometry:
    return ScanGeometry.fan(s=rng.uniform(20, 300), d=rng.uniform(0, 300), d_y=rng.uniform(0.2, 3),
                            n_det_y=int(rng.integers(8, 80)), a=rng.uniform(0.3, 2),
                            b=rng.uniform(0.3, 2), n_x=n, n_y=n, angles=(0.0,))


def random_cone_geometry(rng, n=8) -> ScanGeometry:
    return ScanGeometry.cone(s=rng.uniform(40, 300), d=rng.uniform(20, 300),
                             d_y=rng.uniform(0.5, 2), d_z=rng.uniform(0.5, 2),
                             n_det_y=int(rng.integers(16, 64)), n_det_z=int(rng.integers(16, 64)),
                             a=rng.uniform(0.5, 2), b=rng.uniform(0.5, 2), c=rng.uniform(0.5, 2),
                             n_x=n, n_y=n, n_z=n, angles=(0.0,))


def _random_box2(rng, geom):
    """A pixel of ``geom`` well in front of the source."""
    while True:
        r = rng.uniform(0, 0.6 * geom.s)
        th = rng.uniform(0, 2 * math.pi)
        x0, y0 = r * math.cos(th), r * math.sin(th)
        if math.hypot(x0 + geom.a / 2, y0 + geom.b / 2) + math.hypot(geom.a, geom.b) < 0.9 * geom.s:
            return (x0, x0 + geom.a, y0, y0 + geom.b)


def _in_view(geom, box, phi):
    """True when every voxel vertex projects strictly inside the detector."""
    cp, sn = math.cos(phi), math.sin(phi)
    hy = 0.5 * geom.n_det_y * geom.d_y
    hz = 0.5 * geom.n_det_z * geom.d_z if geom.is_3d else math.inf
    zs = (box[4], box[5]) if len(box) == 6 else (0.0,)
    for x in box[:2]:
        for y in box[2:4]:
            t = geom.s - x * cp - y * sn
            if t <= 0:
                return False
            eta = geom.sd * (y * cp - x * sn) / t
            if abs(eta) >= hy:
                return False
            for z in zs:
                if abs(geom.sd * z / t) >= hz:
                    return False
    return True


# ------------------------------------------------------------------ 2D suite

def suite_weights2d(samples=1000, seed=0, geom=None, n_geoms=20, tol=1e-9) -> list:
    """Kernel pixel weights against Sutherland-Hodgman clipping, per (pixel, angle, cell) triple.

    With ``geom`` the pixels and angles are drawn from that geometry,
    otherwise ``n_geoms`` random fan geometries share the samples.
    """
    rng = np.random.default_rng(seed)
    rows = []
    geoms = [geom] if geom is not None else [random_fan_geometry(rng) for _ in range(n_geoms)]
    gi = 0
    while len(rows) < samples:
        g = geoms[gi % len(geoms)]
        gi += 1
        if geom is not None:
            ix, iy = int(rng.integers(g.n_x)), int(rng.integers(g.n_y))
            box = g.voxel_box(ix, iy)[:4]
        else:
            box = _random_box2(rng, g)
        phi = float(rng.uniform(0, 2 * math.pi))
        w = pixel_area_factors_box(box, phi, g)
        o = clip_pixel_weights(box, phi, g)
        for k in sorted(set(w) | set(o)):
            ref = o.get(k, 0.0)
            err = abs(w.get(k, 0.0) - ref) / max(1.0, ref)
            rows.append(_row("weights2d", f"g{(gi - 1) % len(geoms)} phi={phi:.6f} cell={k}",
                             "abs_err", err, tol))
    return rows


def suite_partition(samples=500, seed=0, tol2=1e-9, tol3=1e-8) -> list:
    """Sum over cells against the covered fraction (2D: exact clip; 3D: fully visible voxels)."""
    rng = np.random.default_rng(seed)
    rows = []
    while len(rows) < samples:
        g = random_fan_geometry(rng)
        box = _random_box2(rng, g)
        phi = float(rng.uniform(0, 2 * math.pi))
        total = sum(pixel_area_factors_box(box, phi, g).values())
        half = 0.5 * g.n_det_y
        src, dl, dh = cell_wedge(phi, g, -half, half)
        ref = clip_area_2d(box, src, dl, dh)
        rows.append(_row("partition2d", f"phi={phi:.6f}", "abs_err", abs(total - ref), tol2))
    n3 = 0
    while n3 < samples:
        g = random_cone_geometry(rng)
        ix, iy, iz = (int(v) for v in rng.integers(0, 8, 3))
        phi = float(rng.uniform(0, 2 * math.pi))
        box = g.voxel_box(ix, iy, iz)
        if not _in_view(g, box, phi):
            continue
        total = sum(w3.voxel_volume_factors_box(box, phi, g).values())
        rows.append(_row("partition3d", f"v=({ix},{iy},{iz}) phi={phi:.6f}", "abs_err",
                         abs(total - 1.0), tol3))
        n3 += 1
    return rows


# ------------------------------------------------------------------ 3D suite

def suite_weights3d_mc(samples=200, seed=0, geom=None, mc_samples=1 << 20, n_lines=2000,
                       z_max=3.0, line_tol=1e-4) -> list:
    """Whole-voxel weights against Monte Carlo (z-score) and dense line integration."""
    rng = np.random.default_rng(seed)
    rows = []
    for case in range(samples):
        g = geom if geom is not None else random_cone_geometry(rng)
        ix, iy, iz = (int(rng.integers(n)) for n in (g.n_x, g.n_y, g.n_z))
        phi = float(rng.uniform(0, 2 * math.pi))
        box = g.voxel_box(ix, iy, iz)
        w = w3.voxel_volume_factors_box(box, phi, g)
        mc, n = mc_voxel_histogram(box, phi, g, mc_samples, seed=seed * 100003 + case)
        zs = 0.0
        for k in set(w) | set(mc):
            ww, p = w.get(k, 0.0), mc.get(k, 0.0)
            sig = max(math.sqrt(ww * (1 - ww) / n), 1.0 / n)
            zs = max(zs, abs(p - ww) / sig)
        label = f"case{case} v=({ix},{iy},{iz}) phi={phi:.6f}"
        rows.append(_row("weights3d_mc", label, "z_score", zs, z_max))
        lw = line_voxel_weights(box, phi, g, list(w), n_lines)
        err = max((abs(lw[k] - w[k]) for k in w), default=0.0)
        rows.append(_row("weights3d_line", label, "abs_err", err, line_tol))
    return rows


def _y_on_face(T, x, phi, s):
    c, sn = math.cos(phi), math.sin(phi)
    return (T * (s - x * c) + x * sn) / (c + T * sn)


def closed_form_pool(count, seed=0):
    """Random canonical trapezoid and corner-triangle cases with their sign patterns.

    Row planes are anchored on the voxel top inside the top view, inside the
    voxel, or drawn freely, so that partial sign patterns occur.
    """
    rng = np.random.default_rng(seed)
    pool = []
    while len(pool) < count:
        s = rng.uniform(40, 120)
        a, b, c = rng.uniform(0.5, 2.0, 3)
        g = ScanGeometry.cone(s=s, d=s, d_y=1.0, d_z=1.0, n_det_y=64, n_det_z=64, a=a, b=b, c=c,
                              n_x=8, n_y=8, n_z=8, angles=(0.0,))
        n = VoxelIndex(*rng.integers(-4, 4, 3).astype(float))
        kind = "trapezoid" if rng.random() < 0.5 else "triangle"
        phi = float(rng.uniform(-0.6, 0.6) if kind == "trapezoid" else rng.uniform(-0.3, 0.3))
        if abs(math.sin(phi)) < 1e-3:
            continue
        G = vertex_angles(n, phi, g)
        if kind == "trapezoid":
            lo, hi = max(G[0], G[1]), min(G[2], G[3])
            if hi - lo < 1e-6:
                continue
            betas = tuple(sorted(rng.uniform(lo, hi, 2)))
        else:
            hi = min(G[0], G[2])
            if not G[1] < min(G[0], G[2], G[3]) or hi - G[1] < 1e-6:
                continue
            betas = (float(rng.uniform(G[1], hi)),)
        x0, x1 = n.n_x * a, (n.n_x + 1) * a
        mode = rng.integers(3)
        if mode == 0:
            # plane through the top face at a point of the top view
            T = math.tan(rng.uniform(min(betas[0], G[1]), betas[-1]))
            x = rng.uniform(x0, x1)
            y = min(max(_y_on_face(T, x, phi, s), n.n_y * b), (n.n_y + 1) * b)
            z = (n.n_z + 1) * c
        elif mode == 1:
            x, y, z = rng.uniform(x0, x1), rng.uniform(n.n_y * b, (n.n_y + 1) * b), \
                rng.uniform(n.n_z * c, (n.n_z + 1) * c)
        else:
            x, y, z = 0.0, 0.0, rng.uniform(-6, 6)
        t = s - x * math.cos(phi) - y * math.sin(phi)
        tau = z / t
        m_z = tau * g.sd / g.d_z
        if abs(m_z) < 1e-3:
            continue
        m_ys = [math.tan(bb) * g.sd / g.d_y for bb in betas]
        if kind == "trapezoid":
            lo_f, hi_f = (w3.factors(m, m_z, n, phi, g) for m in m_ys)
            vals = (lo_f.g, lo_f.f, hi_f.g, hi_f.f)
        else:
            f = w3.factors(m_ys[0], m_z, n, phi, g)
            vals = (f.g, f.h, f.g_g)
        flags = w3.coefficient_flags(vals).flags
        pool.append(dict(kind=kind, geom=g, n=n, phi=phi, betas=betas, m_z=m_z, tau=tau,
                         pattern=(kind, "+" if m_z > 0 else "-") + flags))
    return pool


def stratified(pool, count):
    """Round-robin over patterns so every pattern present in ``pool`` is represented."""
    buckets = defaultdict(list)
    for case in pool:
        buckets[case["pattern"]].append(case)
    keys = sorted(buckets)
    out = []
    depth = 0
    while len(out) < min(count, len(pool)):
        for k in keys:
            if depth < len(buckets[k]) and len(out) < count:
                out.append(buckets[k][depth])
        depth += 1
    return out


def closed_form_dense(case, n_lines=4000) -> float:
    g, n, phi, betas, tau = case["geom"], case["n"], case["phi"], case["betas"], case["tau"]
    box = (n.n_x * g.a, (n.n_x + 1) * g.a, n.n_y * g.b, (n.n_y + 1) * g.b, -math.inf,
           (n.n_z + 1) * g.c)
    if case["kind"] == "trapezoid":
        e_lo, e_hi = math.tan(betas[0]) * g.sd, math.tan(betas[1]) * g.sd
    else:
        e_lo, e_hi = -math.inf, math.tan(betas[0]) * g.sd
    v = line_integral_volume(box, phi, g, e_lo, e_hi, tau * g.sd, math.inf, n_lines)
    return v / (g.a * g.b * g.c)


def suite_closed_form(samples=200, seed=0, pool_size=6000, n_lines=4000, tol=1e-4) -> list:
    """Closed-form ``Vol_rel`` of stratified cases against dense line integration."""
    cases = stratified(closed_form_pool(pool_size, seed), samples)
    rows = []
    for i, case in enumerate(cases):
        v = w3.vol_rel(case["m_z"], case["betas"], case["pattern"][2:], case["n"], case["phi"],
                       case["geom"])
        ref = closed_form_dense(case, n_lines)
        label = f"case{i} {'/'.join(str(p) for p in case['pattern'])}"
        rows.append(_row("closed_form", label, "abs_err", abs(v - ref), tol))
    return rows


def patterns_of(pool) -> set:
    return {case["pattern"] for case in pool}


# ---------------------------------------------------------- identities etc.

def suite_identities(samples=10000, seed=0, tol=1e-11) -> list:
    """Factor and corner-angle identities on random inputs; one row per identity (worst case)."""
    rng = np.random.default_rng(seed)
    worst_by = defaultdict(float)
    where = {}
    done = 0
    while done < samples:
        g = random_cone_geometry(rng)
        n = VoxelIndex(*rng.integers(-4, 4, 3).astype(float))
        phi = float(rng.uniform(0, 2 * math.pi))
        m_y = float(rng.uniform(-0.5, 0.5) * g.n_det_y)
        m_z = float(rng.uniform(-0.5, 0.5) * g.n_det_z)
        beta = math.atan(m_y * g.d_y / g.sd)
        if (abs(m_z) < 1e-3 or min(abs(math.sin(phi)), abs(math.cos(phi))) < 1e-3
                or min(abs(math.sin(phi - beta)), abs(math.cos(phi - beta))) < 1e-3):
            continue
        try:
            res = w3.identity_residuals(m_y, m_z, n, phi, g)
        except (DegenerateGeometry, CentralRow, ZeroDivisionError):
            continue
        for k, v in res.items():
            if not v <= worst_by[k]:
                worst_by[k] = v
                where[k] = f"phi={phi:.6f} m=({m_y:.4f},{m_z:.4f}) n={tuple(n)}"
        done += 1
    return [_row("identities", where.get(k, ""), k, v, tol) for k, v in sorted(worst_by.items())]


def continuity_cases(count, seed=0):
    """Configurations at ``phi = 0`` for the trapezoid and the corner triangle."""
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < count:
        g = ScanGeometry.cone(s=rng.uniform(40, 120), d=60, d_y=1, d_z=1, n_det_y=64, n_det_z=64,
                              a=1, b=1, c=rng.uniform(0.6, 1.4), n_x=8, n_y=8, n_z=8,
                              angles=(0.0,))
        kind = ("trapezoid", "triangle")[len(out) % 2]
        if kind == "trapezoid":
            n = VoxelIndex(*rng.integers(-4, 4, 3).astype(float))
            G = vertex_angles(n, 0.0, g)
            lo, hi = max(G[0], G[1]), min(G[2], G[3])
            if hi <= lo:
                continue
            f = np.sort(rng.uniform(0.3, 0.95, 2))
            betas = (lo + f[0] * (hi - lo), lo + f[1] * (hi - lo))
        else:
            n = VoxelIndex(float(rng.integers(-4, 4)), float(rng.integers(-4, -1)),
                           float(rng.integers(0, 4)))
            G = vertex_angles(n, 0.0, g)
            if not G[1] < min(G[0], G[2], G[3]):
                continue
            hi = min(G[0], G[2])
            betas = (G[1] + rng.uniform(0.3, 0.95) * (hi - G[1]),)
        # row plane through the top face so the cut is partial
        x = (n.n_x + rng.uniform(0.0, 1.0)) * g.a
        tau = (n.n_z + 1) * g.c / (g.s - x)
        m_z = tau * g.sd / g.d_z
        if abs(m_z) < 1e-3:
            continue
        try:
            v0 = w3.vol_rel(m_z, betas, None, n, 0.0, g)
        except DegenerateGeometry:
            continue
        if v0 < 1e-6:
            continue
        out.append(dict(kind=kind, geom=g, n=n, betas=betas, m_z=m_z))
    return out


def suite_continuity(samples=100, seed=0, phi=2e-8, tol=1e-6) -> list:
    """``|Vol_rel(phi) - Vol_rel(0)|`` against ``tol * max(1, |Vol_rel(0)|)``.

    The pure relative difference is reported in a second row (informational,
    always passes) because it includes the true first-order change in ``phi``.
    """
    rows = []
    for i, case in enumerate(continuity_cases(samples, seed)):
        g, n, betas, m_z = case["geom"], case["n"], case["betas"], case["m_z"]
        v0 = w3.vol_rel(m_z, betas, None, n, 0.0, g)
        v1 = w3.vol_rel(m_z, betas, None, n, phi, g)
        diff = abs(v1 - v0)
        label = f"case{i} {case['kind']}"
        rows.append(_row("continuity", label, "scaled_diff", diff / max(1.0, abs(v0)), tol))
        rows.append(_row("continuity", label, "relative_diff", diff / abs(v0), math.inf, True))
    return rows


def suite_adjoint(geom: ScanGeometry, pairs=100, seed=0, tol=None, W=None) -> list:
    """``<W u, p>`` against ``<u, W^T p>`` for random unit vectors."""
    if tol is None:
        tol = 1e-13 if geom.is_3d else 1e-14
    W = W if W is not None else build_system_matrix(geom, "consistent")
    rng = np.random.default_rng(seed)
    rows = []
    for i in range(pairs):
        u = rng.standard_normal(W.n_cols)
        p = rng.standard_normal(W.n_rows)
        u /= np.linalg.norm(u)
        p /= np.linalg.norm(p)
        rows.append(_row("adjoint", f"pair{i}", "mismatch", adjoint_mismatch(W, u, p), tol))
    return rows


SUITES = ("weights2d", "weights3d", "adjoint", "identities", "partition", "continuity")


def run_suite(name: str, samples: int, seed: int, geom: ScanGeometry | None = None) -> list:
    """Dispatch used by the command line.  ``geom`` selects the geometry where it applies."""
    if name == "weights2d":
        if geom is not None and geom.is_3d:
            geom = None
        return suite_weights2d(samples, seed, geom=geom)
    if name == "weights3d":
        g3 = geom if geom is not None and geom.is_3d else None
        return (suite_weights3d_mc(samples, seed, geom=g3)
                + suite_closed_form(samples, seed))
    if name == "adjoint":
        if geom is None:
            raise InvalidSpec("the adjoint suite needs a geometry")
        return suite_adjoint(geom, samples, seed)
    if name == "identities":
        return suite_identities(samples, seed)
    if name == "partition":
        return suite_partition(samples, seed)
    if name == "continuity":
        return suite_continuity(samples, seed)
    raise InvalidSpec(f"unknown suite {name!r}")
