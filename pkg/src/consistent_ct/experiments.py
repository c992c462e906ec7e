"""Reconstruction protocols: checkerboards in 2D and 3D, and the time/MSE sweep.

Each method normalizes its own matrix by its spectral norm (100 power
iterations) and reconstructs the same sinogram, which is always generated
with the consistent matrix plus seeded Gaussian noise.
"""
from __future__ import annotations

import time
from dataclasses import asdict, dataclass, replace

import numpy as np

from .errors import InvalidSpec
from .geometry import ScanGeometry, equidistant_angles
from .phantoms import checkerboard, gaussian, shepp_logan2d
from .projector import build_system_matrix, forward, spectral_norm
from .solver import ReconConfig, nag_tikhonov

FULL_2D = dict(s=250.0, d=250.0, d_y=0.75, n_det_y=60, n_angles=60, a=1.0)
REDUCED_3D = dict(s=250.0, d=250.0, d_y=1.5, d_z=1.5, n_det_y=30, n_det_z=30, n_angles=60, a=1.0)


@dataclass
class RunResult:
    mode: str
    resolution: int
    lam: float
    mse: float
    iterations: int
    converged: bool
    build_seconds: float
    solve_seconds: float

    @property
    def seconds(self) -> float:
        return self.build_seconds + self.solve_seconds

    def as_row(self) -> dict:
        row = asdict(self)
        row["seconds"] = self.seconds
        return row


def mse(u, ref) -> float:
    return float(np.mean((np.asarray(u, dtype=float) - np.asarray(ref, dtype=float)) ** 2))


def fan_geometry(n: int, params=FULL_2D) -> ScanGeometry:
    return ScanGeometry.fan(s=params["s"], d=params["d"], d_y=params["d_y"],
                            n_det_y=params["n_det_y"], a=params["a"], b=params["a"],
                            n_x=n, n_y=n, angles=equidistant_angles(params["n_angles"]))


def cone_geometry(n: int, params=REDUCED_3D) -> ScanGeometry:
    return ScanGeometry.cone(s=params["s"], d=params["d"], d_y=params["d_y"], d_z=params["d_z"],
                             n_det_y=params["n_det_y"], n_det_z=params["n_det_z"],
                             a=params["a"], b=params["a"], c=params["a"], n_x=n, n_y=n, n_z=n,
                             angles=equidistant_angles(params["n_angles"]))


def noisy_sinogram(W, u, sigma: float, seed: int) -> np.ndarray:
    p = np.asarray(forward(W, u), dtype=float).reshape(-1)
    return p + sigma * gaussian(seed, p.size) if sigma else p


def reconstruct(geom: ScanGeometry, mode: str, p, truth, cfg: ReconConfig, W=None,
                repeats: int = 1) -> RunResult:
    """Build (unless given), normalize and solve.

    With ``repeats > 1`` the whole pipeline is rerun and the fastest build and
    solve times are kept; the result itself is deterministic.
    """
    builds, solves = [], []
    for _ in range(max(1, repeats)):
        t0 = time.perf_counter()
        Wr = build_system_matrix(geom, mode) if W is None else W
        Wr.normalization = spectral_norm(Wr, 100, cfg.seed)
        t1 = time.perf_counter()
        u, trace = nag_tikhonov(Wr, p, cfg)
        t2 = time.perf_counter()
        builds.append(t1 - t0)
        solves.append(t2 - t1)
    return RunResult(mode, geom.n_x, cfg.lam, mse(u, truth), trace.iterations, trace.converged,
                     min(builds), min(solves))


def warm_up() -> None:
    """Compile the numba kernels so timings measure steady-state work."""
    for g in (fan_geometry(4), cone_geometry(4)):
        for mode in ("consistent", "line"):
            build_system_matrix(g, mode)


def resized(geom: ScanGeometry, n: int) -> ScanGeometry:
    """``geom`` with an ``n``-per-axis voxel grid."""
    if geom.is_3d:
        return replace(geom, n_x=n, n_y=n, n_z=n)
    return replace(geom, n_x=n, n_y=n)


def phantom_for(kind: str, geom: ScanGeometry, blocks: int = 4) -> np.ndarray:
    if kind == "checkerboard":
        return checkerboard(geom.image_shape, blocks)
    if kind == "shepp_logan":
        if geom.is_3d or geom.n_x != geom.n_y:
            raise InvalidSpec("the Shepp-Logan phantom needs a square 2D grid")
        return shepp_logan2d(geom.n_x)
    raise InvalidSpec(f"unknown phantom {kind!r}")


def sweep(geom: ScanGeometry, *, phantom="shepp_logan", resolutions=None, modes=("consistent",),
          lambdas=(1e-4,), sigma=1e-4, seed=0, max_iter=1000, tol=1e-9, blocks=4, repeats=1,
          log=None) -> list:
    """Reconstruct one phantom per resolution with every mode and lambda.

    The sinogram is ``W_consistent u + sigma * noise`` for each resolution.
    The consistent build is timed once and charged to the consistent runs.
    """
    out = []
    for n in resolutions or (None,):
        g = geom if n is None else resized(geom, n)
        truth = phantom_for(phantom, g, blocks)
        t0 = time.perf_counter()
        Wc = build_system_matrix(g, "consistent")
        build_c = time.perf_counter() - t0
        p = noisy_sinogram(Wc, truth, sigma, seed)
        for lam in lambdas:
            cfg = ReconConfig(lam=lam, max_iter=max_iter, grad_tol_sq=tol, seed=seed)
            for mode in modes:
                if mode == "consistent":
                    res = reconstruct(g, mode, p, truth, cfg, W=Wc, repeats=repeats)
                    res.build_seconds += build_c
                else:
                    res = reconstruct(g, mode, p, truth, cfg, repeats=repeats)
                out.append(res)
                if log:
                    log(res)
        del Wc
    return out


def checkerboard_runs(ndim: int, resolutions, *, modes=("line", "consistent"), blocks=4,
                      sigma=1e-4, lam=1e-4, max_iter=None, tol=1e-9, seed=0, log=None) -> list:
    """Checkerboard protocol: 2D at full detector size, 3D at the reduced one."""
    if max_iter is None:
        max_iter = 1000 if ndim == 2 else 500
    geom = fan_geometry(resolutions[0]) if ndim == 2 else cone_geometry(resolutions[0])
    return sweep(geom, phantom="checkerboard", resolutions=resolutions, modes=modes,
                 lambdas=(lam,), sigma=sigma, seed=seed, max_iter=max_iter, tol=tol,
                 blocks=blocks, log=log)


def bench_runs(*, n=40, lambdas=(1e-5, 1e-4), ks=(1, 2, 4, 8, 16, 32, 64), sigma=1e-4,
               max_iter=1000, tol=1e-9, seed=0, repeats=3, log=None) -> list:
    """Time/MSE sweep on the Shepp-Logan phantom for the consistent and K-line matrices."""
    modes = ["consistent"] + [f"multiline:{k}" for k in ks]
    return sweep(fan_geometry(n), phantom="shepp_logan", modes=modes, lambdas=lambdas,
                 sigma=sigma, seed=seed, max_iter=max_iter, tol=tol, repeats=repeats, log=log)


def dominated(results) -> list:
    """``(lam, mode)`` of every K-line point that beats the consistent point in both time and MSE."""
    bad = []
    for lam in sorted({r.lam for r in results}):
        group = [r for r in results if r.lam == lam]
        ref = next(r for r in group if r.mode == "consistent")
        for r in group:
            if r.mode != "consistent" and r.seconds < ref.seconds and r.mse < ref.mse:
                bad.append((lam, r.mode))
    return bad
