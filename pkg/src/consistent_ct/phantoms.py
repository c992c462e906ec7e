"""Test images and noisy synthetic sinograms.

Noise is portable by construction.  Uniforms come from SplitMix64 (state
``seed + i * 0x9E3779B97F4A7C15``, standard finalizer, top 53 bits) and are
turned into normals by Box-Muller: uniforms ``2k`` and ``2k + 1`` give
``sqrt(-2 ln(1 - u1)) * cos(2 pi u2)`` and the matching ``sin`` term.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidSpec
from .geometry import ScanGeometry

KINDS = ("checkerboard2d", "checkerboard3d", "shepp_logan2d")

# modified Shepp-Logan (Toft): intensity, semi-axes, center, rotation in degrees
SHEPP_LOGAN = (
    (1.0, 0.69, 0.92, 0.0, 0.0, 0.0),
    (-0.8, 0.6624, 0.8740, 0.0, -0.0184, 0.0),
    (-0.2, 0.1100, 0.3100, 0.22, 0.0, -18.0),
    (-0.2, 0.1600, 0.4100, -0.22, 0.0, 18.0),
    (0.1, 0.2100, 0.2500, 0.0, 0.35, 0.0),
    (0.1, 0.0460, 0.0460, 0.0, 0.1, 0.0),
    (0.1, 0.0460, 0.0460, 0.0, -0.1, 0.0),
    (0.1, 0.0460, 0.0230, -0.08, -0.605, 0.0),
    (0.1, 0.0230, 0.0230, 0.0, -0.606, 0.0),
    (0.1, 0.0230, 0.0460, 0.06, -0.605, 0.0),
)

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


@dataclass(frozen=True)
class PhantomSpec:
    kind: str
    resolution: int
    blocks: int = 4
    sigma: float = 0.0
    seed: int = 0

    def validate(self) -> None:
        if self.kind not in KINDS:
            raise InvalidSpec(f"unknown phantom kind {self.kind!r}")
        if int(self.resolution) < 1:
            raise InvalidSpec("resolution must be >= 1")
        if self.kind.startswith("checkerboard"):
            if int(self.blocks) < 1 or self.resolution % self.blocks:
                raise InvalidSpec(f"resolution {self.resolution} is not divisible by "
                                  f"{self.blocks} blocks")
        if self.sigma < 0:
            raise InvalidSpec("sigma must be >= 0")


def checkerboard(shape, blocks: int = 4) -> np.ndarray:
    """0/1 blocks with value 1 at the all-zero index corner; works for any rank."""
    for n in shape:
        if n % blocks:
            raise InvalidSpec(f"size {n} is not divisible by {blocks} blocks")
    grids = np.indices(shape)
    parity = sum(g // (n // blocks) for g, n in zip(grids, shape)) % 2
    return (1 - parity).astype(np.float64)


def checkerboard2d(n: int, blocks: int = 4) -> np.ndarray:
    return checkerboard((n, n), blocks)


def checkerboard3d(n: int, blocks: int = 4) -> np.ndarray:
    return checkerboard((n, n, n), blocks)


def shepp_logan_value(x, y):
    """Sum of ellipse intensities at ``(x, y)`` in the ``[-1, 1]^2`` frame."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    out = np.zeros(np.broadcast(x, y).shape)
    for val, ea, eb, x0, y0, deg in SHEPP_LOGAN:
        th = np.deg2rad(deg)
        c, s = np.cos(th), np.sin(th)
        dx, dy = x - x0, y - y0
        u = (dx * c + dy * s) / ea
        v = (-dx * s + dy * c) / eb
        out = out + np.where(u * u + v * v <= 1.0, val, 0.0)
    return out


def shepp_logan2d(n: int) -> np.ndarray:
    """Modified Shepp-Logan sampled at pixel centers; array ``[iy, ix]``, y upward."""
    c = (np.arange(n) + 0.5) / n * 2.0 - 1.0
    X, Y = np.meshgrid(c, c)
    return np.clip(shepp_logan_value(X, Y), 0.0, 1.0)


def make_phantom(spec: PhantomSpec) -> np.ndarray:
    spec.validate()
    n = int(spec.resolution)
    if spec.kind == "checkerboard2d":
        return checkerboard2d(n, spec.blocks)
    if spec.kind == "checkerboard3d":
        return checkerboard3d(n, spec.blocks)
    return shepp_logan2d(n)


def splitmix64(seed: int, count: int) -> np.ndarray:
    """First ``count`` outputs of SplitMix64 seeded with ``seed``."""
    i = np.arange(1, count + 1, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = np.uint64(seed % (1 << 64)) + i * _GOLDEN
        z = (z ^ (z >> np.uint64(30))) * _M1
        z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def uniform(seed: int, count: int) -> np.ndarray:
    """Doubles in ``[0, 1)`` from the top 53 bits of SplitMix64."""
    return (splitmix64(seed, count) >> np.uint64(11)).astype(np.float64) * 2.0 ** -53


def gaussian(seed: int, count: int) -> np.ndarray:
    """Standard normals by Box-Muller on consecutive uniform pairs."""
    m = (count + 1) // 2
    u = uniform(seed, 2 * m)
    r = np.sqrt(-2.0 * np.log1p(-u[0::2]))
    th = 2.0 * np.pi * u[1::2]
    out = np.empty(2 * m)
    out[0::2] = r * np.cos(th)
    out[1::2] = r * np.sin(th)
    return out[:count]


def make_sinogram(geom: ScanGeometry, u, sigma: float = 0.0, seed: int = 0, W=None) -> np.ndarray:
    """``W u + sigma * noise`` with the consistent matrix (built if ``W`` is None)."""
    from .projector import build_system_matrix, forward

    if W is None:
        W = build_system_matrix(geom, "consistent")
    p = np.asarray(forward(W, u), dtype=np.float64).reshape(geom.sino_shape)
    if sigma:
        p = p + sigma * gaussian(seed, p.size).reshape(p.shape)
    return p
