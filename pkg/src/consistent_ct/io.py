"""Binary containers (CSM1 matrices, CTT1 tensors) and the key=value config format.

CSM1::

    b"CSM1" | u64 n_rows | u64 n_cols | u64 nnz
    | u64 row_offsets[n_rows + 1] | u64 col_indices[nnz] | f64 values[nnz]
    | UTF-8 JSON metadata (geometry, mode, normalization) to end of file

CTT1::

    b"CTT1" | u32 rank | u64 dims[rank] | f64 values[prod(dims)]

All integers and floats are little-endian.  CTT1 dims are listed slowest
axis first (numpy shape order), so the last dim is x and varies fastest.
"""
from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, fields

import numpy as np
import scipy.sparse as sp

from .errors import ConfigError, FormatError
from .geometry import ScanGeometry, equidistant_angles
from .projector import SparseSystemMatrix

CSM_MAGIC = b"CSM1"
CTT_MAGIC = b"CTT1"


# ----------------------------------------------------------------------- CSM1

def write_csm(path, W: SparseSystemMatrix) -> None:
    csr = W.csr
    meta = dict(geometry=W.geometry.to_dict() if W.geometry is not None else None,
                mode=W.mode, normalization=W.normalization)
    with open(path, "wb") as fh:
        fh.write(CSM_MAGIC)
        fh.write(struct.pack("<QQQ", csr.shape[0], csr.shape[1], csr.nnz))
        fh.write(np.asarray(csr.indptr, dtype="<u8").tobytes())
        fh.write(np.asarray(csr.indices, dtype="<u8").tobytes())
        fh.write(np.asarray(csr.data, dtype="<f8").tobytes())
        fh.write(json.dumps(meta, sort_keys=True).encode("utf-8"))


def read_csm(path) -> SparseSystemMatrix:
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] != CSM_MAGIC:
        raise FormatError(f"{path}: not a CSM1 file")
    if len(raw) < 28:
        raise FormatError(f"{path}: truncated header")
    n_rows, n_cols, nnz = struct.unpack_from("<QQQ", raw, 4)
    off = 28
    need = off + 8 * (n_rows + 1) + 16 * nnz
    if len(raw) < need:
        raise FormatError(f"{path}: truncated payload")
    indptr = np.frombuffer(raw, dtype="<u8", count=n_rows + 1, offset=off)
    off += 8 * (n_rows + 1)
    indices = np.frombuffer(raw, dtype="<u8", count=nnz, offset=off)
    off += 8 * nnz
    data = np.frombuffer(raw, dtype="<f8", count=nnz, offset=off).copy()
    off += 8 * nnz
    if indptr[0] != 0 or indptr[-1] != nnz or np.any(np.diff(indptr.astype(np.int64)) < 0):
        raise FormatError(f"{path}: inconsistent row offsets")
    if nnz and indices.max() >= n_cols:
        raise FormatError(f"{path}: column index out of range")
    try:
        meta = json.loads(raw[off:].decode("utf-8")) if off < len(raw) else {}
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: bad metadata blob ({exc})") from None
    idx_t = np.int32 if max(n_cols, nnz) < 2 ** 31 else np.int64
    csr = sp.csr_matrix((data, indices.astype(idx_t), indptr.astype(idx_t)),
                        shape=(int(n_rows), int(n_cols)))
    geom = ScanGeometry.from_dict(meta["geometry"]) if meta.get("geometry") else None
    return SparseSystemMatrix(csr, geom, mode=meta.get("mode", "consistent"),
                              normalization=meta.get("normalization"))


# ----------------------------------------------------------------------- CTT1

def write_ctt(path, arr) -> None:
    a = np.ascontiguousarray(arr, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(CTT_MAGIC)
        fh.write(struct.pack("<I", a.ndim))
        fh.write(np.asarray(a.shape, dtype="<u8").tobytes())
        fh.write(a.tobytes())


def read_ctt(path) -> np.ndarray:
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] != CTT_MAGIC:
        raise FormatError(f"{path}: not a CTT1 file")
    if len(raw) < 8:
        raise FormatError(f"{path}: truncated header")
    (rank,) = struct.unpack_from("<I", raw, 4)
    if len(raw) < 8 + 8 * rank:
        raise FormatError(f"{path}: truncated dims")
    dims = tuple(int(v) for v in np.frombuffer(raw, dtype="<u8", count=rank, offset=8))
    count = math.prod(dims)
    off = 8 + 8 * rank
    if len(raw) != off + 8 * count:
        raise FormatError(f"{path}: payload has {len(raw) - off} bytes, expected {8 * count}")
    return np.frombuffer(raw, dtype="<f8", count=count, offset=off).reshape(dims).astype(np.float64)


# --------------------------------------------------------------------- config

_INT_KEYS = ("ndy", "ndz", "np", "nx", "ny", "nz", "max_iter", "seed")
_FLOAT_KEYS = ("s", "d", "dy", "dz", "angle_start", "angle_end", "a", "b", "c",
               "lambda", "tol", "sigma")


@dataclass
class Config:
    """Flat run configuration; ``None`` marks a key that was not given."""

    s: float | None = None
    d: float | None = None
    dy: float | None = None
    dz: float | None = None
    ndy: int | None = None
    ndz: int | None = None
    np: int | None = None
    angle_start: float | None = None
    angle_end: float | None = None
    a: float | None = None
    b: float | None = None
    c: float | None = None
    nx: int | None = None
    ny: int | None = None
    nz: int | None = None
    lam: float | None = None
    max_iter: int | None = None
    tol: float | None = None
    sigma: float | None = None
    seed: int | None = None

    @property
    def is_3d(self) -> bool:
        return any(getattr(self, k) is not None for k in ("dz", "ndz", "c", "nz"))

    def geometry(self) -> ScanGeometry:
        for key in ("s", "d", "dy", "ndy", "np", "a", "nx"):
            if getattr(self, key) is None:
                raise ConfigError(f"missing key {key!r}")
        start = 0.0 if self.angle_start is None else self.angle_start
        end = 2.0 * math.pi if self.angle_end is None else self.angle_end
        angles = equidistant_angles(self.np, start, end)
        b = self.a if self.b is None else self.b
        ny = self.nx if self.ny is None else self.ny
        if self.is_3d:
            return ScanGeometry.cone(
                s=self.s, d=self.d, d_y=self.dy, d_z=self.dz if self.dz is not None else self.dy,
                n_det_y=self.ndy, n_det_z=self.ndz if self.ndz is not None else self.ndy,
                a=self.a, b=b, c=self.c if self.c is not None else self.a,
                n_x=self.nx, n_y=ny, n_z=self.nz if self.nz is not None else self.nx,
                angles=angles)
        return ScanGeometry.fan(s=self.s, d=self.d, d_y=self.dy, n_det_y=self.ndy, a=self.a,
                                b=b, n_x=self.nx, n_y=ny, angles=angles)

    def recon(self, **overrides):
        from .solver import ReconConfig

        kw = dict(lam=1e-4 if self.lam is None else self.lam,
                  max_iter=1000 if self.max_iter is None else self.max_iter,
                  grad_tol_sq=1e-9 if self.tol is None else self.tol,
                  seed=0 if self.seed is None else self.seed)
        kw.update({k: v for k, v in overrides.items() if v is not None})
        return ReconConfig(**kw)


def _field_name(key):
    return "lam" if key == "lambda" else key


def _key_name(name):
    return "lambda" if name == "lam" else name


CONFIG_KEYS = tuple(_key_name(f.name) for f in fields(Config))


def parse_config(text: str) -> Config:
    """Parse ``key = value`` lines; ``#`` starts a comment.  Unknown or repeated keys are errors."""
    cfg = Config()
    seen = set()
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value")
        key, val = (p.strip() for p in line.split("=", 1))
        if key not in CONFIG_KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in seen:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        seen.add(key)
        try:
            if key in _INT_KEYS:
                v = int(val)
            else:
                v = float(val)
                if not math.isfinite(v):
                    raise ValueError("not finite")
        except ValueError:
            raise ConfigError(f"line {lineno}: bad value {val!r} for {key!r}") from None
        setattr(cfg, _field_name(key), v)
    return cfg


def serialize_config(cfg: Config) -> str:
    """Canonical text: given keys only, in the fixed key order, floats in shortest round-trip form."""
    out = []
    for f in fields(Config):
        v = getattr(cfg, f.name)
        if v is None:
            continue
        out.append(f"{_key_name(f.name)} = {v if isinstance(v, int) else repr(float(v))}")
    return "\n".join(out) + "\n"


def load_config(path) -> Config:
    try:
        with open(path) as fh:
            return parse_config(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
