import math

import numpy as np
import pytest

from consistent_ct.errors import ConfigError, FormatError
from consistent_ct.geometry import ScanGeometry, equidistant_angles
from consistent_ct.io import (
    CONFIG_KEYS,
    Config,
    load_config,
    parse_config,
    read_csm,
    read_ctt,
    serialize_config,
    write_csm,
    write_ctt,
)
from consistent_ct.projector import build_system_matrix

CFG = """
# fan beam
s = 250
d = 250
dy = 0.75
ndy = 60
np = 60
a = 1.0
nx = 16
lambda = 1e-4
"""


def _matrix():
    g = ScanGeometry.cone(s=30, d=30, d_y=1, d_z=1, n_det_y=6, n_det_z=6, a=1, b=1, c=1,
                          n_x=3, n_y=3, n_z=3, angles=equidistant_angles(3))
    return build_system_matrix(g, "consistent")


def test_csm_round_trip(tmp_path):
    W = _matrix()
    path = tmp_path / "w.csm"
    write_csm(path, W)
    R = read_csm(path)
    assert (R.csr != W.csr).nnz == 0
    assert R.geometry == W.geometry and R.mode == "consistent" and R.normalization is None


def test_csm_rejects_bad_files(tmp_path):
    W = _matrix()
    path = tmp_path / "w.csm"
    write_csm(path, W)
    raw = path.read_bytes()
    for bad in (b"XXXX" + raw[4:], raw[:20], raw[:200]):
        path.write_bytes(bad)
        with pytest.raises(FormatError):
            read_csm(path)
    path.write_bytes(raw + b"\xff")
    with pytest.raises(FormatError):
        read_csm(path)


def test_ctt_round_trip_and_errors(tmp_path):
    arr = np.arange(24, dtype=float).reshape(2, 3, 4)
    path = tmp_path / "t.ctt"
    write_ctt(path, arr)
    raw = path.read_bytes()
    assert raw[:4] == b"CTT1" and len(raw) == 4 + 4 + 3 * 8 + 24 * 8
    assert np.array_equal(read_ctt(path), arr)
    for bad in (b"CTT2" + raw[4:], raw[:-8], raw + b"\0" * 8, raw[:6]):
        path.write_bytes(bad)
        with pytest.raises(FormatError):
            read_ctt(path)


def test_parse_config_defaults():
    cfg = parse_config(CFG)
    assert cfg.lam == 1e-4 and cfg.nx == 16 and not cfg.is_3d
    g = cfg.geometry()
    assert g.ndim == 2 and g.n_y == 16 and g.b == 1.0
    assert g.angles[0] == 0.0 and g.n_angles == 60
    assert g.angles[1] == pytest.approx(2 * math.pi / 60)
    rc = cfg.recon()
    assert rc.max_iter == 1000 and rc.grad_tol_sq == 1e-9 and rc.lam == 1e-4
    assert cfg.recon(lam=0.5).lam == 0.5


def test_parse_config_3d_defaults():
    g = parse_config(CFG + "nz = 8\n").geometry()
    assert g.ndim == 3 and g.n_z == 8 and g.d_z == 0.75 and g.n_det_z == 60 and g.c == 1.0


@pytest.mark.parametrize("text", [
    "s = 1\nbogus = 2\n",
    "s = 1\ns = 2\n",
    "ndy = 2.5\n",
    "s = abc\n",
    "s = inf\n",
    "just words\n",
])
def test_parse_config_errors(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_missing_key_and_file(tmp_path):
    with pytest.raises(ConfigError):
        parse_config("s = 1\n").geometry()
    with pytest.raises(ConfigError):
        load_config(tmp_path / "none.cfg")


def test_serialize_round_trip():
    cfg = parse_config(CFG)
    text = serialize_config(cfg)
    assert parse_config(text) == cfg
    assert text.splitlines()[0] == "s = 250.0"
    assert set(CONFIG_KEYS) >= {line.split(" = ")[0] for line in text.splitlines()}
    assert serialize_config(Config()) == "\n"
