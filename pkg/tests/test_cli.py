import csv

import numpy as np
import pytest
from PIL import Image

from consistent_ct.cli import EXIT_MAX_ITER, main, parse_phantom_spec
from consistent_ct.errors import InvalidSpec
from consistent_ct.io import read_csm, read_ctt, write_ctt

FAN = """s = 40
d = 40
dy = 1
ndy = 16
np = 16
a = 1
nx = 8
lambda = 1e-4
"""


@pytest.fixture
def workdir(tmp_path):
    (tmp_path / "fan.cfg").write_text(FAN)
    return tmp_path


def run(*argv):
    return main([str(a) for a in argv])


def test_full_pipeline(workdir, capsys):
    w = workdir
    assert run("build-sm", "--config", w / "fan.cfg", "--out", w / "w.csm", "--normalize") == 0
    W = read_csm(w / "w.csm")
    assert W.shape == (16 * 16, 64) and W.normalization > 0
    assert run("phantom", "--spec", "checkerboard2d:8:2", "--out", w / "u.ctt") == 0
    assert read_ctt(w / "u.ctt").shape == (8, 8)
    assert run("project", "--sm", w / "w.csm", "--image", w / "u.ctt", "--sigma", "0.001",
               "--seed", 1, "--out", w / "p.ctt") == 0
    assert read_ctt(w / "p.ctt").shape == (16, 16)
    code = run("reconstruct", "--sm", w / "w.csm", "--sino", w / "p.ctt", "--config",
               w / "fan.cfg", "--tol", "1e-8", "--max-iter", 5000, "--out", w / "r.ctt",
               "--trace", w / "trace.csv")
    assert code == 0
    rec = read_ctt(w / "r.ctt")
    assert np.mean((rec - read_ctt(w / "u.ctt")) ** 2) < 0.05
    rows = list(csv.reader(open(w / "trace.csv")))
    assert rows[0] == ["iteration", "objective", "grad_norm_sq"]
    assert float(rows[-1][2]) < 1e-8
    assert run("reconstruct", "--sm", w / "w.csm", "--sino", w / "p.ctt", "--max-iter", 2,
               "--tol", "1e-30", "--out", w / "r2.ctt") == EXIT_MAX_ITER
    assert run("export-png", "--tensor", w / "r.ctt", "--out", w / "r.png") == 0
    assert "-> [0,255]" in capsys.readouterr().out
    png = np.asarray(Image.open(w / "r.png"))
    assert png.shape == (8, 8) and png.min() == 0 and png.max() == 255


def test_line_mode_and_identity_reconstruct(workdir):
    w = workdir
    assert run("build-sm", "--config", w / "fan.cfg", "--mode", "multiline:4",
               "--out", w / "m.csm") == 0
    assert read_csm(w / "m.csm").mode == "multiline:4"
    (w / "one.cfg").write_text("s = 40\nd = 40\ndy = 10\nndy = 1\nnp = 1\na = 1\nnx = 1\n")
    assert run("build-sm", "--config", w / "one.cfg", "--out", w / "one.csm") == 0
    write_ctt(w / "one.ctt", np.array([[0.75]]))
    assert run("reconstruct", "--sm", w / "one.csm", "--sino", w / "one.ctt", "--lambda", 0,
               "--tol", "1e-24", "--out", w / "x.ctt") == 0
    assert read_ctt(w / "x.ctt")[0, 0] == pytest.approx(0.75, abs=1e-10)


def test_validate_and_bench(workdir, capsys):
    w = workdir
    assert run("validate", "--config", w / "fan.cfg", "--suite", "adjoint", "--samples", 20,
               "--seed", 0, "--report", w / "rep.csv") == 0
    rows = list(csv.DictReader(open(w / "rep.csv")))
    assert len(rows) == 20 and all(r["passed"] == "True" for r in rows)
    assert run("validate", "--suite", "weights2d", "--samples", 30, "--seed", 0) == 0
    assert run("bench", "--config", w / "fan.cfg", "--modes", "consistent,line",
               "--lambdas", "1e-4", "--seed", 3, "--out", w / "b.csv") == 0
    rows = list(csv.DictReader(open(w / "b.csv")))
    assert [r["mode"] for r in rows] == ["consistent", "line"]
    assert all(float(r["mse"]) >= 0 for r in rows)


def test_error_codes(workdir, capsys):
    w = workdir
    assert run("build-sm", "--config", w / "missing.cfg", "--out", w / "x.csm") == 31
    assert "error[E_CONFIG]" in capsys.readouterr().err
    (w / "bad.cfg").write_text(FAN + "zoom = 2\n")
    assert run("build-sm", "--config", w / "bad.cfg", "--out", w / "x.csm") == 31
    assert run("build-sm", "--config", w / "fan.cfg", "--mode", "area",
               "--out", w / "x.csm") == 30
    assert run("phantom", "--spec", "checkerboard2d:10", "--out", w / "x.ctt") == 30
    (w / "junk.csm").write_bytes(b"nope")
    assert run("project", "--sm", w / "junk.csm", "--image", w / "x.ctt", "--seed", 0,
               "--out", w / "y.ctt") == 32
    assert run("build-sm", "--config", w / "fan.cfg", "--out", w / "w.csm") == 0
    write_ctt(w / "small.ctt", np.zeros((3, 3)))
    assert run("project", "--sm", w / "w.csm", "--image", w / "small.ctt", "--seed", 0,
               "--out", w / "y.ctt") == 20
    assert run("phantom", "--spec", "checkerboard2d:8", "--out", w / "no" / "dir.ctt") == 33
    assert "error[E_IO]" in capsys.readouterr().err


def test_parse_phantom_spec():
    spec = parse_phantom_spec("shepp_logan2d:40")
    assert spec.kind == "shepp_logan2d" and spec.resolution == 40 and spec.blocks == 4
    assert parse_phantom_spec("checkerboard3d:16:8").blocks == 8
    for bad in ("checkerboard2d", "checkerboard2d:x", "a:1:2:3", "ellipse:8"):
        with pytest.raises(InvalidSpec):
            parse_phantom_spec(bad)
