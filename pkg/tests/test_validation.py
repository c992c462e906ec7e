import csv

import numpy as np

from consistent_ct import validation as V
from consistent_ct.errors import InvalidSpec
from consistent_ct.experiments import (
    RunResult,
    dominated,
    fan_geometry,
    mse,
    phantom_for,
    reconstruct,
    resized,
    sweep,
)
from consistent_ct.solver import ReconConfig

import pytest


def test_report_helpers(tmp_path):
    rows = [V._row("s", "c1", "m", 1e-3, 1e-2), V._row("s", "c2", "m", 5e-2, 1e-2)]
    assert not V.all_passed(rows) and V.worst(rows) == 5e-2
    V.write_report(rows, tmp_path / "r.csv")
    back = list(csv.DictReader(open(tmp_path / "r.csv")))
    assert [r["passed"] for r in back] == ["True", "False"]
    assert tuple(back[0]) == V.REPORT_FIELDS


@pytest.mark.parametrize("name", ["weights2d", "identities", "partition", "continuity"])
def test_small_suites_pass(name):
    rows = V.run_suite(name, 20, seed=0)
    assert rows and V.all_passed(rows)


def test_weights3d_suite_small():
    rows = V.suite_weights3d_mc(4, seed=0, mc_samples=1 << 16, n_lines=400)
    assert rows and V.all_passed(rows)


def test_closed_form_pool_is_stratified():
    pool = V.closed_form_pool(600, seed=1)
    picked = V.stratified(pool, 40)
    assert len(picked) == 40
    assert {c["pattern"] for c in picked} <= V.patterns_of(pool)
    assert len({c["pattern"] for c in picked}) == min(40, len(V.patterns_of(pool)))
    rows = V.suite_closed_form(10, seed=1, pool_size=600)
    assert V.all_passed(rows)


def test_run_suite_requires_geometry_for_adjoint():
    with pytest.raises(InvalidSpec):
        V.run_suite("adjoint", 5, 0)
    with pytest.raises(InvalidSpec):
        V.run_suite("nope", 5, 0)
    assert V.all_passed(V.run_suite("adjoint", 5, 0, fan_geometry(8)))


def test_sweep_and_dominance():
    g = resized(fan_geometry(16), 8)
    assert g.n_x == 8 and g.n_y == 8
    truth = phantom_for("checkerboard", g, blocks=2)
    assert truth.shape == (8, 8) and mse(truth, truth) == 0.0
    seen = []
    res = sweep(g, phantom="checkerboard", modes=("consistent", "line"), lambdas=(1e-4,),
                sigma=1e-4, seed=0, max_iter=50, tol=1e-9, blocks=2, log=seen.append)
    assert len(res) == 2 and seen == res
    assert all(r.iterations <= 50 and r.seconds > 0 for r in res)
    fake = [RunResult("consistent", 8, 1e-4, 0.2, 10, True, 0.1, 0.1),
            RunResult("line", 8, 1e-4, 0.1, 10, True, 0.05, 0.05)]
    assert dominated(fake) == [(1e-4, "line")]
    assert dominated(fake[:1]) == []
    r = reconstruct(g, "consistent", np.zeros(g.sino_shape), truth, ReconConfig(max_iter=5))
    assert r.mse == pytest.approx(mse(np.zeros_like(truth), truth))
