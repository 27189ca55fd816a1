import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cgllab.evolution import FlowParams, StepControl, Trajectory, Verdict
from cgllab.grid import Grid, hdot1_norm
from cgllab.ground_state import energy, reference_constants
from cgllab.scenarios import (
    ClassificationReport,
    InitialDataSpec,
    SearchError,
    build_initial_data,
    classify_run,
    default_grid,
    dichotomy_suite,
    scaled_w_ratios,
    threshold_search,
    worker_count,
)


@pytest.fixture(scope="module")
def refs3():
    return reference_constants(3)


@pytest.fixture(scope="module")
def box3():
    return reference_constants(3, box_length=60.0, lam=1.0)


@pytest.mark.parametrize("d,c,er", [(3, 0.5, 0.3671875), (3, 1.2, 0.667008), (4, 0.8, 0.8704), (4, 1.0, 1.0)])
def test_scaled_w_closed_form(d, c, er):
    e, k = scaled_w_ratios(c, reference_constants(d))
    assert e == pytest.approx(er, abs=1e-6)
    assert k == pytest.approx(c, rel=1e-12)


@given(st.floats(0.05, 2.0))
def test_scaled_w_formula_matches_polynomial(c):
    for d in (3, 4):
        p = 2 * d / (d - 2)
        e, _ = scaled_w_ratios(c, reference_constants(d))
        assert e == pytest.approx((d * c**2 - (d - 2) * c**p) / 2, abs=1e-8)


@pytest.mark.parametrize("c", [0.5, 0.8, 1.1, 1.2])
def test_scaled_w_box_refs_match_quadrature(grid3, box3, c):
    data = build_initial_data(InitialDataSpec("ScaledW", c=c), grid3, box3)
    assert data.closed_form
    assert energy(data.field) / box3.energy_W == pytest.approx(data.energy_ratio, rel=1e-2)
    assert hdot1_norm(data.field) / box3.gradW_norm == pytest.approx(data.kinetic_ratio, rel=1e-2)


def test_spec_validation():
    with pytest.raises(ValueError, match="unknown initial-data kind"):
        InitialDataSpec("Bump")
    with pytest.raises(ValueError):
        InitialDataSpec("ScaledW", c=0.0)
    with pytest.raises(ValueError):
        InitialDataSpec("SpectralProfile", k=-1.0)


def test_gaussian_hdot1_rescale(grid3, refs3):
    data = build_initial_data(InitialDataSpec("Gaussian", width=2.0, hdot1=0.05 * refs3.gradW_norm), grid3, refs3)
    assert data.kinetic_ratio == pytest.approx(0.05, rel=1e-12)
    assert not data.closed_form


def test_bump_seed_reproducible(grid3):
    a = build_initial_data(InitialDataSpec("WPlusBump", c=0.8, eps=0.1, seed=7), grid3).field
    b = build_initial_data(InitialDataSpec("WPlusBump", c=0.8, eps=0.1, seed=7), grid3).field
    c = build_initial_data(InitialDataSpec("WPlusBump", c=0.8, eps=0.1, seed=8), grid3).field
    assert np.array_equal(a.values, b.values) and not np.array_equal(a.values, c.values)


def test_default_grids():
    assert default_grid(3) == Grid(3, 64, 60.0)
    assert default_grid(4) == Grid(4, 32, 40.0)


@pytest.mark.parametrize("c", [0.75, 1.1])
def test_threshold_search_lands_on_shell(grid3, c):
    refs = reference_constants(3, box_length=60.0, lam=3.0)
    spec, ratio, iters = threshold_search(grid3, refs, c, lam=3.0, bump_width=4.5)
    assert abs(ratio - 1.0) <= 1e-8
    data = build_initial_data(spec, grid3, refs)
    assert data.energy_ratio == pytest.approx(1.0, abs=1e-8)
    assert np.sign(data.kinetic_ratio - 1.0) == np.sign(c - 1.0)


def test_threshold_search_failure(grid3):
    refs = reference_constants(3, box_length=60.0, lam=3.0)
    with pytest.raises(SearchError):
        threshold_search(grid3, refs, 0.75, lam=3.0, bump_width=4.5, max_iter=1, rtol=0.0, shell=1e-12)


def _traj(grid, verdict, h1, snaps=()):
    t = list(np.linspace(0, 10, len(h1)))
    tr = Trajectory(grid, FlowParams(1.0), times=t, h1=list(h1), energy=[1.0] * len(h1), verdict=verdict)
    tr.snapshots = list(snaps)
    return tr


def test_classify_run_verdicts(grid3, box3):
    g = box3.gradW_norm
    assert classify_run(_traj(grid3, Verdict.BLOWUP, [g, 2 * g, math.inf]), box3).verdict == "BlowUp"
    assert classify_run(_traj(grid3, Verdict.DISSIPATED, [g, 0.5 * g, 1e-7 * g]), box3).verdict == "Dissipated"
    und = classify_run(_traj(grid3, Verdict.STEP_UNDERFLOW, [g, g]), box3)
    assert und.verdict == "Undecided" and "resolution loss" in und.reason
    falling = classify_run(_traj(grid3, Verdict.REACHED_HORIZON, np.linspace(g, 0.2 * g, 20)), box3)
    assert falling.verdict == "Dissipated"
    flat = classify_run(_traj(grid3, Verdict.REACHED_HORIZON, [g, 0.7 * g, 0.9 * g, 0.6 * g, 0.8 * g]), box3)
    assert flat.verdict == "Undecided" and flat.reason


def test_classify_stationary(grid3, box3):
    from cgllab.ground_state import make_W

    W = make_W(grid3)
    g = box3.gradW_norm
    tr = _traj(grid3, Verdict.REACHED_HORIZON, [g * (1 + 0.01 * s) for s in np.sin(np.arange(10))],
               snaps=[(0.0, W), (10.0, W)])
    assert classify_run(tr, box3).verdict == "StationaryPersist"


def test_report_needs_reason_and_serializes():
    with pytest.raises(ValueError):
        ClassificationReport("x", 1.0, 1.0, "Undecided")
    rep = ClassificationReport("x", 0.5, 0.9, "BlowUp", evidence={"t": math.inf, "z": 1 + 1j})
    doc = json.loads(rep.to_json())
    assert doc["evidence"]["t"] == "inf" and doc["evidence"]["z"] == {"re": 1.0, "im": 1.0}


def test_dichotomy_rejects_threshold():
    with pytest.raises(ValueError, match="c != 1"):
        dichotomy_suite(3, 1.0, [0.5, 1.0])
    with pytest.raises(ValueError):
        dichotomy_suite(3, 1.0, [-0.5])


def test_worker_count(monkeypatch):
    monkeypatch.setenv("CGLLAB_THREADS", "3")
    assert worker_count(10) == 3 and worker_count(2) == 2
    monkeypatch.setenv("CGLLAB_THREADS", "x")
    with pytest.raises(ValueError):
        worker_count(4)


RANK = {"Dissipated": 0, "StationaryPersist": 1, "Undecided": 1, "BlowUp": 2}


def test_small_dichotomy_monotone_in_c():
    g = Grid(3, 32, 30.0)
    ctrl = StepControl(t_max=20.0, dt_out=0.2, dt_max=1.0, tol=1e-7)
    reps = dichotomy_suite(3, 1.0, [0.5, 0.8, 1.3], grid=g, lam=2.0, ctrl=ctrl, workers=1)
    by_c = sorted(reps, key=lambda r: r.kinetic_ratio)
    ranks = [RANK[r.verdict] for r in by_c]
    assert ranks == sorted(ranks)
    assert by_c[-1].verdict == "BlowUp"
    assert [r.scenario_id for r in reps] == sorted(r.scenario_id for r in reps)
