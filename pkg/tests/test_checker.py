import json
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from gen import rand_feedback, rand_linear_map, rand_lms
from mechlin.checker import (
    DEFAULT_SEED,
    SamplingPlan,
    check_all,
    default_seed,
    membership_residual,
    numerical_rank,
    sample_points,
)
from mechlin.geometry import apply_feedback, linear_change
from mechlin.io import load_system

GOLDEN = Path(__file__).parent / "golden"
VERDICT_KEYS = {"condition", "status", "residual", "witness", "samples_failed"}


def test_numerical_rank_and_membership():
    assert numerical_rank([[1, 0, 0], [0, 1e-3, 0]]) == 2
    assert numerical_rank([[1, 0, 0], [0, 1e-12, 0]]) == 1
    assert numerical_rank([[0, 0]]) == 0
    assert membership_residual([1.0, 2.0, 0.0], [[1, 0, 0], [0, 1, 0]]) < 1e-15
    assert membership_residual([0.0, 0.0, 3.0], [[1, 0, 0]]) == pytest.approx(1.0)
    # small vectors are measured absolutely
    assert membership_residual([0.0, 0.0, 0.5], [[1, 0, 0]]) == pytest.approx(0.5)


def test_plan_validation():
    with pytest.raises(ValueError):
        SamplingPlan(sample_count=2)
    with pytest.raises(ValueError):
        SamplingPlan(rank_tol=0.0)
    with pytest.raises(ValueError):
        SamplingPlan(boundary_fraction=1.0)


def test_seed_from_environment(monkeypatch):
    monkeypatch.delenv("MECHLIN_SEED", raising=False)
    assert default_seed() == DEFAULT_SEED
    monkeypatch.setenv("MECHLIN_SEED", "17")
    assert default_seed() == 17
    assert SamplingPlan().seed == 17


def test_samples_stay_inside_the_box():
    s = load_system("tora3")
    X = sample_points(s, SamplingPlan(sample_count=256))
    assert X.shape == (256, 3)
    assert np.all(X > s.domain[:, 0]) and np.all(X < s.domain[:, 1])


@pytest.mark.parametrize("name", ["example1", "iwp", "tora3", "nonseparable"])
def test_deterministic_reports(name):
    s = load_system(name)
    a = check_all(s, SamplingPlan(seed=5)).to_dict()
    b = check_all(s, SamplingPlan(seed=5)).to_dict()
    assert a == b


@pytest.mark.parametrize("name,overall", [
    ("example1", "not_linearizable"),
    ("iwp", "linearizable"),
    ("tora3", "linearizable"),
    ("nonseparable", "linearizable"),
])
def test_shipped_verdicts(name, overall):
    assert check_all(load_system(name)).overall == overall


@pytest.mark.parametrize("name", ["example1", "iwp"])
def test_golden_reports(name):
    report = check_all(load_system(name), SamplingPlan(seed=DEFAULT_SEED)).to_dict()
    golden = json.loads((GOLDEN / f"check_{name}.json").read_text())
    assert report["overall"] == golden["overall"]
    assert [set(v) for v in report["verdicts"]] == [VERDICT_KEYS] * len(golden["verdicts"])
    for got, want in zip(report["verdicts"], golden["verdicts"]):
        assert got["condition"] == want["condition"]
        assert got["status"] == want["status"]
        assert got["samples_failed"] == want["samples_failed"]
        assert got["residual"] == pytest.approx(want["residual"], abs=1e-12)
        assert np.allclose(got["witness"], want["witness"], atol=1e-12)


def test_tolerance_monotonicity():
    # a pass at one tolerance stays a pass at any looser one, a fail stays a fail at any tighter one
    s = load_system("example1")
    order = {"pass": 0, "boundary": 1, "fail": 2}
    prev = None
    for tol in (1e-3, 1e-6, 1e-9, 1e-12):
        st = check_all(s, SamplingPlan(membership_tol=tol)).statuses()
        if prev is not None:
            assert all(order[st[k]] >= order[prev[k]] for k in st)
        prev = st


def test_subsets_of_passing_samples_pass():
    s = load_system("tora3")
    X = sample_points(s, SamplingPlan())
    full = check_all(s, points=X)
    part = check_all(s, points=X[::3])
    assert full.overall == "linearizable" and part.overall == "linearizable"


def test_widened_tora_box_reports_singular_set():
    s = load_system("tora3").with_domain([[-0.5, 0.5], [-0.5, 0.5], [-2.0, 2.0]])
    r = check_all(s)
    mf1 = r.verdict("MF1")
    assert mf1.status in ("boundary", "fail")
    assert abs(abs(mf1.witness[2]) - np.pi / 2) < 0.05
    assert r.overall != "linearizable" and r.excluded


@pytest.mark.parametrize("name", ["iwp", "tora3", "example1"])
def test_feedback_invariance(name):
    s = load_system(name)
    rng = np.random.default_rng(7)
    X = sample_points(s, SamplingPlan())
    base = check_all(s, points=X).statuses()
    for _ in range(3):
        closed = apply_feedback(s, *rand_feedback(rng, s.n, s.domain))
        assert check_all(closed, points=X).statuses() == base


@pytest.mark.parametrize("name", ["iwp", "tora3", "example1"])
def test_coordinate_invariance(name):
    s = load_system(name)
    rng = np.random.default_rng(8)
    X = sample_points(s, SamplingPlan())
    base = check_all(s, points=X).statuses()
    for _ in range(3):
        A, shift = rand_linear_map(rng, s.n)
        new, to_new = linear_change(s, A, shift)
        assert check_all(new, points=to_new(X)).statuses() == base


def test_random_lms_pass():
    rng = np.random.default_rng(3)
    for n in (2, 3, 4):
        s, _, _ = rand_lms(rng, n)
        assert check_all(s, SamplingPlan(sample_count=32)).overall == "linearizable"


def test_plan_is_frozen():
    p = SamplingPlan()
    with pytest.raises(Exception):
        p.seed = 3
    assert replace(p, seed=3).seed == 3
