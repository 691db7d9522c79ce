import numpy as np
import pytest

from gen import rand_lms
from mechlin.checker import SamplingPlan, sample_points
from mechlin.expr import diff, evaluate, evaluate_many, parse
from mechlin.geometry import MechanicalSystem
from mechlin.io import load_system, read_artifact, write_artifact
from mechlin.synthesis import (
    AnnihilationFailed,
    OutputNotFound,
    TransversalityFailed,
    build_diffeo,
    build_feedback,
    find_output,
    lambda_correct,
    linearize,
    transform_at,
    verify_linearization,
    verify_output,
)


def _grad(h, sys, X):
    return np.column_stack(evaluate_many([diff(h, i) for i in range(1, sys.n + 1)], X, sys.params))


def _cosine(a, b):
    return np.abs(np.sum(a * b, axis=1)) / (np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1))


def test_iwp_output_direction():
    s = load_system("iwp")
    h = find_output(s).h
    X = sample_points(s, SamplingPlan())
    ref = parse("((md + J2)/J2)*x1 + x2", params=set(s.params))
    assert np.all(np.abs(_cosine(_grad(h, s, X), _grad(ref, s, X)) - 1) < 1e-10)


def test_tora3_output_direction():
    s = load_system("tora3")
    h = find_output(s).h
    X = sample_points(s, SamplingPlan())
    ref = parse("(m1/(m2 + m3))*x1 + x2 + (m3*l3/(m2 + m3))*sin(x3)", params=set(s.params))
    assert np.all(np.abs(_cosine(_grad(h, s, X), _grad(ref, s, X)) - 1) < 1e-9)


@pytest.mark.parametrize("name,n", [("iwp", 2), ("tora3", 3)])
def test_shipped_systems_reach_a_chain(name, n):
    tr = linearize(load_system(name))
    chain = np.diag(np.ones(n - 1), -1)
    assert np.allclose(tr.model.E, chain, atol=1e-8)
    assert np.allclose(tr.model.b, np.eye(n)[0], atol=1e-8)
    assert tr.model.residual < 1e-8
    assert tr.model.controllability_indices() == [n]


def test_closed_loop_is_linear_at_samples():
    s = load_system("tora3")
    tr = linearize(s)
    X = sample_points(s, SamplingPlan(sample_count=40, seed=3))
    G, e, g = transform_at(s, tr.diffeo, X, feedback=tr.feedback)
    assert np.max(np.abs(G)) < 1e-6
    xt = tr.diffeo.evaluate(X, s.params)
    assert np.allclose(e, xt @ tr.model.E.T, atol=1e-6)
    assert np.allclose(g, tr.model.b, atol=1e-9)


def test_nonseparable_needs_explicit_output():
    s = load_system("nonseparable")
    with pytest.raises(OutputNotFound):
        find_output(s)


def test_verify_output_rejections():
    s = load_system("iwp")
    with pytest.raises(AnnihilationFailed) as info:
        verify_output(s, "x1")
    assert info.value.j == 0
    # constant h is annihilated by everything, including ad^{n-1} g
    with pytest.raises(TransversalityFailed):
        verify_output(s, "3")
    with pytest.raises(ValueError):
        verify_output(s, "x3")


def test_output_scale_is_free():
    s = load_system("iwp")
    a = linearize(s)
    b = linearize(s, h=f"2*({a.output.h})")
    assert np.allclose(a.model.E, b.model.E) and np.allclose(a.model.b, b.model.b)


@pytest.mark.parametrize("gamma,numeric", [("1", False), ("x2", True), ("2*x2", True)])
def test_lambda_correction(gamma, numeric):
    s = MechanicalSystem(2, {(2, 2, 2): gamma}, ["0", "x1"], ["1", "0"], [[-1, 1], [-1, 1]])
    tr = linearize(s)
    assert tr.correction is not None and tr.correction.numeric == numeric
    assert tr.model.gamma_residual < 1e-8
    assert tr.model.controllability_indices() == [2]


def test_lambda_correct_closed_form():
    h, corr = lambda_correct("x1 + x2", "1")
    X = np.array([[0.1, 0.2], [-0.3, 0.4]])
    assert np.allclose(evaluate(h, X), np.expm1(X.sum(axis=1)))
    assert not corr.numeric
    with pytest.raises(ValueError):
        lambda_correct("x1", "x2")


def test_lambda_table_matches_quadrature():
    s = MechanicalSystem(2, {(2, 2, 2): "x2"}, ["0", "x1"], ["1", "0"], [[-1, 1], [-1, 1]])
    h, corr = lambda_correct("x2", "x1", s)
    assert corr.numeric
    # H(t) = int_0^t exp(s^2/2) ds
    from scipy.integrate import quad

    for t in (-0.8, 0.3, 0.9):
        want = quad(lambda v: np.exp(v * v / 2), 0, t)[0]
        assert abs(evaluate(h, [0.0, t]) - want) < 1e-9


@pytest.mark.parametrize("seed", range(6))
def test_lms_is_a_fixed_point(seed):
    rng = np.random.default_rng(50 + seed)
    n = int(rng.integers(2, 6))
    s, E, b = rand_lms(rng, n)
    tr = linearize(s)
    assert tr.model.controllability_indices() == [n]
    # the transformed model is similar to a chain, and the map is affine
    X = sample_points(s, SamplingPlan(sample_count=16))
    J = tr.diffeo.jacobian_at(X, s.params)
    assert np.allclose(J, J[0], atol=1e-9)


def test_pipeline_pieces_agree():
    s = load_system("iwp")
    h = find_output(s).h
    d = build_diffeo(s, h)
    f = build_feedback(s, d)
    m = verify_linearization(s, d, f)
    assert m.controllability_rank() == 2


@pytest.mark.parametrize("name", ["iwp", "tora3"])
def test_artifact_round_trip(tmp_path, name):
    s = load_system(name)
    tr = linearize(s)
    path = tmp_path / "a.json"
    write_artifact(path, s, tr)
    back = read_artifact(path, s)
    X = sample_points(s, SamplingPlan(sample_count=16))
    # expressions are stored as text, so re-parsing may reorder floating point sums
    assert np.allclose(tr.diffeo.evaluate(X, s.params), back.diffeo.evaluate(X, s.params), rtol=1e-13, atol=0)
    for a, b in zip(tr.feedback.values(X, s.params), back.feedback.values(X, s.params)):
        assert np.allclose(a, b, rtol=1e-12, atol=1e-12)
    assert np.array_equal(tr.model.E, back.model.E)


def test_artifact_round_trip_with_table(tmp_path):
    s = MechanicalSystem(2, {(2, 2, 2): "x2"}, ["0", "x1"], ["1", "0"], [[-1, 1], [-1, 1]])
    tr = linearize(s)
    write_artifact(tmp_path / "a.json", s, tr)
    back = read_artifact(tmp_path / "a.json", s)
    X = sample_points(s, SamplingPlan(sample_count=16))
    assert np.allclose(tr.diffeo.evaluate(X, s.params), back.diffeo.evaluate(X, s.params), rtol=1e-13, atol=1e-15)
