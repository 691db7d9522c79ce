import numpy as np
import pytest

from gen import rand_field, rand_normal_form, rand_system
from mechlin.expr import evaluate, parse, simplify
from mechlin.geometry import (
    MechanicalSystem,
    VectorField,
    ad_sequence,
    apply_feedback,
    change_coordinates,
    covariant_derivative,
    evaluate_field,
    evaluate_fields,
    lie_bracket,
    lie_derivative_fn,
    linear_change,
    second_covariant_derivative,
    second_covariant_derivative_fn,
)
from mechlin.io import load_system
from mechlin.oracles import lemma2_closed_form, lms_ad_sequence


def _close(a, b, tol=1e-9):
    return np.max(np.abs(np.asarray(a) - np.asarray(b))) < tol


def test_vector_field_basics():
    X = VectorField(["x1", "0"])
    Y = VectorField.basis(2, 2)
    assert (X + Y) == VectorField(["x1", "1"])
    assert (X - X).is_zero()
    assert X.scale("2") == VectorField(["2*x1", "0"])
    with pytest.raises(AttributeError):
        X.components = ()


def test_system_validation():
    with pytest.raises(ValueError):
        MechanicalSystem(1, {}, ["0"], ["1"])
    with pytest.raises(ValueError):
        MechanicalSystem(2, {(3, 1, 1): "1"}, ["0", "0"], ["1", "0"])
    s = MechanicalSystem(2, {(1, 2, 1): "x1", (1, 1, 2): "x2"}, ["0", "x1"], ["1", "0"])
    assert simplify(s.Gamma(1, 1, 2)) == simplify(parse("x1 + x2"))
    assert s.Gamma(1, 2, 1) == s.Gamma(1, 1, 2)


def test_bracket_and_covariant_derivative_by_hand():
    s = MechanicalSystem(2, {(1, 1, 1): "x2"}, ["x2", "0"], ["0", "1"], [[-1, 1], [-1, 1]])
    assert lie_bracket(s.e, s.g) == VectorField(["-1", "0"])
    # nabla_g g = Dg g + Gamma(g, g) = 0 since only Gamma^1_11 is non-zero
    assert covariant_derivative(s, s.g, s.g).is_zero()
    X = VectorField(["1", "0"])
    assert covariant_derivative(s, X, X) == VectorField(["x2", "0"])


def test_example1_mf5_difference():
    s = load_system("example1")
    g = s.g
    adg = ad_sequence(s, 1)[1]
    assert adg == VectorField(["-1", "0"])
    d = second_covariant_derivative(s, g, adg, adg) - second_covariant_derivative(s, adg, g, adg)
    assert d == VectorField(["1", "0"])


def test_iwp_closed_forms():
    s = load_system("iwp")
    m0, md = s.params["m0"], s.params["md"]
    X = np.array([[0.1, 0.0], [0.7, 3.0], [-0.9, -20.0]])
    c, sn = np.cos(X[:, 0]), np.sin(X[:, 0])
    g, adg = ad_sequence(s, 1)
    one = np.array([1.0, -1.0])
    assert _close(evaluate_field(adg, X, s.params), (m0 / md**2 * c)[:, None] * one)
    nab = evaluate_field(covariant_derivative(s, adg, adg), X, s.params)
    assert _close(nab, (-(m0**2) / md**4 * sn * c)[:, None] * one)
    # the MF5' field vanishes identically
    d = second_covariant_derivative(s, g, adg, adg) - second_covariant_derivative(s, adg, g, adg)
    assert _close(evaluate_field(d, X, s.params), 0.0, 1e-12)


def test_tora3_mf4_field():
    s = load_system("tora3")
    g = s.g
    X = np.random.default_rng(0).uniform(-0.5, 0.5, (20, 3))
    v = evaluate_field(second_covariant_derivative(s, g, g, s.e), X, s.params)
    # only the first two components are non-zero and both are proportional to sin x3
    assert np.max(np.abs(v[:, 2])) < 1e-12
    ratio = v[:, :2] / np.sin(X[:, 2])[:, None]
    assert np.allclose(ratio, ratio[0], rtol=1e-9)


def test_ad_sequence_linear_system():
    E = np.array([[0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [-1.0, 0.5, 0.0]])
    b = np.array([0.0, 0.0, 1.0])
    e = [" + ".join(f"({E[i, j]})*x{j + 1}" for j in range(3)) for i in range(3)]
    s = MechanicalSystem(3, {}, e, [str(v) for v in b])
    ad = ad_sequence(s, 2)
    pts = np.zeros((1, 3))
    for got, want in zip(ad, lms_ad_sequence(E, b)):
        assert _close(evaluate_field(got, pts), want[None, :])


@pytest.mark.parametrize("seed", range(6))
def test_jacobi_identity(seed):
    rng = np.random.default_rng(seed)
    X, Y, Z = (rand_field(rng, 3) for _ in range(3))
    total = (lie_bracket(X, lie_bracket(Y, Z)) + lie_bracket(Y, lie_bracket(Z, X))
             + lie_bracket(Z, lie_bracket(X, Y)))
    pts = rng.uniform(-1, 1, (10, 3))
    assert _close(evaluate_field(total, pts), 0.0, 1e-9)


@pytest.mark.parametrize("seed", range(10))
def test_lemma1_properties(seed):
    rng = np.random.default_rng(100 + seed)
    n = 3
    s = rand_system(rng, n)
    X, Y, Z, W = (rand_field(rng, n) for _ in range(4))
    a = parse("1.5 + 0.5*sin(x1*x2)")
    b = parse("x3^2 - x1")
    pts = rng.uniform(-1, 1, (10, n))
    ev = lambda F: evaluate_field(F, pts, s.params)
    nab2 = lambda P, Q, R: ev(second_covariant_derivative(s, P, Q, R))
    base = nab2(X, Y, Z)
    av = evaluate(a, pts)[:, None]
    bv = evaluate(b, pts)[:, None]
    # (i) function-linear in X and Y
    assert _close(nab2(X.scale(a), Y, Z), av * base)
    assert _close(nab2(X, Y.scale(b), Z), bv * base)
    assert _close(nab2(X + W, Y, Z), base + nab2(W, Y, Z))
    # (ii) real-linear in Z
    assert _close(nab2(X, Y, Z.scale(2.5) + W.scale(-1)), 2.5 * base - nab2(X, Y, W))
    # (iii) product rule
    lhs = nab2(X, Y, Z.scale(b))
    d2b = evaluate(second_covariant_derivative_fn(s, X, Y, b), pts)[:, None]
    LXb = evaluate(lie_derivative_fn(b, X), pts)[:, None]
    LYb = evaluate(lie_derivative_fn(b, Y), pts)[:, None]
    rhs = (bv * base + LXb * ev(covariant_derivative(s, Y, Z)) + LYb * ev(covariant_derivative(s, X, Z))
           + d2b * ev(Z))
    assert _close(lhs, rhs, 1e-8)


@pytest.mark.parametrize("seed", range(12))
def test_lemma2_closed_form(seed):
    rng = np.random.default_rng(200 + seed)
    n = int(rng.choice([3, 4, 5]))
    s = rand_normal_form(rng, n)
    ad = ad_sequence(s, n - 1)
    pts = rng.uniform(-1, 1, (10, n))
    for k in range(1, n + 1):
        j = int(rng.integers(1, n + 1))
        generic = evaluate_field(second_covariant_derivative(s, ad[k - 1], ad[j - 1], s.e), pts)
        assert _close(generic, lemma2_closed_form(s, k, j, pts))


def test_feedback_law():
    s = load_system("example1")
    c = apply_feedback(s, "x1", "2", [["x2", "0"], ["0", "1"]])
    assert simplify(c.Gamma(2, 1, 1)) == simplify(parse("-x2"))
    assert simplify(c.Gamma(1, 1, 1)) == simplify(parse("x2"))
    assert c.e == VectorField(["x2", "x1"])
    assert c.g == VectorField(["0", "2"])


def test_change_of_coordinates_maps_trajectory_equations():
    s = load_system("example1")
    # x = psi(z) with a nonlinear psi; check that psi_* of the new vector field is the old one
    psi = ["x1 + 0.1*x2^2", "x2"]
    new = change_coordinates(s, psi, s.domain)
    z = np.array([[0.2, 0.3], [-0.4, 0.5]])
    x = np.column_stack([z[:, 0] + 0.1 * z[:, 1] ** 2, z[:, 1]])
    J = np.zeros((2, 2, 2))
    J[:, 0, 0] = 1.0
    J[:, 0, 1] = 0.2 * z[:, 1]
    J[:, 1, 1] = 1.0
    for old_f, new_f in ((s.e, new.e), (s.g, new.g)):
        pushed = np.einsum("pij,pj->pi", J, evaluate_field(new_f, z))
        assert _close(pushed, evaluate_field(old_f, x))
    # accelerations: for a velocity w in z, xdd = J zdd + H(w, w)
    w = np.array([0.7, -0.3])
    zdd = -np.einsum("pijk,j,k->pi", new.gamma_values(z), w, w)
    v = np.einsum("pij,j->pi", J, w)
    xdd = -np.einsum("pijk,pj,pk->pi", s.gamma_values(x), v, v)
    H = np.zeros(2)
    H[0] = 0.2 * w[1] ** 2
    assert _close(np.einsum("pij,pj->pi", J, zdd) + H, xdd)


def test_linear_change_round_trip():
    s = load_system("tora3")
    A = np.array([[1.0, 0.2, 0.0], [0.0, 1.0, 0.1], [0.3, 0.0, 1.0]])
    new, to_new = linear_change(s, A, [0.01, 0.0, -0.02])
    x = np.array([[0.1, -0.2, 0.4]])
    z = to_new(x)
    assert _close(A @ z[0] + [0.01, 0.0, -0.02], x[0])
    assert _close(A @ evaluate_field(new.g, z, s.params)[0], evaluate_field(s.g, x, s.params)[0])
    assert np.all(new.domain[:, 0] < z[0]) and np.all(z[0] < new.domain[:, 1])


def test_evaluate_fields_shape():
    s = load_system("tora3")
    F = evaluate_fields(ad_sequence(s, 2), np.zeros((4, 3)), s.params)
    assert F.shape == (4, 3, 3)
