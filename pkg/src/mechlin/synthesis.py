"""Construction of the linearizing transformation.

Given a linearizing output h, the configuration map is
phi = (L_e^{n-1} h, ..., L_e h, h) and the feedback is computed from
psi = L_e^{n-1} h so that the first transformed acceleration equals the new
input.  When the first pass leaves the univariate Christoffel symbol lambda
in the last coordinate, h is replaced by H(h) with H' = exp(int lambda).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import integrate

from .checker import SamplingPlan, sample_points
from .expr import (
    Const,
    Exp,
    Expr,
    NumFn,
    NumericFunction,
    Var,
    add,
    as_expr_like,
    contains_numfn,
    diff,
    evaluate,
    evaluate_many,
    integrate_univariate,
    is_identically_zero,
    mul,
    neg,
    power,
    simplify,
    sub,
    subs,
    variables,
)
from .expr.simplify import const
from .geometry import MechanicalSystem, VectorField, _cofactor, ad_sequence, evaluate_fields, lie_derivative_fn
from .oracles import controllability_matrix


class SynthesisError(Exception):
    """Base class; ``witness`` is a configuration point when one is known."""

    def __init__(self, message: str, witness=None):
        super().__init__(message)
        self.witness = None if witness is None else [float(v) for v in witness]


class AnnihilationFailed(SynthesisError):
    def __init__(self, message, j, witness=None):
        super().__init__(message, witness)
        self.j = j


class TransversalityFailed(SynthesisError):
    pass


class OutputNotFound(SynthesisError):
    pass


class SingularJacobian(SynthesisError):
    pass


class DecouplingSingular(SynthesisError):
    pass


class ResidualTooLarge(SynthesisError):
    def __init__(self, message, obj, witness=None, residual=float("nan")):
        super().__init__(message, witness)
        self.obj = obj
        self.residual = residual


class Uncontrollable(SynthesisError):
    pass


class LambdaNotUnivariate(SynthesisError):
    pass


class FitFailed(SynthesisError):
    def __init__(self, message, fallback):
        super().__init__(message)
        self.fallback = fallback


@dataclass
class LinearizingOutput:
    h: Expr
    residuals: list
    margin: float


@dataclass
class MechanicalDiffeo:
    phi: list
    jacobian: list
    hessians: list

    @property
    def n(self):
        return len(self.phi)

    def evaluate(self, points, params) -> np.ndarray:
        X = np.atleast_2d(np.asarray(points, dtype=float))
        return np.column_stack(evaluate_many(self.phi, X, params))

    def jacobian_at(self, points, params) -> np.ndarray:
        X = np.atleast_2d(np.asarray(points, dtype=float))
        n = self.n
        flat = [c for row in self.jacobian for c in row]
        vals = evaluate_many(flat, X, params)
        return np.stack(vals, axis=1).reshape(X.shape[0], n, n)

    def hessian_at(self, points, params) -> np.ndarray:
        X = np.atleast_2d(np.asarray(points, dtype=float))
        n = self.n
        flat = [c for H in self.hessians for row in H for c in row]
        vals = evaluate_many(flat, X, params)
        return np.stack(vals, axis=1).reshape(X.shape[0], n, n, n)

    def lift(self, x, y, params):
        """Tangent lift: (phi(x), Dphi(x) y) for rows of x and y."""
        x = np.atleast_2d(x)
        y = np.atleast_2d(y)
        J = self.jacobian_at(x, params)
        return self.evaluate(x, params), np.einsum("pij,pj->pi", J, y)


@dataclass
class MechanicalFeedback:
    alpha: Expr
    beta: Expr
    gamma: list

    def exprs(self) -> list:
        n = len(self.gamma)
        return [self.alpha, self.beta] + [self.gamma[j][k] for j in range(n) for k in range(n)]

    def values(self, points, params):
        X = np.atleast_2d(np.asarray(points, dtype=float))
        n = len(self.gamma)
        vals = evaluate_many(self.exprs(), X, params)
        G = np.stack(vals[2:], axis=1).reshape(X.shape[0], n, n)
        return vals[0], vals[1], G

    def control(self, x, y, utilde, params):
        """u = gamma_jk y^j y^k + alpha + beta utilde for rows of x, y."""
        a, b, G = self.values(x, params)
        y = np.atleast_2d(y)
        return np.einsum("pjk,pj,pk->p", G, y, y) + a + b * np.asarray(utilde, dtype=float)


@dataclass
class LinearModel:
    E: np.ndarray
    b: np.ndarray
    residual: float
    offset: np.ndarray
    shift: np.ndarray
    gamma_residual: float = 0.0

    def controllability_rank(self, tol: float = 1e-8) -> int:
        from .checker import numerical_rank

        return numerical_rank(controllability_matrix(self.E, self.b).T, tol)

    def controllability_indices(self, tol: float = 1e-8) -> list:
        """Controllability indices; a single input gives one chain of length rank."""
        return [self.controllability_rank(tol)]


@dataclass
class LambdaCorrection:
    lam: Expr
    h0: Expr
    H: Expr
    numeric: bool


@dataclass
class Transformation:
    output: LinearizingOutput
    diffeo: MechanicalDiffeo
    feedback: MechanicalFeedback
    model: LinearModel
    correction: Optional[LambdaCorrection] = None
    notes: list = field(default_factory=list)


# linearizing output

def _grad_norms(f: Expr, n: int, X, params) -> np.ndarray:
    grads = evaluate_many([diff(f, i) for i in range(1, n + 1)], X, params)
    return np.linalg.norm(np.column_stack(grads), axis=1)


def verify_output(sys: MechanicalSystem, h, plan: Optional[SamplingPlan] = None) -> LinearizingOutput:
    """Check L_{ad^j g} h = 0 for j <= n-2 and L_{ad^{n-1} g} h != 0 on samples.

    Residuals are |L_{ad^j g} h| / max(1, |dh| |ad^j g|).
    """
    plan = plan or SamplingPlan()
    n = sys.n
    h = simplify(as_expr_like(h))
    bad = [v for v in variables(h) if v > n]
    if bad:
        raise ValueError(f"h references x{bad[0]} beyond n={n}")
    X = sample_points(sys, plan)
    ads = ad_sequence(sys, n - 1)
    dh = _grad_norms(h, n, X, sys.params)
    fields = evaluate_fields(ads, X, sys.params)
    residuals = []
    for j in range(n):
        L = evaluate(lie_derivative_fn(h, ads[j]), X, sys.params)
        r = np.abs(L) / np.maximum(1.0, dh * np.linalg.norm(fields[:, j, :], axis=1))
        if j < n - 1:
            worst = int(np.argmax(r))
            if not np.isfinite(r[worst]) or r[worst] > plan.membership_tol:
                raise AnnihilationFailed(
                    f"L_(ad^{j} g) h does not vanish (relative residual {r[worst]:.3g})", j, X[worst]
                )
            residuals.append(float(r[worst]))
        else:
            worst = int(np.argmin(r))
            if not r[worst] > plan.rank_tol:
                raise TransversalityFailed(
                    f"L_(ad^{n - 1} g) h vanishes (relative value {r[worst]:.3g})", X[worst]
                )
            margin = float(np.min(np.abs(L)))
    return LinearizingOutput(h, residuals, margin)


def annihilator(sys: MechanicalSystem) -> list:
    """Cofactor one-form omega with omega(ad^j g) = 0 for j <= n-2."""
    n = sys.n
    gens = ad_sequence(sys, n - 2)
    # square matrix [w | ad^0 g | ... | ad^{n-2} g]; omega_i is the cofactor of entry (i, 0)
    cols = [[None] + [gens[c][r] for c in range(n - 1)] for r in range(n)]
    return [simplify(_cofactor(cols, r, 0)) for r in range(n)]


def _numerically_free_of(f: Expr, others, sys, box) -> bool:
    return all(is_identically_zero(diff(f, j), box=box, bindings=sys.params).is_zero for j in others)


def find_output(sys: MechanicalSystem, plan: Optional[SamplingPlan] = None) -> LinearizingOutput:
    """Search for h with dh proportional to the annihilator of E^{n-2}.

    Tries, for each choice of normalizing component: (a) constant ratios give
    a linear h; (b) ratios each depending on their own coordinate only are
    integrated one by one.  Raises OutputNotFound otherwise.
    """
    plan = plan or SamplingPlan()
    n = sys.n
    omega = annihilator(sys)
    box = sys.domain
    tried = []
    for k in range(n, 0, -1):
        wk = omega[k - 1]
        if is_identically_zero(wk, box=box, bindings=sys.params).is_zero:
            continue
        ratios = [simplify(mul(omega[i], power(wk, -1))) for i in range(n)]
        # (a) constant up to a common factor
        if all(_numerically_free_of(r, range(1, n + 1), sys, box) for r in ratios):
            coeffs = [r if not variables(r) else const(float(evaluate(r, sys.domain.mean(axis=1), sys.params)))
                      for r in ratios]
            h = add(*[mul(c, Var(i + 1)) for i, c in enumerate(coeffs)])
            tried.append("linear")
        # (b) separable
        elif all(_numerically_free_of(r, [j for j in range(1, n + 1) if j != i + 1], sys, box)
                 for i, r in enumerate(ratios)):
            parts = [integrate_univariate(r, i + 1, box=box, bindings=sys.params) for i, r in enumerate(ratios)]
            if any(p is None for p in parts):
                tried.append(f"separable (normalized by omega_{k}) but not integrable in closed form")
                continue
            h = add(*parts)
            tried.append("separable")
        else:
            continue
        try:
            return verify_output(sys, h, plan)
        except (AnnihilationFailed, TransversalityFailed):
            continue
    raise OutputNotFound(
        "no linearizing output found by the linear or separable heuristics; supply h explicitly"
        + (f" (tried: {', '.join(tried)})" if tried else "")
    )


# diffeomorphism and feedback

def diffeo_from_phi(phi) -> MechanicalDiffeo:
    """Attach the symbolic Jacobian and Hessians to the components phi."""
    phi = [simplify(as_expr_like(p)) for p in phi]
    n = len(phi)
    J = [[diff(p, j) for j in range(1, n + 1)] for p in phi]
    H = [[[diff(J[a][j], k) for k in range(1, n + 1)] for j in range(n)] for a in range(n)]
    return MechanicalDiffeo(phi, J, H)


def build_diffeo(sys: MechanicalSystem, h, plan: Optional[SamplingPlan] = None) -> MechanicalDiffeo:
    """phi = (L_e^{n-1} h, ..., L_e h, h) with symbolic Jacobian and Hessians."""
    plan = plan or SamplingPlan()
    n = sys.n
    h = simplify(as_expr_like(h))
    chain = [h]
    for _ in range(n - 1):
        chain.append(lie_derivative_fn(chain[-1], sys.e))
    diffeo = diffeo_from_phi(chain[::-1])
    X = sample_points(sys, plan)
    s = np.linalg.svd(diffeo.jacobian_at(X, sys.params), compute_uv=False)
    ratio = np.where(s[:, 0] > 0, s[:, -1] / np.where(s[:, 0] > 0, s[:, 0], 1.0), 0.0)
    worst = int(np.argmin(ratio))
    if not ratio[worst] > plan.rank_tol:
        raise SingularJacobian(f"Dphi is singular (sigma ratio {ratio[worst]:.3g})", X[worst])
    return diffeo


def build_feedback(sys: MechanicalSystem, diffeo: MechanicalDiffeo, plan: Optional[SamplingPlan] = None) -> MechanicalFeedback:
    """Feedback that turns the first transformed acceleration into the new input.

    With psi = L_e^{n-1} h: beta = 1 / L_g psi, alpha = -beta L_e psi,
    gamma_jk = -beta (d^2 psi / dx^j dx^k - d psi / dx^i Gamma^i_jk).
    """
    plan = plan or SamplingPlan()
    n = sys.n
    psi = diffeo.phi[0]
    Lg = lie_derivative_fn(psi, sys.g)
    X = sample_points(sys, plan)
    vals = np.abs(evaluate(Lg, X, sys.params))
    scale = max(1.0, float(np.median(vals)))
    worst = int(np.argmin(vals))
    if not vals[worst] > 1e-12 * scale:
        raise DecouplingSingular("L_g L_e^{n-1} h vanishes", X[worst])
    beta = simplify(power(Lg, -1))
    alpha = neg(mul(beta, lie_derivative_fn(psi, sys.e)))
    dpsi = [diff(psi, i) for i in range(1, n + 1)]
    gamma = [[None] * n for _ in range(n)]
    for j in range(n):
        for k in range(j, n):
            conn = add(*[mul(dpsi[i - 1], sys.Gamma(i, j + 1, k + 1)) for i in range(1, n + 1)])
            val = neg(mul(beta, sub(diff(dpsi[j], k + 1), conn)))
            gamma[j][k] = gamma[k][j] = val
    return MechanicalFeedback(alpha, beta, gamma)


def _inv_batch(J, X, plan):
    s = np.linalg.svd(J, compute_uv=False)
    ratio = np.where(s[:, 0] > 0, s[:, -1] / np.where(s[:, 0] > 0, s[:, 0], 1.0), 0.0)
    bad = np.flatnonzero(~(ratio > plan.rank_tol))
    if bad.size:
        raise SingularJacobian("Dphi is singular", X[bad[0]])
    return np.linalg.inv(J)


def transform_at(sys: MechanicalSystem, diffeo: MechanicalDiffeo, points, plan: Optional[SamplingPlan] = None,
                 feedback: Optional[MechanicalFeedback] = None):
    """Numeric pushforward of (Gamma, e, g) at the image of each point.

    Gamma~^a_bc = (J^a_i Gamma^i_jk - H^a_jk) Jinv^j_b Jinv^k_c, e~ = J e, g~ = J g.
    With ``feedback`` the closed loop (Gamma - g gamma, e + g alpha, g beta) is
    transformed instead.  Returns arrays (m, n, n, n), (m, n), (m, n) for an
    array of points, or single-point arrays for one point.
    """
    plan = plan or SamplingPlan()
    P = np.asarray(points, dtype=float)
    single = P.ndim == 1
    X = np.atleast_2d(P)
    G, e, g, J, H = _closed_loop_values(sys, diffeo, X, feedback)
    Jinv = _inv_batch(J, X, plan)
    Gt = np.einsum("pai,pijk,pjb,pkc->pabc", J, G, Jinv, Jinv) - np.einsum("pajk,pjb,pkc->pabc", H, Jinv, Jinv)
    et = np.einsum("pai,pi->pa", J, e)
    gt = np.einsum("pai,pi->pa", J, g)
    if single:
        return Gt[0], et[0], gt[0]
    return Gt, et, gt


def _closed_loop_values(sys, diffeo, X, feedback):
    G = sys.gamma_values(X)
    e = evaluate_fields([sys.e], X, sys.params)[:, 0, :]
    g = evaluate_fields([sys.g], X, sys.params)[:, 0, :]
    if feedback is not None:
        a, b, gam = feedback.values(X, sys.params)
        G = G - np.einsum("pi,pjk->pijk", g, gam)
        e = e + g * a[:, None]
        g = g * b[:, None]
    return G, e, g, diffeo.jacobian_at(X, sys.params), diffeo.hessian_at(X, sys.params)


def _gamma_scale(sys, diffeo, X, feedback, Jinv):
    """Size of the terms that must cancel in Gamma~, per entry."""
    G, e, g, J, H = _closed_loop_values(sys, diffeo, X, feedback)
    Ga = np.abs(sys.gamma_values(X))
    if feedback is not None:
        _, _, gam = feedback.values(X, sys.params)
        g0 = evaluate_fields([sys.g], X, sys.params)[:, 0, :]
        Ga = Ga + np.einsum("pi,pjk->pijk", np.abs(g0), np.abs(gam))
    A = np.abs(Jinv)
    t1 = np.einsum("pai,pijk,pjb,pkc->pabc", np.abs(J), Ga, A, A)
    t2 = np.einsum("pajk,pjb,pkc->pabc", np.abs(H), A, A)
    return np.maximum(1.0, t1 + t2)


def verify_linearization(sys: MechanicalSystem, diffeo: MechanicalDiffeo, feedback: MechanicalFeedback,
                         plan: Optional[SamplingPlan] = None) -> LinearModel:
    """Check that the closed loop in the new coordinates is a controllable linear mechanical system.

    A constant offset in e~ = E x~ + c is absorbed by shifting the new
    coordinates; the shift is reported and should be added to phi.
    """
    plan = plan or SamplingPlan()
    tol = plan.membership_tol
    X = sample_points(sys, plan)
    Gt, et, gt = transform_at(sys, diffeo, X, plan, feedback)
    J = diffeo.jacobian_at(X, sys.params)
    Jinv = np.linalg.inv(J)
    scale = _gamma_scale(sys, diffeo, X, feedback, Jinv)
    rel = np.abs(Gt) / scale
    worst = np.unravel_index(int(np.argmax(rel)), rel.shape)
    gamma_res = float(rel[worst])
    if not gamma_res <= tol:
        a, b, c = worst[1:]
        raise ResidualTooLarge(
            f"transformed Christoffel symbol Gamma~^{a + 1}_{b + 1}{c + 1} does not vanish "
            f"(relative residual {gamma_res:.3g})",
            obj=("Gamma", a + 1, b + 1, c + 1),
            witness=X[worst[0]],
            residual=gamma_res,
        )
    xt = diffeo.evaluate(X, sys.params)
    A = np.column_stack([xt, np.ones(len(xt))])
    coef, *_ = np.linalg.lstsq(A, et, rcond=None)
    E = coef[:-1].T
    c = coef[-1]
    fit = et - A @ coef
    e_scale = max(1.0, float(np.max(np.abs(et))))
    e_res = float(np.max(np.abs(fit))) / e_scale
    if not e_res <= tol:
        p = int(np.argmax(np.max(np.abs(fit), axis=1)))
        raise ResidualTooLarge(f"e~ is not affine in x~ (relative residual {e_res:.3g})", obj="e", witness=X[p],
                               residual=e_res)
    b = gt.mean(axis=0)
    g_dev = float(np.max(np.abs(gt - b))) / max(1.0, float(np.max(np.abs(b))))
    if not g_dev <= tol:
        p = int(np.argmax(np.max(np.abs(gt - b), axis=1)))
        raise ResidualTooLarge(f"g~ is not constant (relative deviation {g_dev:.3g})", obj="g", witness=X[p],
                               residual=g_dev)
    # clean round-off in the fitted model
    E = np.where(np.abs(E) <= tol * max(1.0, np.max(np.abs(E))), 0.0, E)
    b = np.where(np.abs(b) <= tol * max(1.0, np.max(np.abs(b))), 0.0, b)
    shift = np.zeros(sys.n)
    if np.max(np.abs(c)) > tol * e_scale:
        shift, *_ = np.linalg.lstsq(E, c, rcond=None)
        if np.max(np.abs(E @ shift - c)) > tol * e_scale:
            raise ResidualTooLarge("constant part of e~ cannot be removed by a translation", obj="offset",
                                   residual=float(np.max(np.abs(E @ shift - c))))
    else:
        c = np.zeros(sys.n)
    model = LinearModel(E, b, e_res, c, shift, gamma_res)
    if model.controllability_rank(plan.rank_tol) < sys.n:
        raise Uncontrollable("the pair (E, b) is not controllable")
    return model


def shifted(diffeo: MechanicalDiffeo, shift) -> MechanicalDiffeo:
    if not np.any(shift):
        return diffeo
    phi = [add(p, const(float(s))) for p, s in zip(diffeo.phi, shift)]
    return MechanicalDiffeo(phi, diffeo.jacobian, diffeo.hessians)


# lambda correction

def extract_lambda(sys: MechanicalSystem, diffeo: MechanicalDiffeo, feedback: MechanicalFeedback,
                   plan: Optional[SamplingPlan] = None, degree: int = 4):
    """Fit Gamma~^n_nn of the closed loop as a polynomial in x~^n.

    Returns None when it vanishes, otherwise a polynomial expression in the
    dummy variable x1 (the argument s of lambda(s)).
    """
    plan = plan or SamplingPlan()
    n = sys.n
    X = sample_points(sys, plan)
    Gt, _, _ = transform_at(sys, diffeo, X, plan, feedback)
    J = diffeo.jacobian_at(X, sys.params)
    scale = _gamma_scale(sys, diffeo, X, feedback, np.linalg.inv(J))[:, n - 1, n - 1, n - 1]
    vals = Gt[:, n - 1, n - 1, n - 1]
    tol = plan.membership_tol
    if np.all(np.abs(vals) / scale <= tol):
        return None
    s = diffeo.evaluate(X, sys.params)[:, n - 1]
    vscale = max(1.0, float(np.max(np.abs(vals))))

    def fit(deg):
        V = np.vander(s, deg + 1, increasing=True)
        coef, *_ = np.linalg.lstsq(V, vals, rcond=None)
        return coef, float(np.max(np.abs(V @ coef - vals))) / vscale

    coef, res = fit(degree)
    if res <= 1e-8:
        return _poly_expr(coef, tol)
    hi_coef, hi_res = fit(12)
    if hi_res > 1e-6:
        raise LambdaNotUnivariate(
            f"Gamma~^{n}_{n}{n} is not a function of x~^{n} alone (fit residual {hi_res:.3g})"
        )
    raise FitFailed(f"degree-{degree} fit insufficient (residual {res:.3g})", _poly_expr(hi_coef, tol))


def _poly_expr(coef, tol) -> Expr:
    cmax = max(1.0, float(np.max(np.abs(coef))))
    s = Var(1)
    terms = [mul(const(float(c)), power(s, k)) for k, c in enumerate(coef) if abs(c) > tol * cmax]
    return add(*terms) if terms else const(0)


def _h_range(sys: MechanicalSystem, h0: Expr) -> tuple:
    from .sampling import sobol_points

    X = sobol_points(sys.domain, 1024, 7)
    corners = np.array(np.meshgrid(*sys.domain, indexing="ij")).reshape(sys.n, -1).T
    vals = evaluate(h0, np.vstack([X, corners]), sys.params)
    lo, hi = float(np.min(vals)), float(np.max(vals))
    pad = 0.25 * max(hi - lo, 1e-3)
    return min(lo - pad, -pad), max(hi + pad, pad)


def lambda_correct(h0, lam, sys: Optional[MechanicalSystem] = None, knots: int = 801, name: str = "H"):
    """h* = H(h0) with H' = Lambda = exp(int_0 lambda), H(0) = 0.

    ``lam`` is an expression in the dummy variable x1.  H is closed form when
    the antiderivatives are in the table, otherwise a cubic Hermite table over
    the range of h0 on the domain of ``sys``.
    """
    h0 = simplify(as_expr_like(h0))
    lam = simplify(as_expr_like(lam))
    if isinstance(lam, Const) and lam.value == 0:
        return h0, LambdaCorrection(lam, h0, simplify(Var(1)), False)
    if variables(lam) - {1}:
        raise ValueError("lambda must be univariate in the dummy variable x1")
    inner = integrate_univariate(lam, 1)
    if inner is None:
        raise ValueError("lambda must be integrable in closed form (a polynomial)")
    Lam = simplify(Exp(inner))
    H = integrate_univariate(Lam, 1)
    if H is not None:
        return subs(H, {1: h0}), LambdaCorrection(lam, h0, H, False)
    if sys is None:
        raise ValueError("a system (for the range of h0) is needed to tabulate H")
    lo, hi = _h_range(sys, h0)
    grid = np.unique(np.concatenate([np.linspace(lo, hi, knots), [0.0]]))
    f = lambda t: float(evaluate(Lam, [t]))
    zero = int(np.searchsorted(grid, 0.0))
    steps = np.array([integrate.quad(f, a, b, epsabs=1e-14, epsrel=1e-13)[0] for a, b in zip(grid[:-1], grid[1:])])
    cum = np.concatenate([[0.0], np.cumsum(steps)])
    values = cum - cum[zero]
    fn = NumericFunction(name, grid, values, Lam)
    return simplify(NumFn(fn, h0)), LambdaCorrection(lam, h0, NumFn(fn, Var(1)), True)


# pipeline

def linearize(sys: MechanicalSystem, h=None, plan: Optional[SamplingPlan] = None) -> Transformation:
    """Full construction: output, diffeomorphism, feedback, verification, lambda pass if needed."""
    plan = plan or SamplingPlan()
    output = find_output(sys, plan) if h is None else verify_output(sys, h, plan)
    diffeo = build_diffeo(sys, output.h, plan)
    feedback = build_feedback(sys, diffeo, plan)
    notes = []
    correction = None
    try:
        model = verify_linearization(sys, diffeo, feedback, plan)
    except ResidualTooLarge as exc:
        if not (isinstance(exc.obj, tuple) and exc.obj[0] == "Gamma"):
            raise
        try:
            lam = extract_lambda(sys, diffeo, feedback, plan)
        except FitFailed as fit_exc:
            lam = fit_exc.fallback
            notes.append(str(fit_exc))
        if lam is None:
            raise
        hstar, correction = lambda_correct(output.h, lam, sys)
        notes.append(f"lambda correction applied with lambda(s) = {lam} (s = x1 here)")
        output = LinearizingOutput(hstar, output.residuals, output.margin)
        diffeo = build_diffeo(sys, hstar, plan)
        feedback = build_feedback(sys, diffeo, plan)
        model = verify_linearization(sys, diffeo, feedback, plan)
    diffeo = shifted(diffeo, model.shift)
    return Transformation(output, diffeo, feedback, model, correction, notes)
