"""Differentiation, substitution and table antidifferentiation."""

from __future__ import annotations

from fractions import Fraction
from typing import Mapping, Optional

import numpy as np

from .evaluate import evaluate
from .nodes import Add, Const, Cos, Exp, Expr, Func, IntPow, Ln, Mul, NumFn, Param, Sin, Var, variables
from .simplify import canon_add, canon_func, canon_mul, canon_pow, const, simplify

_diff_cache: dict = {}


def diff(f: Expr, i: int) -> Expr:
    """Exact partial derivative of ``f`` with respect to ``x<i>`` (i >= 1)."""
    if i < 1:
        raise ValueError("variable indices start at 1")
    f = simplify(f)
    if i not in variables(f):
        return const(0)
    key = (f, i)
    hit = _diff_cache.get(key)
    if hit is not None:
        return hit
    out = _d(f, i)
    if len(_diff_cache) > 200_000:
        _diff_cache.clear()
    _diff_cache[key] = out
    return out


def _d(f: Expr, i: int) -> Expr:
    if isinstance(f, Var):
        return const(1 if f.index == i else 0)
    if isinstance(f, (Const, Param)):
        return const(0)
    if isinstance(f, Add):
        return canon_add([diff(t, i) for t in f.terms if i in variables(t)])
    if isinstance(f, Mul):
        terms = []
        fs = f.factors
        for j, fj in enumerate(fs):
            if i not in variables(fj):
                continue
            terms.append(canon_mul(list(fs[:j]) + [diff(fj, i)] + list(fs[j + 1:])))
        return canon_add(terms)
    if isinstance(f, IntPow):
        return canon_mul([const(f.exp), canon_pow(f.base, f.exp - 1), diff(f.base, i)])
    if isinstance(f, Sin):
        return canon_mul([canon_func(Cos, f.arg), diff(f.arg, i)])
    if isinstance(f, Cos):
        return canon_mul([const(-1), canon_func(Sin, f.arg), diff(f.arg, i)])
    if isinstance(f, Exp):
        return canon_mul([f, diff(f.arg, i)])
    if isinstance(f, Ln):
        return canon_mul([diff(f.arg, i), canon_pow(f.arg, -1)])
    if isinstance(f, NumFn):
        return canon_mul([subs(f.fn.derivative, {1: f.arg}), diff(f.arg, i)])
    raise TypeError(f"cannot differentiate {f!r}")


def gradient(f: Expr, n: int) -> tuple:
    return tuple(diff(f, i) for i in range(1, n + 1))


def subs(f: Expr, mapping: Mapping[int, Expr]) -> Expr:
    """Replace variables ``x<i>`` by expressions; the result is canonical."""
    mapping = {int(k): simplify(v) for k, v in mapping.items()}
    memo: dict = {}

    def go(e):
        hit = memo.get(id(e))
        if hit is not None:
            return hit[1]
        if not (variables(e) & mapping.keys()):
            out = simplify(e)
        elif isinstance(e, Var):
            out = mapping[e.index]
        elif isinstance(e, Add):
            out = canon_add([go(t) for t in e.terms])
        elif isinstance(e, Mul):
            out = canon_mul([go(t) for t in e.factors])
        elif isinstance(e, IntPow):
            out = canon_pow(go(e.base), e.exp)
        elif isinstance(e, Func):
            out = canon_func(type(e), go(e.arg))
        elif isinstance(e, NumFn):
            from .simplify import _mark

            out = _mark(NumFn(e.fn, go(e.arg)))
        else:
            out = simplify(type(e)(*[go(c) for c in e.children]))
        memo[id(e)] = (e, out)
        return out

    return go(simplify(f))


def is_constant(f: Expr) -> bool:
    return not variables(simplify(f))


def _affine_in(arg: Expr, i: int):
    """Return (a, b) with arg == a*x_i + b and a, b free of variables, else None."""
    a = diff(arg, i)
    if variables(a):
        return None
    b = simplify(arg - a * Var(i))
    if variables(b):
        return None
    return a, b


def _integrate_core(core: Expr, i: int) -> Optional[Expr]:
    x = Var(i)
    if isinstance(core, Var) and core.index == i:
        return canon_mul([const(Fraction(1, 2)), canon_pow(simplify(x), 2)])
    if isinstance(core, IntPow) and isinstance(core.base, Var) and core.base.index == i and core.exp > 0:
        k = core.exp + 1
        return canon_mul([const(Fraction(1, k)), canon_pow(simplify(x), k)])
    if isinstance(core, (Sin, Cos, Exp)):
        ab = _affine_in(core.arg, i)
        if ab is None:
            return None
        a, b = ab
        if isinstance(a, Const) and a.value == 0:
            return None
        inv_a = canon_pow(a, -1)
        if isinstance(core, Sin):
            anti = canon_add([canon_mul([const(-1), canon_func(Cos, core.arg)]), canon_func(Cos, b)])
        elif isinstance(core, Cos):
            anti = canon_add([canon_func(Sin, core.arg), canon_mul([const(-1), canon_func(Sin, b)])])
        else:
            anti = canon_add([core, canon_mul([const(-1), canon_func(Exp, b)])])
        return canon_mul([inv_a, anti])
    return None


def _integrate_term(term: Expr, i: int) -> Optional[Expr]:
    factors = term.factors if isinstance(term, Mul) else (term,)
    coeff = [f for f in factors if not variables(f)]
    dep = [f for f in factors if variables(f)]
    if not dep:
        return canon_mul(coeff + [simplify(Var(i))])
    if len(dep) != 1:
        return None
    core = _integrate_core(dep[0], i)
    if core is None:
        return None
    return canon_mul(coeff + [core])


def integrate_univariate(
    f: Expr,
    i: int,
    box=None,
    bindings: Optional[Mapping[str, float]] = None,
) -> Optional[Expr]:
    """Antiderivative F of ``f`` in ``x<i>`` with F = 0 where x<i> = 0, or None.

    Supported: polynomials in x<i>, sin/cos/exp of affine arguments, and
    linear combinations of those with variable-free coefficients.  ``f`` must
    depend on x<i> only; a genuine dependence on another variable raises
    ``ValueError``.
    """
    f = simplify(f)
    others = variables(f) - {i}
    if others:
        for j in sorted(others):
            if not is_identically_zero(diff(f, j), box=box, bindings=bindings).is_zero:
                raise ValueError(f"integrand depends on x{j}, not only on x{i}")
        # depends on x<i> only numerically, but not in a form the table recognizes
        return None
    terms = f.terms if isinstance(f, Add) else (f,)
    pieces = []
    for t in terms:
        piece = _integrate_term(t, i)
        if piece is None:
            return None
        pieces.append(piece)
    return canon_add(pieces)


class ZeroTest:
    __slots__ = ("is_zero", "path", "residual")

    def __init__(self, is_zero: bool, path: str, residual: float):
        self.is_zero = is_zero
        self.path = path
        self.residual = residual

    def __bool__(self):
        return self.is_zero

    def __repr__(self):
        return f"ZeroTest(is_zero={self.is_zero}, path={self.path!r}, residual={self.residual:.3g})"


ZERO_TOL = 1e-10
ZERO_SAMPLES = 64


def is_identically_zero(f: Expr, box=None, bindings=None, seed: int = 0) -> ZeroTest:
    """Decide whether ``f`` vanishes identically.

    Structural zero after simplification decides first; otherwise the
    maximum of |f| over 64 quasi-random points of ``box`` must stay below
    1e-10.  Unbound parameters get fixed pseudo-random values.
    """
    from ..sampling import sobol_points

    f = simplify(f)
    if isinstance(f, Const):
        zero = f.value == 0
        return ZeroTest(zero, "symbolic", 0.0 if zero else abs(float(f.value)))
    vs = variables(f)
    n = max(vs) if vs else 1
    if box is None:
        box = np.tile([-1.0, 1.0], (n, 1))
    box = np.asarray(box, dtype=float)
    if box.shape[0] < n:
        raise ValueError("sampling box has fewer axes than the expression has variables")
    values = dict(bindings or {})
    from .nodes import parameters

    missing = sorted(parameters(f) - values.keys())
    if missing:
        rng = np.random.default_rng(12345)
        for name in missing:
            values[name] = float(rng.uniform(0.5, 1.5))
    pts = sobol_points(box, ZERO_SAMPLES, seed)
    r = float(np.max(np.abs(evaluate(f, pts, values))))
    return ZeroTest(bool(r < ZERO_TOL), "sampled", r)
