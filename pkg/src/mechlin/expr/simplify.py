"""Canonical form.

The canonical form is a sum of products over atoms (variables, parameters,
function applications, and sums raised to negative powers).  Products of sums
are expanded, like terms and like bases are merged, constants are folded.
No trigonometric identities are applied.
"""

from __future__ import annotations

import math
from fractions import Fraction

from .nodes import (
    Add,
    Const,
    Cos,
    Div,
    Exp,
    Expr,
    Func,
    IntPow,
    Ln,
    Mul,
    Neg,
    NumFn,
    Param,
    Sin,
    Var,
    ONE,
    ZERO,
)

# products whose expansion would exceed this many terms stay factored
EXPAND_LIMIT = 4000


def _mark(e: Expr) -> Expr:
    object.__setattr__(e, "_canon", True)
    return e


def is_canonical(e: Expr) -> bool:
    return getattr(e, "_canon", False)


def sort_key(e: Expr):
    try:
        return e._skey
    except AttributeError:
        pass
    if isinstance(e, Const):
        k = (0, float(e.value))
    elif isinstance(e, Var):
        k = (1, e.index)
    elif isinstance(e, Param):
        k = (2, e.name)
    elif isinstance(e, Func):
        k = (3, e.name, sort_key(e.arg))
    elif isinstance(e, NumFn):
        k = (4, e.fn.name, sort_key(e.arg))
    elif isinstance(e, IntPow):
        k = (5, sort_key(e.base), e.exp)
    elif isinstance(e, Mul):
        k = (6, len(e.factors), tuple(sort_key(f) for f in e.factors))
    elif isinstance(e, Add):
        k = (7, len(e.terms), tuple(sort_key(t) for t in e.terms))
    else:
        k = (8, repr(e))
    object.__setattr__(e, "_skey", k)
    return k


def _num_key(e: Expr):
    # canonical ordering ignores the leading numeric coefficient of a term
    if isinstance(e, Mul) and isinstance(e.factors[0], Const):
        rest = e.factors[1:]
        return (6, len(rest), tuple(sort_key(f) for f in rest)) if len(rest) > 1 else sort_key(rest[0])
    return sort_key(e)


def const(v) -> Const:
    return _mark(Const(v))


def _is_zero_number(v) -> bool:
    return v == 0


def _num_pow(v, k: int):
    if isinstance(v, Fraction):
        return v ** k
    return float(v) ** k


def split_coeff(e: Expr):
    """Split a canonical term into (numeric coefficient, rest) with rest not a Const."""
    if isinstance(e, Mul) and isinstance(e.factors[0], Const):
        rest = e.factors[1:]
        if len(rest) == 1:
            return e.factors[0].value, rest[0]
        return e.factors[0].value, _mark(Mul(rest))
    return Fraction(1), e


def _with_coeff(c, rest: Expr) -> Expr:
    if c == 1:
        return rest
    if isinstance(rest, Mul):
        return _mark(Mul((const(c),) + rest.factors))
    return _mark(Mul((const(c), rest)))


def canon_add(terms) -> Expr:
    constant = Fraction(0)
    coeffs: dict = {}
    stack = list(terms)
    flat = []
    while stack:
        t = stack.pop()
        if isinstance(t, Add):
            stack.extend(t.terms)
        else:
            flat.append(t)
    for t in flat:
        if isinstance(t, Const):
            constant = constant + t.value
            continue
        c, rest = split_coeff(t)
        if rest in coeffs:
            coeffs[rest] = coeffs[rest] + c
        else:
            coeffs[rest] = c
    out = []
    for rest, c in coeffs.items():
        if _is_zero_number(c):
            continue
        out.append(_with_coeff(c, rest))
    out.sort(key=_num_key)
    if not _is_zero_number(constant):
        out.insert(0, const(constant))
    if not out:
        return const(0)
    if len(out) == 1:
        return out[0]
    return _mark(Add(tuple(out)))


def _leading_coeff(add: Add):
    for t in add.terms:
        if isinstance(t, Const):
            continue
        return split_coeff(t)[0]
    return Fraction(1)


def normalize_add_base(add: Add):
    """Write ``add`` as ``c * add'`` where the leading non-constant term of add' has coefficient 1."""
    c = _leading_coeff(add)
    if c == 1:
        return Fraction(1), add
    inv = (1 / c) if isinstance(c, Fraction) else 1.0 / c
    scaled = canon_add([canon_mul([const(inv), t]) for t in add.terms])
    return c, scaled


def _pow_atom(base: Expr, k: int) -> Expr:
    if k == 1:
        return base
    return _mark(IntPow(base, k))


def canon_mul(factors) -> Expr:
    coeff = Fraction(1)
    powers: dict = {}
    stack = list(factors)
    while stack:
        f = stack.pop()
        if isinstance(f, Mul):
            stack.extend(f.factors)
            continue
        if isinstance(f, Const):
            coeff = coeff * f.value
            continue
        if isinstance(f, IntPow):
            base, k = f.base, f.exp
        else:
            base, k = f, 1
        powers[base] = powers.get(base, 0) + k
    if _is_zero_number(coeff):
        return const(0)
    merged: dict = {}
    for base, k in powers.items():
        if k == 0:
            continue
        if isinstance(base, Add):
            c, base = normalize_add_base(base)
            if c != 1:
                coeff = coeff * _num_pow(c, k)
        merged[base] = merged.get(base, 0) + k
    atoms = []
    sums = []
    for base, k in merged.items():
        if k == 0:
            continue
        if isinstance(base, Add) and k > 0:
            sums.append((base, k))
        else:
            atoms.append(_pow_atom(base, k))
    if sums:
        expanded = _expand(coeff, atoms, sums)
        if expanded is not None:
            return expanded
        atoms.extend(_pow_atom(b, k) for b, k in sums)
    atoms.sort(key=sort_key)
    if not atoms:
        return const(coeff)
    if len(atoms) == 1 and coeff == 1:
        return atoms[0]
    if coeff == 1:
        return _mark(Mul(tuple(atoms)))
    return _mark(Mul((const(coeff),) + tuple(atoms)))


def _expand(coeff, atoms, sums):
    size = 1
    for b, k in sums:
        size *= len(b.terms) ** k
        if size > EXPAND_LIMIT:
            return None
    partial = [[const(coeff)] + atoms]
    for b, k in sums:
        for _ in range(k):
            partial = [p + [t] for p in partial for t in b.terms]
    return canon_add([canon_mul(p) for p in partial])


def canon_pow(base: Expr, k: int) -> Expr:
    if k == 0:
        return const(1)
    if k == 1:
        return base
    if isinstance(base, Const):
        if base.value == 0 and k < 0:
            return _mark(IntPow(base, k))
        return const(_num_pow(base.value, k))
    if isinstance(base, (Mul, IntPow, Add)):
        return canon_mul([_mark(IntPow(base, k))] if isinstance(base, Add) else _distribute_pow(base, k))
    return _mark(IntPow(base, k))


def _distribute_pow(base: Expr, k: int):
    if isinstance(base, IntPow):
        return [canon_pow(base.base, base.exp * k)]
    return [canon_pow(f, k) for f in base.factors]


def _negate(e: Expr) -> Expr:
    return canon_mul([const(-1), e])


def _is_negative(e: Expr) -> bool:
    if isinstance(e, Const):
        return e.value < 0
    if isinstance(e, Mul):
        return isinstance(e.factors[0], Const) and e.factors[0].value < 0
    if isinstance(e, Add):
        return _leading_coeff(e) < 0
    return False


def canon_func(cls, arg: Expr) -> Expr:
    if isinstance(arg, Const):
        v = arg.value
        if cls is Sin and v == 0:
            return const(0)
        if cls is Cos and v == 0:
            return const(1)
        if cls is Exp and v == 0:
            return const(1)
        if cls is Ln and v == 1:
            return const(0)
        if cls is Ln and v <= 0:
            return _mark(Ln(arg))
        fn = {Sin: math.sin, Cos: math.cos, Exp: math.exp, Ln: math.log}[cls]
        return const(fn(float(v)))
    if cls is Sin and _is_negative(arg):
        return _negate(_mark(Sin(_negate(arg))))
    if cls is Cos and _is_negative(arg):
        return _mark(Cos(_negate(arg)))
    if cls is Ln and isinstance(arg, Exp):
        return arg.arg
    return _mark(cls(arg))


_cache: dict = {}
_CACHE_MAX = 200_000


def simplify(e: Expr) -> Expr:
    """Return the canonical form of ``e``; evaluation-equivalent to ``e``."""
    if is_canonical(e):
        return e
    hit = _cache.get(e)
    if hit is not None:
        return hit
    out = _simplify(e)
    if len(_cache) > _CACHE_MAX:
        _cache.clear()
    _cache[e] = out
    return out


def _simplify(e: Expr) -> Expr:
    if isinstance(e, (Const, Var, Param)):
        return _mark(e)
    if isinstance(e, Add):
        return canon_add([simplify(t) for t in e.terms])
    if isinstance(e, Mul):
        return canon_mul([simplify(f) for f in e.factors])
    if isinstance(e, Neg):
        return _negate(simplify(e.arg))
    if isinstance(e, Div):
        return canon_mul([simplify(e.num), canon_pow(simplify(e.den), -1)])
    if isinstance(e, IntPow):
        return canon_pow(simplify(e.base), e.exp)
    if isinstance(e, Func):
        return canon_func(type(e), simplify(e.arg))
    if isinstance(e, NumFn):
        return _mark(NumFn(e.fn, simplify(e.arg)))
    raise TypeError(f"unknown node {e!r}")


def clear_cache() -> None:
    _cache.clear()


# canonical builders for library code
def add(*terms) -> Expr:
    return canon_add([simplify(_coerce(t)) for t in terms])


def mul(*factors) -> Expr:
    return canon_mul([simplify(_coerce(f)) for f in factors])


def neg(e) -> Expr:
    return _negate(simplify(_coerce(e)))


def sub(a, b) -> Expr:
    return canon_add([simplify(_coerce(a)), neg(b)])


def div(a, b) -> Expr:
    return canon_mul([simplify(_coerce(a)), canon_pow(simplify(_coerce(b)), -1)])


def power(a, k: int) -> Expr:
    return canon_pow(simplify(_coerce(a)), int(k))


def _coerce(x) -> Expr:
    if isinstance(x, Expr):
        return x
    return Const(x)


def is_zero(e: Expr) -> bool:
    """Structural zero test on the canonical form."""
    e = simplify(e)
    return isinstance(e, Const) and e.value == 0
