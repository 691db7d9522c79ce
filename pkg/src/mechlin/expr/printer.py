"""Text rendering that the parser reads back."""

from __future__ import annotations

from fractions import Fraction

from .nodes import Add, Const, Div, Expr, Func, IntPow, Mul, Neg, NumFn, Param, Var

# precedence levels
_ADD, _NEG, _MUL, _POW, _ATOM = 1, 2, 3, 4, 5


def _num_str(v) -> str:
    if isinstance(v, Fraction):
        if v.denominator == 1:
            return str(v.numerator)
        return f"{v.numerator}/{v.denominator}"
    s = repr(float(v))
    if s in ("inf", "-inf", "nan"):
        raise ValueError(f"cannot print non-finite constant {s}")
    return s


def _const_prec(v) -> int:
    if v < 0:
        return _NEG
    if isinstance(v, Fraction) and v.denominator != 1:
        return _MUL
    if isinstance(v, float) and "e" in repr(v):
        return _MUL
    return _ATOM


def _wrap(s: str, prec: int, need: int) -> str:
    return f"({s})" if prec < need else s


def _is_negative_term(t: Expr) -> bool:
    if isinstance(t, Const):
        return t.value < 0
    if isinstance(t, Mul) and isinstance(t.factors[0], Const):
        return t.factors[0].value < 0
    return isinstance(t, Neg)


def _negated(t: Expr) -> Expr:
    if isinstance(t, Const):
        return Const(-t.value)
    if isinstance(t, Neg):
        return t.arg
    c = -t.factors[0].value
    rest = t.factors[1:]
    if c == 1:
        return rest[0] if len(rest) == 1 else Mul(rest)
    return Mul((Const(c),) + rest)


def _render(e: Expr):
    """Return (text, precedence)."""
    if isinstance(e, Const):
        return _num_str(e.value), _const_prec(e.value)
    if isinstance(e, Var):
        return f"x{e.index}", _ATOM
    if isinstance(e, Param):
        return e.name, _ATOM
    if isinstance(e, Func):
        return f"{e.name}({_render(e.arg)[0]})", _ATOM
    if isinstance(e, NumFn):
        return f"{e.fn.name}({_render(e.arg)[0]})", _ATOM
    if isinstance(e, Add):
        first, p = _render(e.terms[0])
        parts = [_wrap(first, p, _ADD)]
        for t in e.terms[1:]:
            if _is_negative_term(t):
                s, p = _render(_negated(t))
                parts.append(" - " + _wrap(s, p, _MUL))
            else:
                s, p = _render(t)
                parts.append(" + " + _wrap(s, p, _MUL))
        return "".join(parts), _ADD
    if isinstance(e, Neg):
        s, p = _render(e.arg)
        return "-" + _wrap(s, p, _MUL), _NEG
    if isinstance(e, Mul):
        return _render_mul(e)
    if isinstance(e, Div):
        a, pa = _render(e.num)
        b, pb = _render(e.den)
        return f"{_wrap(a, pa, _MUL)}/{_wrap(b, pb, _POW)}", _MUL
    if isinstance(e, IntPow):
        s, p = _render(e.base)
        return f"{_wrap(s, p, _ATOM)}^{e.exp}", _POW
    raise TypeError(f"cannot print {e!r}")


def _render_mul(e: Mul):
    factors = list(e.factors)
    sign = ""
    if isinstance(factors[0], Const) and factors[0].value < 0:
        c = -factors[0].value
        sign = "-"
        if c == 1:
            factors = factors[1:]
        else:
            factors[0] = Const(c)
    num = [f for f in factors if not (isinstance(f, IntPow) and f.exp < 0)]
    den = [IntPow(f.base, -f.exp) if f.exp != -1 else f.base for f in factors if isinstance(f, IntPow) and f.exp < 0]
    num_s = "*".join(_wrap(*_render(f), _MUL + 1) if not _leading_ok(i, f) else _wrap(*_render(f), _MUL)
                     for i, f in enumerate(num)) if num else "1"
    text = num_s
    if den:
        if len(den) == 1:
            s, p = _render(den[0])
            text += "/" + _wrap(s, p, _POW)
        else:
            text += "/(" + "*".join(_wrap(*_render(f), _MUL + 1) for f in den) + ")"
    if sign:
        return sign + text, _NEG
    return text, _MUL


def _leading_ok(i: int, f: Expr) -> bool:
    # a fraction constant may lead a product unparenthesized: 3/4*x1 reads as (3/4)*x1
    return i == 0 and isinstance(f, Const) and f.value > 0


def to_string(e: Expr) -> str:
    return _render(e)[0]
