"""Vectorized numeric evaluation of expressions."""

from __future__ import annotations

from typing import Mapping, Optional

import numpy as np

from .nodes import Add, Const, Cos, Div, Exp, Expr, IntPow, Ln, Mul, Neg, NumFn, Param, Sin, Var


class EvaluationError(ArithmeticError):
    pass


class DivisionByZero(EvaluationError, ZeroDivisionError):
    pass


class LogDomainError(EvaluationError, ValueError):
    pass


class UnboundParameter(EvaluationError, LookupError):
    pass


def as_points(points) -> tuple[np.ndarray, bool]:
    """Return points as an (m, n) float array and whether a single point was given."""
    arr = np.asarray(points, dtype=float)
    if arr.ndim == 1:
        return arr[None, :], True
    if arr.ndim != 2:
        raise ValueError("points must be a vector or an (m, n) array")
    return arr, False


def evaluate(f: Expr, points, bindings: Optional[Mapping[str, float]] = None):
    """Evaluate ``f`` at one point (returns float) or at rows of an (m, n) array."""
    X, single = as_points(points)
    out = evaluate_many([f], X, bindings)[0]
    return float(out[0]) if single else out


def evaluate_many(exprs, X: np.ndarray, bindings: Optional[Mapping[str, float]] = None) -> list:
    """Evaluate several expressions on the same (m, n) sample array.

    Shared subtrees are evaluated once.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    m = X.shape[0]
    cache: dict = {}
    bindings = {} if bindings is None else bindings
    out = []
    with np.errstate(all="ignore"):
        for f in exprs:
            v = _ev(f, X, bindings, cache)
            out.append(np.array(np.broadcast_to(v, (m,)), dtype=float))
    return out


def _ev(e: Expr, X, bindings, cache):
    key = id(e)
    hit = cache.get(key)
    if hit is not None:
        return hit[1]
    v = _ev_node(e, X, bindings, cache)
    # keep e alive so its id cannot be recycled during this evaluation
    cache[key] = (e, v)
    return v


def _ev_node(e, X, bindings, cache):
    if isinstance(e, Const):
        return float(e.value)
    if isinstance(e, Var):
        if e.index > X.shape[1]:
            raise EvaluationError(f"x{e.index} is out of range for points of dimension {X.shape[1]}")
        return X[:, e.index - 1]
    if isinstance(e, Param):
        try:
            return float(bindings[e.name])
        except KeyError:
            raise UnboundParameter(f"parameter {e.name!r} is not bound") from None
    if isinstance(e, Add):
        acc = _ev(e.terms[0], X, bindings, cache)
        for t in e.terms[1:]:
            acc = acc + _ev(t, X, bindings, cache)
        return acc
    if isinstance(e, Mul):
        acc = _ev(e.factors[0], X, bindings, cache)
        for f in e.factors[1:]:
            acc = acc * _ev(f, X, bindings, cache)
        return acc
    if isinstance(e, Neg):
        return -_ev(e.arg, X, bindings, cache)
    if isinstance(e, Div):
        den = _ev(e.den, X, bindings, cache)
        if np.any(np.asarray(den) == 0.0):
            raise DivisionByZero(f"division by zero in {e}")
        return _ev(e.num, X, bindings, cache) / den
    if isinstance(e, IntPow):
        base = _ev(e.base, X, bindings, cache)
        if e.exp < 0:
            if np.any(np.asarray(base) == 0.0):
                raise DivisionByZero(f"division by zero in {e}")
            return 1.0 / np.power(base, -e.exp)
        if e.exp == 2:
            return base * base
        return np.power(base, e.exp)
    if isinstance(e, Sin):
        return np.sin(_ev(e.arg, X, bindings, cache))
    if isinstance(e, Cos):
        return np.cos(_ev(e.arg, X, bindings, cache))
    if isinstance(e, Exp):
        return np.exp(_ev(e.arg, X, bindings, cache))
    if isinstance(e, Ln):
        a = _ev(e.arg, X, bindings, cache)
        if np.any(np.asarray(a) <= 0.0):
            raise LogDomainError(f"ln of a non-positive value in {e}")
        return np.log(a)
    if isinstance(e, NumFn):
        return e.fn(_ev(e.arg, X, bindings, cache))
    raise TypeError(f"cannot evaluate {e!r}")
