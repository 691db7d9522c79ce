"""Expression tree nodes.

Nodes are immutable and hashable.  Construction through the classes gives raw
trees (as produced by the parser); :func:`mechlin.expr.simplify` turns them
into the canonical form used everywhere else.
"""

from __future__ import annotations

from fractions import Fraction
from numbers import Rational
from typing import Iterable, Union

Number = Union[Fraction, float]


def as_number(value) -> Number:
    if isinstance(value, bool):
        raise TypeError("booleans are not expression constants")
    if isinstance(value, Fraction):
        return value
    if isinstance(value, Rational):
        return Fraction(value)
    if isinstance(value, float):
        return value
    try:
        return float(value)
    except (TypeError, ValueError):
        raise TypeError(f"cannot convert {value!r} to an expression constant") from None


def as_expr(value) -> "Expr":
    if isinstance(value, Expr):
        return value
    return Const(value)


class Expr:
    __slots__ = ("_hash", "_canon", "_skey", "_vars")

    def _args(self) -> tuple:
        raise NotImplementedError

    def __hash__(self) -> int:
        try:
            return self._hash
        except AttributeError:
            h = hash((type(self).__name__,) + self._args())
            object.__setattr__(self, "_hash", h)
            return h

    def __eq__(self, other) -> bool:
        if self is other:
            return True
        if type(self) is not type(other):
            return False
        if hash(self) != hash(other):
            return False
        return self._args() == other._args()

    def __ne__(self, other) -> bool:
        return not self.__eq__(other)

    def __setattr__(self, name, value):
        raise AttributeError("Expr nodes are immutable")

    # raw builders; call simplify() to canonicalize
    def __add__(self, other):
        return Add((self, as_expr(other)))

    def __radd__(self, other):
        return Add((as_expr(other), self))

    def __sub__(self, other):
        return Add((self, Neg(as_expr(other))))

    def __rsub__(self, other):
        return Add((as_expr(other), Neg(self)))

    def __mul__(self, other):
        return Mul((self, as_expr(other)))

    def __rmul__(self, other):
        return Mul((as_expr(other), self))

    def __truediv__(self, other):
        return Div(self, as_expr(other))

    def __rtruediv__(self, other):
        return Div(as_expr(other), self)

    def __neg__(self):
        return Neg(self)

    def __pow__(self, k):
        return IntPow(self, k)

    def __str__(self) -> str:
        from .printer import to_string

        return to_string(self)

    @property
    def children(self) -> tuple:
        return ()


def _init(obj, **fields):
    for k, v in fields.items():
        object.__setattr__(obj, k, v)


class Const(Expr):
    __slots__ = ("value",)

    def __init__(self, value):
        _init(self, value=as_number(value))

    def _args(self):
        # Fraction(1) and 1.0 hash equal; keep exact and inexact constants apart
        return (isinstance(self.value, float), self.value)

    def __repr__(self):
        return f"Const({self.value!r})"


class Var(Expr):
    """Configuration coordinate ``x<index>``; indices start at 1."""

    __slots__ = ("index",)

    def __init__(self, index: int):
        if int(index) < 1:
            raise ValueError("variable indices start at 1")
        _init(self, index=int(index))

    def _args(self):
        return (self.index,)

    def __repr__(self):
        return f"Var({self.index})"


class Param(Expr):
    __slots__ = ("name",)

    def __init__(self, name: str):
        _init(self, name=str(name))

    def _args(self):
        return (self.name,)

    def __repr__(self):
        return f"Param({self.name!r})"


class Add(Expr):
    __slots__ = ("terms",)

    def __init__(self, terms: Iterable[Expr]):
        terms = tuple(as_expr(t) for t in terms)
        if not terms:
            raise ValueError("Add needs at least one term")
        _init(self, terms=terms)

    def _args(self):
        return self.terms

    @property
    def children(self):
        return self.terms

    def __repr__(self):
        return f"Add({', '.join(map(repr, self.terms))})"


class Mul(Expr):
    __slots__ = ("factors",)

    def __init__(self, factors: Iterable[Expr]):
        factors = tuple(as_expr(f) for f in factors)
        if not factors:
            raise ValueError("Mul needs at least one factor")
        _init(self, factors=factors)

    def _args(self):
        return self.factors

    @property
    def children(self):
        return self.factors

    def __repr__(self):
        return f"Mul({', '.join(map(repr, self.factors))})"


class Neg(Expr):
    __slots__ = ("arg",)

    def __init__(self, arg: Expr):
        _init(self, arg=as_expr(arg))

    def _args(self):
        return (self.arg,)

    @property
    def children(self):
        return (self.arg,)

    def __repr__(self):
        return f"Neg({self.arg!r})"


class Div(Expr):
    __slots__ = ("num", "den")

    def __init__(self, num: Expr, den: Expr):
        _init(self, num=as_expr(num), den=as_expr(den))

    def _args(self):
        return (self.num, self.den)

    @property
    def children(self):
        return (self.num, self.den)

    def __repr__(self):
        return f"Div({self.num!r}, {self.den!r})"


class IntPow(Expr):
    __slots__ = ("base", "exp")

    def __init__(self, base: Expr, exp: int):
        if isinstance(exp, bool) or int(exp) != exp:
            raise ValueError(f"IntPow exponent must be an integer, got {exp!r}")
        _init(self, base=as_expr(base), exp=int(exp))

    def _args(self):
        return (self.base, self.exp)

    @property
    def children(self):
        return (self.base,)

    def __repr__(self):
        return f"IntPow({self.base!r}, {self.exp})"


class Func(Expr):
    """Elementary function of one argument."""

    __slots__ = ("arg",)
    name = "?"

    def __init__(self, arg: Expr):
        _init(self, arg=as_expr(arg))

    def _args(self):
        return (self.arg,)

    @property
    def children(self):
        return (self.arg,)

    def __repr__(self):
        return f"{type(self).__name__}({self.arg!r})"


class Sin(Func):
    __slots__ = ()
    name = "sin"


class Cos(Func):
    __slots__ = ()
    name = "cos"


class Exp(Func):
    __slots__ = ()
    name = "exp"


class Ln(Func):
    __slots__ = ()
    name = "ln"


FUNCTIONS = {"sin": Sin, "cos": Cos, "exp": Exp, "ln": Ln}


class NumFn(Expr):
    """Opaque univariate numeric function applied to an expression.

    ``fn`` is a :class:`mechlin.expr.numfn.NumericFunction`; it carries an
    exact derivative template, so ``diff`` stays symbolic through this node.
    """

    __slots__ = ("fn", "arg")

    def __init__(self, fn, arg: Expr):
        _init(self, fn=fn, arg=as_expr(arg))

    def _args(self):
        return (id(self.fn), self.arg)

    @property
    def children(self):
        return (self.arg,)

    def __repr__(self):
        return f"NumFn({self.fn.name!r}, {self.arg!r})"


ZERO = Const(0)
ONE = Const(1)


def variables(expr: Expr) -> frozenset:
    """Indices of the configuration variables an expression mentions."""
    try:
        return expr._vars
    except AttributeError:
        pass
    if isinstance(expr, Var):
        out = frozenset((expr.index,))
    else:
        out = frozenset()
        for c in expr.children:
            out = out | variables(c)
    object.__setattr__(expr, "_vars", out)
    return out


def parameters(expr: Expr) -> set:
    out = set()
    stack = [expr]
    while stack:
        e = stack.pop()
        if isinstance(e, Param):
            out.add(e.name)
        stack.extend(e.children)
    return out


def contains_numfn(expr: Expr) -> bool:
    stack = [expr]
    while stack:
        e = stack.pop()
        if isinstance(e, NumFn):
            return True
        stack.extend(e.children)
    return False


def numfns(expr: Expr) -> dict:
    out = {}
    stack = [expr]
    while stack:
        e = stack.pop()
        if isinstance(e, NumFn):
            out[e.fn.name] = e.fn
        stack.extend(e.children)
    return out


def node_count(expr: Expr) -> int:
    return 1 + sum(node_count(c) for c in expr.children)
