"""Straight-line Python source from expressions, with common subexpressions shared."""

from __future__ import annotations

from typing import Mapping

from .nodes import Add, Const, Cos, Div, Exp, Expr, IntPow, Ln, Mul, Neg, NumFn, Param, Sin, Var


class NotCompilable(ValueError):
    pass


_FUNC = {Sin: "math.sin", Cos: "math.cos", Exp: "math.exp", Ln: "math.log"}


class CodeGen:
    """Accumulates assignments ``t<k> = ...``; :meth:`emit` returns a name or literal."""

    def __init__(self, bindings: Mapping[str, float], var: str = "x", prefix: str = "t"):
        self.bindings = bindings
        self.var = var
        self.prefix = prefix
        self.lines: list = []
        self._names: dict = {}

    def emit(self, e: Expr) -> str:
        if isinstance(e, Const):
            v = float(e.value)
            return repr(v) if v >= 0 else f"({v!r})"
        if isinstance(e, Var):
            return f"{self.var}[{e.index - 1}]"
        if isinstance(e, Param):
            try:
                v = float(self.bindings[e.name])
            except KeyError:
                raise NotCompilable(f"parameter {e.name!r} is not bound") from None
            return repr(v) if v >= 0 else f"({v!r})"
        name = self._names.get(e)
        if name is not None:
            return name
        if isinstance(e, Add):
            rhs = " + ".join(self.emit(t) for t in e.terms)
        elif isinstance(e, Mul):
            rhs = " * ".join(self.emit(f) for f in e.factors)
        elif isinstance(e, Neg):
            rhs = f"-{self.emit(e.arg)}"
        elif isinstance(e, Div):
            rhs = f"{self.emit(e.num)} / {self.emit(e.den)}"
        elif isinstance(e, IntPow):
            b = self.emit(e.base)
            k = abs(e.exp)
            p = b if k == 1 else (f"{b} * {b}" if k == 2 else f"{b} ** {k}")
            rhs = p if e.exp > 0 else f"1.0 / ({p})"
        elif type(e) in _FUNC:
            rhs = f"{_FUNC[type(e)]}({self.emit(e.arg)})"
        elif isinstance(e, NumFn):
            raise NotCompilable(f"numeric function {e.fn.name!r} cannot be compiled")
        else:
            raise NotCompilable(f"cannot compile {e!r}")
        name = f"{self.prefix}{len(self._names)}"
        self._names[e] = name
        self.lines.append(f"{name} = {rhs}")
        return name
