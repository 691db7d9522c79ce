"""Small exact expression algebra: parse, canonicalize, differentiate, evaluate."""

from .calculus import ZeroTest, diff, gradient, integrate_univariate, is_constant, is_identically_zero, subs
from .evaluate import (
    DivisionByZero,
    EvaluationError,
    LogDomainError,
    UnboundParameter,
    evaluate,
    evaluate_many,
)
from .nodes import (
    Add,
    Const,
    Cos,
    Div,
    Exp,
    Expr,
    IntPow,
    Ln,
    Mul,
    Neg,
    NumFn,
    Param,
    Sin,
    Var,
    contains_numfn,
    node_count,
    numfns,
    parameters,
    variables,
)
from .numfn import NumericFunction
from .parse import ParseError, parse
from .printer import to_string
from .simplify import add, clear_cache, const, div, is_zero, mul, neg, power, simplify, sub


def as_expr_like(value) -> Expr:
    """Accept an expression, a number or an expression string."""
    if isinstance(value, Expr):
        return value
    if isinstance(value, str):
        return parse(value)
    return Const(value)


__all__ = [
    "as_expr_like",
    "Add", "Const", "Cos", "Div", "Exp", "Expr", "IntPow", "Ln", "Mul", "Neg", "NumFn", "Param",
    "Sin", "Var", "DivisionByZero", "EvaluationError", "LogDomainError", "NumericFunction",
    "ParseError", "UnboundParameter", "ZeroTest", "add", "clear_cache", "const", "contains_numfn",
    "diff", "div", "evaluate", "evaluate_many", "gradient", "integrate_univariate", "is_constant",
    "is_identically_zero", "is_zero", "mul", "neg", "node_count", "numfns", "parameters", "parse",
    "power", "simplify", "sub", "subs", "to_string", "variables",
]
