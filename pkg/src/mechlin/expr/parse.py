"""Recursive-descent parser for the expression language.

Grammar::

    expr     := ['+'|'-'] term (('+'|'-') term)*
    term     := factor (('*'|'/') factor)*
    factor   := ('-'|'+') factor | power
    power    := atom ['^' exponent]
    exponent := ['-'|'+'] INT | '(' ['-'|'+'] INT ')'
    atom     := NUMBER | x<k> | param | func '(' expr ')' | '(' expr ')'

A leading sign applies to the whole first term, so ``-a*b`` reads as
``-(a*b)``.
"""

from __future__ import annotations

import re
from fractions import Fraction
from typing import Iterable, Mapping, Optional

from .nodes import FUNCTIONS, Add, Const, Div, Expr, IntPow, Mul, Neg, NumFn, Param, Var


class ParseError(ValueError):
    def __init__(self, message: str, position: int):
        super().__init__(f"position {position}: {message}")
        self.position = position


_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<id>[A-Za-z_][A-Za-z0-9_]*)|(?P<op>[-+*/^()]))"
)
_VAR = re.compile(r"x(\d+)$")


def _tokenize(text: str):
    pos = 0
    out = []
    while True:
        while pos < len(text) and text[pos].isspace():
            pos += 1
        if pos >= len(text):
            break
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            raise ParseError(f"unexpected character {text[pos]!r}", pos)
        start = m.start(m.lastgroup)
        out.append((m.lastgroup, m.group(m.lastgroup), start))
        pos = m.end()
    out.append(("end", "", len(text)))
    return out


def _number(s: str):
    if re.fullmatch(r"\d+", s):
        return Fraction(int(s))
    if "e" not in s.lower():
        # decimal literals are exact
        return Fraction(s)
    return float(s)


class _Parser:
    def __init__(self, text, n, params, functions):
        self.toks = _tokenize(text)
        self.i = 0
        self.n = n
        self.params = None if params is None else set(params)
        self.functions = functions or {}

    def peek(self):
        return self.toks[self.i]

    def take(self):
        t = self.toks[self.i]
        self.i += 1
        return t

    def expect(self, value):
        kind, v, pos = self.take()
        if v != value:
            raise ParseError(f"expected {value!r}, found {v or 'end of input'!r}", pos)

    def parse(self):
        e = self.expr()
        kind, v, pos = self.peek()
        if kind != "end":
            raise ParseError(f"unexpected {v!r}", pos)
        return e

    def expr(self):
        kind, v, pos = self.peek()
        if kind == "end":
            raise ParseError("empty expression", pos)
        if v in ("+", "-"):
            self.take()
            first = self.term()
            terms = [Neg(first) if v == "-" else first]
        else:
            terms = [self.term()]
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            t = self.term()
            terms.append(Neg(t) if op == "-" else t)
        return terms[0] if len(terms) == 1 else Add(terms)

    def term(self):
        factors = [self.factor()]
        while self.peek()[0] == "op" and self.peek()[1] in ("*", "/"):
            op = self.take()[1]
            rhs = self.factor()
            if op == "*":
                factors.append(rhs)
            else:
                left = factors[0] if len(factors) == 1 else Mul(factors)
                factors = [Div(left, rhs)]
        return factors[0] if len(factors) == 1 else Mul(factors)

    def factor(self):
        kind, v, pos = self.peek()
        if kind == "op" and v in ("+", "-"):
            self.take()
            f = self.factor()
            return Neg(f) if v == "-" else f
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek()[1] == "^" and self.peek()[0] == "op":
            self.take()
            k = self.exponent()
            if self.peek()[1] == "^" and self.peek()[0] == "op":
                raise ParseError("chained exponents need parentheses", self.peek()[2])
            return IntPow(base, k)
        return base

    def exponent(self):
        kind, v, pos = self.peek()
        paren = False
        if v == "(":
            self.take()
            paren = True
        sign = 1
        kind, v, pos = self.peek()
        if kind == "op" and v in ("+", "-"):
            self.take()
            sign = -1 if v == "-" else 1
        kind, v, pos = self.take()
        if kind != "num" or not re.fullmatch(r"\d+", v):
            raise ParseError("exponent must be an integer literal", pos)
        if paren:
            self.expect(")")
        return sign * int(v)

    def atom(self):
        kind, v, pos = self.take()
        if kind == "num":
            return Const(_number(v))
        if kind == "id":
            m = _VAR.match(v)
            if m:
                k = int(m.group(1))
                if k < 1 or (self.n is not None and k > self.n):
                    raise ParseError(f"variable {v} is out of range", pos)
                return Var(k)
            if self.peek()[1] == "(" and self.peek()[0] == "op":
                if v in FUNCTIONS:
                    self.take()
                    arg = self.expr()
                    self.expect(")")
                    return FUNCTIONS[v](arg)
                if v in self.functions:
                    self.take()
                    arg = self.expr()
                    self.expect(")")
                    return NumFn(self.functions[v], arg)
                raise ParseError(f"unknown function {v!r}", pos)
            if v in FUNCTIONS:
                raise ParseError(f"function {v!r} needs an argument", pos)
            if self.params is not None and v not in self.params:
                raise ParseError(f"unknown identifier {v!r}", pos)
            return Param(v)
        if kind == "op" and v == "(":
            e = self.expr()
            self.expect(")")
            return e
        if kind == "end":
            raise ParseError("unexpected end of input", pos)
        raise ParseError(f"unexpected {v!r}", pos)


def parse(
    text: str,
    n: Optional[int] = None,
    params: Optional[Iterable[str]] = None,
    functions: Optional[Mapping[str, object]] = None,
) -> Expr:
    """Parse ``text`` into a raw expression tree.

    ``n`` bounds variable indices, ``params`` (if given) lists the allowed
    parameter names, ``functions`` maps extra names to numeric functions.
    """
    if not isinstance(text, str):
        raise ParseError("expression must be a string", 0)
    return _Parser(text, n, params, functions).parse()
