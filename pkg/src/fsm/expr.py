"""Small closed-form expression language used by problem files.

Grammar (usual precedence, ``^`` is right associative)::

    expr  := term (('+' | '-') term)*
    term  := unary (('*' | '/') unary)*
    unary := ('+' | '-') unary | power
    power := atom ('^' unary)?
    atom  := NUMBER | 'x1' | 'x2' | 'x' | 'pi' | FUNC '(' expr ')' | '(' expr ')'

``FUNC`` is one of sin, cos, sinh, cosh, exp.  Expressions are compiled to
sympy so that derivatives of any order are available exactly.
"""
from __future__ import annotations

import re
from functools import lru_cache

import numpy as np
import sympy as sp

X1, X2 = sp.symbols("x1 x2", real=True)

_FUNCS = {"sin": sp.sin, "cos": sp.cos, "sinh": sp.sinh, "cosh": sp.cosh, "exp": sp.exp}
_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>\*\*|[-+*/^()]))"
)


class ExpressionError(ValueError):
    """Raised for unparseable expressions; ``offset`` is the character index."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            start = pos + len(text[pos:]) - len(text[pos:].lstrip())
            raise ExpressionError(f"unexpected character {text[start]!r}", start)
        kind = m.lastgroup
        value = m.group(kind)
        tokens.append((kind, "^" if value == "**" else value, m.start(kind)))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value: str):
        kind, val, off = self.take()
        if val != value or kind == "end":
            raise ExpressionError(f"expected {value!r}", off)

    def parse(self):
        node = self.expr()
        kind, val, off = self.peek()
        if kind != "end":
            raise ExpressionError(f"unexpected token {val!r}", off)
        return node

    def expr(self):
        node = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            rhs = self.term()
            node = node + rhs if op == "+" else node - rhs
        return node

    def term(self):
        node = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()[1]
            rhs = self.unary()
            node = node * rhs if op == "*" else node / rhs
        return node

    def unary(self):
        kind, val, _ = self.peek()
        if kind == "op" and val in ("+", "-"):
            self.take()
            operand = self.unary()
            return -operand if val == "-" else operand
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek()[1] == "^":
            self.take()
            return base ** self.unary()
        return base

    def atom(self):
        kind, val, off = self.take()
        if kind == "num":
            return sp.Float(val, 17) if any(c in val for c in ".eE") else sp.Integer(val)
        if kind == "name":
            if val in ("x1", "x"):
                return X1
            if val == "x2":
                return X2
            if val == "pi":
                return sp.pi
            if val in _FUNCS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return _FUNCS[val](arg)
            raise ExpressionError(f"unknown name {val!r}", off)
        if val == "(":
            node = self.expr()
            self.expect(")")
            return node
        if kind == "end":
            raise ExpressionError("unexpected end of expression", off)
        raise ExpressionError(f"unexpected token {val!r}", off)


def parse_expression(text: str) -> sp.Expr:
    return _Parser(text).parse()


@lru_cache(maxsize=512)
def _compile(expr: sp.Expr):
    return sp.lambdify((X1, X2), expr, modules="numpy")


class Sampler:
    """Closed-form function of ``(x1, x2)`` with exact derivatives.

    Calling the sampler broadcasts over numpy arrays; ``x2`` may be omitted
    for one-dimensional problems.
    """

    def __init__(self, expr, text: str | None = None):
        self.expr = sp.sympify(expr)
        self.text = text if text is not None else _to_text(self.expr)

    @classmethod
    def parse(cls, text: str) -> "Sampler":
        return cls(parse_expression(text), text)

    @classmethod
    def constant(cls, value: float) -> "Sampler":
        return cls(sp.Float(repr(float(value)), 17) if value != int(value) else sp.Integer(int(value)), repr(float(value)))

    @property
    def is_zero(self) -> bool:
        return self.expr == 0

    def __call__(self, x1, x2=0.0):
        x1 = np.asarray(x1, dtype=float)
        x2 = np.asarray(x2, dtype=float)
        out = _compile(self.expr)(x1, x2)
        return np.broadcast_to(np.asarray(out, dtype=float), np.broadcast(x1, x2).shape).copy()

    def derivative(self, k1: int = 0, k2: int = 0) -> "Sampler":
        e = self.expr
        if k1:
            e = sp.diff(e, X1, k1)
        if k2:
            e = sp.diff(e, X2, k2)
        return Sampler(e)

    def __sub__(self, other: "Sampler") -> "Sampler":
        return Sampler(self.expr - other.expr)

    def __eq__(self, other):
        return isinstance(other, Sampler) and sp.simplify(self.expr - other.expr) == 0

    def __hash__(self):
        return hash(self.text)

    def __repr__(self):
        return f"Sampler({self.text!r})"


def _to_text(expr: sp.Expr) -> str:
    return sp.sstr(expr, full_prec=True).replace("**", "^")
