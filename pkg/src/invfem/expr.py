"""Arithmetic expressions in x, y, z for boundary conditions and loads.

Grammar (lowest to highest precedence)::

    expr  := term (('+' | '-') term)*
    term  := unary (('*' | '/') unary)*
    unary := '-' unary | power
    power := atom ('^' unary)?          # right associative
    atom  := NUMBER | 'x' | 'y' | 'z' | '(' expr ')'
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Union

import numpy as np

VARIABLES = ("x", "y", "z")


class ExprSyntaxError(ValueError):
    def __init__(self, message: str, offset: int):
        self.offset = offset
        super().__init__(f"{message} at offset {offset}")


class ExprEvaluationError(ArithmeticError):
    pass


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Neg:
    operand: "Expr"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Expr"
    right: "Expr"


Expr = Union[Num, Var, Neg, BinOp]

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_]\w*)|(?P<op>[-+*/^()]))"
)


def _tokenize(text: str):
    pos = 0
    tokens = []
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            start = len(text) - len(text[pos:].lstrip())
            raise ExprSyntaxError(f"unexpected character {text[start]!r}", start)
        kind = m.lastgroup
        tokens.append((kind, m.group(kind), m.start(kind)))
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

    def expr(self):
        node = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            node = BinOp(op, node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()[1]
            node = BinOp(op, node, self.unary())
        return node

    def unary(self):
        if self.peek()[:2] == ("op", "-"):
            self.take()
            return Neg(self.unary())
        return self.power()

    def power(self):
        node = self.atom()
        if self.peek()[:2] == ("op", "^"):
            self.take()
            return BinOp("^", node, self.unary())
        return node

    def atom(self):
        kind, text, offset = self.take()
        if kind == "num":
            return Num(float(text))
        if kind == "name":
            if text not in VARIABLES:
                raise ExprSyntaxError(f"unknown identifier {text!r}", offset)
            return Var(text)
        if (kind, text) == ("op", "("):
            node = self.expr()
            kind, text, offset = self.take()
            if text != ")":
                raise ExprSyntaxError("expected ')'", offset)
            return node
        if kind == "end":
            raise ExprSyntaxError("unexpected end of expression", offset)
        raise ExprSyntaxError(f"unexpected {text!r}", offset)


def parse(text: str) -> Expr:
    p = _Parser(str(text))
    node = p.expr()
    kind, text_, offset = p.peek()
    if kind != "end":
        raise ExprSyntaxError(f"unexpected {text_!r}", offset)
    return node


def to_string(e: Expr) -> str:
    """Fully parenthesised text that parses back to the same tree."""
    if isinstance(e, Num):
        return repr(float(e.value))
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Neg):
        return f"(-{to_string(e.operand)})"
    return f"({to_string(e.left)} {e.op} {to_string(e.right)})"


def _eval(e: Expr, x, y, z):
    if isinstance(e, Num):
        return e.value
    if isinstance(e, Var):
        return {"x": x, "y": y, "z": z}[e.name]
    if isinstance(e, Neg):
        return -_eval(e.operand, x, y, z)
    a = _eval(e.left, x, y, z)
    b = _eval(e.right, x, y, z)
    if e.op == "+":
        return a + b
    if e.op == "-":
        return a - b
    if e.op == "*":
        return a * b
    if e.op == "/":
        if np.any(np.asarray(b) == 0):
            raise ExprEvaluationError("division by zero")
        return a / b
    with np.errstate(all="ignore"):
        r = np.power(np.asarray(a, dtype=float), b)
    if np.any(np.isnan(r) & ~np.isnan(np.asarray(a, dtype=float)) & ~np.isnan(np.asarray(b, dtype=float))):
        raise ExprEvaluationError("power has no real value")
    if np.any((np.asarray(a) == 0) & (np.asarray(b) < 0)):
        raise ExprEvaluationError("division by zero")
    return r if np.ndim(r) else float(r)


def evaluate(e: Expr, point) -> float | np.ndarray:
    """Evaluate at one point (3,) or many points (n, 3)."""
    pt = np.asarray(point, dtype=float)
    if pt.ndim == 1:
        return float(_eval(e, pt[0], pt[1], pt[2]))
    out = _eval(e, pt[:, 0], pt[:, 1], pt[:, 2])
    return np.broadcast_to(np.asarray(out, dtype=float), (len(pt),)).copy()


def as_expr(e) -> Expr:
    if isinstance(e, (Num, Var, Neg, BinOp)):
        return e
    if isinstance(e, (int, float)):
        return Num(float(e))
    return parse(e)
