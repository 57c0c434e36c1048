"""Arithmetic expressions for boundary data and initial fields.

A small recursive-descent parser over variables t, x, y; numeric literals;
pi; unary minus; binary + - * / ^ (caret binds tightest, then unary minus,
then * /, then + -; the binary four are left associative, ^ associates to
the right); functions sin, cos, exp, abs; and the piecewise selector
if(a < b, then, else) with comparisons <, <=, >=, >.

Evaluation is total on finite inputs: division by zero and invalid powers
follow IEEE semantics (inf/nan) instead of raising, and both branches of an
if() are always evaluated.  eval() accepts numpy arrays for x and y, so
nodal interpolation is a single vectorized call.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

__all__ = ["ExprError", "parse_expression", "Expr"]

FUNCTIONS = {"sin": np.sin, "cos": np.cos, "exp": np.exp, "abs": np.abs}
VARIABLES = ("t", "x", "y")
COMPARISONS = ("<=", ">=", "<", ">")


class ExprError(ValueError):
    """Parse failure with the offending position in the source text."""

    def __init__(self, message: str, text: str, pos: int):
        super().__init__(f"{message} at position {pos}: {text!r}")
        self.pos = pos


@dataclass(frozen=True)
class Num:
    value: float

    def eval(self, env):
        return self.value


@dataclass(frozen=True)
class Var:
    name: str

    def eval(self, env):
        return env[self.name]


@dataclass(frozen=True)
class Neg:
    arg: "Expr"

    def eval(self, env):
        return -self.arg.eval(env)


@dataclass(frozen=True)
class Bin:
    op: str
    left: "Expr"
    right: "Expr"

    def eval(self, env):
        a = self.left.eval(env)
        b = self.right.eval(env)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            if self.op == "+":
                return a + b
            if self.op == "-":
                return a - b
            if self.op == "*":
                return a * b
            if self.op == "/":
                return np.true_divide(a, b)
            return np.float_power(np.asarray(a, dtype=float), b)


@dataclass(frozen=True)
class Call:
    fn: str
    arg: "Expr"

    def eval(self, env):
        with np.errstate(invalid="ignore", over="ignore"):
            return FUNCTIONS[self.fn](self.arg.eval(env))


@dataclass(frozen=True)
class If:
    op: str
    lhs: "Expr"
    rhs: "Expr"
    then: "Expr"
    other: "Expr"

    def eval(self, env):
        a = self.lhs.eval(env)
        b = self.rhs.eval(env)
        if self.op == "<":
            cond = a < b
        elif self.op == "<=":
            cond = a <= b
        elif self.op == ">=":
            cond = a >= b
        else:
            cond = a > b
        return np.where(cond, self.then.eval(env), self.other.eval(env))


Expr = Union[Num, Var, Neg, Bin, Call, If]


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0

    def error(self, message: str) -> ExprError:
        return ExprError(message, self.text, self.pos)

    def skip_ws(self):
        while self.pos < len(self.text) and self.text[self.pos].isspace():
            self.pos += 1

    def peek(self) -> str:
        self.skip_ws()
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def accept(self, token: str) -> bool:
        self.skip_ws()
        if self.text.startswith(token, self.pos):
            self.pos += len(token)
            return True
        return False

    def expect(self, token: str):
        if not self.accept(token):
            raise self.error(f"expected {token!r}")

    def parse(self) -> Expr:
        node = self.expr()
        self.skip_ws()
        if self.pos != len(self.text):
            raise self.error("unexpected trailing input")
        return node

    def expr(self) -> Expr:
        node = self.term()
        while True:
            if self.accept("+"):
                node = Bin("+", node, self.term())
            elif self._minus_ahead():
                self.expect("-")
                node = Bin("-", node, self.term())
            else:
                return node

    def _minus_ahead(self) -> bool:
        self.skip_ws()
        return self.pos < len(self.text) and self.text[self.pos] == "-"

    def term(self) -> Expr:
        node = self.unary()
        while True:
            if self.accept("*"):
                node = Bin("*", node, self.unary())
            elif self.accept("/"):
                node = Bin("/", node, self.unary())
            else:
                return node

    def unary(self) -> Expr:
        if self.accept("-"):
            return Neg(self.unary())
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        if self.accept("^"):
            return Bin("^", base, self.unary())  # right associative exponent
        return base

    def atom(self) -> Expr:
        self.skip_ws()
        if self.pos >= len(self.text):
            raise self.error("unexpected end of expression")
        ch = self.text[self.pos]
        if ch == "(":
            self.pos += 1
            node = self.expr()
            self.expect(")")
            return node
        if ch.isdigit() or ch == ".":
            return self.number()
        if ch.isalpha() or ch == "_":
            return self.identifier()
        raise self.error(f"unexpected character {ch!r}")

    def number(self) -> Num:
        start = self.pos
        text = self.text
        while self.pos < len(text) and (text[self.pos].isdigit() or text[self.pos] == "."):
            self.pos += 1
        if self.pos < len(text) and text[self.pos] in "eE":
            probe = self.pos + 1
            if probe < len(text) and text[probe] in "+-":
                probe += 1
            if probe < len(text) and text[probe].isdigit():
                self.pos = probe
                while self.pos < len(text) and text[self.pos].isdigit():
                    self.pos += 1
        try:
            return Num(float(text[start:self.pos]))
        except ValueError:
            self.pos = start
            raise self.error("malformed number") from None

    def identifier(self) -> Expr:
        start = self.pos
        text = self.text
        while self.pos < len(text) and (text[self.pos].isalnum() or text[self.pos] == "_"):
            self.pos += 1
        name = text[start:self.pos]
        if name == "pi":
            return Num(np.pi)
        if name in VARIABLES:
            return Var(name)
        if name in FUNCTIONS:
            self.expect("(")
            arg = self.expr()
            self.expect(")")
            return Call(name, arg)
        if name == "if":
            self.expect("(")
            lhs = self.expr()
            op = self.comparison()
            rhs = self.expr()
            self.expect(",")
            then = self.expr()
            self.expect(",")
            other = self.expr()
            self.expect(")")
            return If(op, lhs, rhs, then, other)
        self.pos = start
        raise self.error(f"unknown identifier {name!r}")

    def comparison(self) -> str:
        for op in COMPARISONS:
            if self.accept(op):
                return op
        raise self.error("expected a comparison (<, <=, >=, >)")


def parse_expression(text: str) -> Expr:
    """Parse the boundary/initial-data language into an evaluable tree."""
    return _Parser(text).parse()


# -- printing ------------------------------------------------------------------

_PRECEDENCE = {"+": 1, "-": 1, "*": 2, "/": 2, "neg": 3, "^": 4}


def to_text(node: Expr) -> str:
    """Render a tree so that parse_expression(to_text(e)) == e."""
    return _render(node, 0)


def _render(node: Expr, parent_prec: int) -> str:
    if isinstance(node, Num):
        if node.value == 0:
            return "0.0"  # fold away the sign of zero; Num(-0.0) == Num(0.0)
        if node.value < 0:
            return _paren(f"-{_fmt(-node.value)}", parent_prec, _PRECEDENCE["neg"])
        return _fmt(node.value)
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Call):
        return f"{node.fn}({_render(node.arg, 0)})"
    if isinstance(node, If):
        return (
            f"if({_render(node.lhs, 0)} {node.op} {_render(node.rhs, 0)}, "
            f"{_render(node.then, 0)}, {_render(node.other, 0)})"
        )
    if isinstance(node, Neg):
        prec = _PRECEDENCE["neg"]
        # the operand of unary minus binds at least as tightly as the minus
        return _paren(f"-{_render(node.arg, prec)}", parent_prec, prec)
    prec = _PRECEDENCE[node.op]
    if node.op == "^":
        # right associative; power binds tighter than unary minus on the left
        left = _render(node.left, prec + 1)
        right = _render(node.right, _PRECEDENCE["neg"])
        return _paren(f"{left}^{right}", parent_prec, prec)
    left = _render(node.left, prec)
    right = _render(node.right, prec + 1)  # left associative
    return _paren(f"{left} {node.op} {right}", parent_prec, prec)


def _paren(text: str, parent_prec: int, prec: int) -> str:
    return f"({text})" if prec < parent_prec else text


def _fmt(value: float) -> str:
    return repr(float(value))
