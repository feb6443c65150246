"""Small arithmetic-expression parser producing sympy expressions.

Accepted syntax: numbers, ``+ - * / ^`` (``**`` is accepted as ``^``),
parentheses, the functions ``sin cos tan sec ln exp sqrt``, the constant
``pi`` and a caller-supplied set of variable / parameter names.

Nothing is ever passed to ``eval``; the parser builds the sympy tree
directly, so config files cannot execute code.
"""

from __future__ import annotations

import re
from typing import Callable, Iterable, Mapping

import numpy as np
import sympy as sp

from .errors import ConfigError

_FUNCTIONS: dict[str, Callable[[sp.Expr], sp.Expr]] = {
    "sin": sp.sin,
    "cos": sp.cos,
    "tan": sp.tan,
    "sec": sp.sec,
    "ln": sp.log,
    "exp": sp.exp,
    "sqrt": sp.sqrt,
}

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>\*\*|[-+*/^(),]))"
)


def _tokenize(text: str) -> list[tuple[str, str]]:
    tokens = []
    pos = 0
    text = text.rstrip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            raise ConfigError(f"unexpected character {text[pos]!r} at {pos} in {text!r}")
        kind = m.lastgroup
        value = m.group(kind)
        if kind == "op" and value == "**":
            value = "^"
        tokens.append((kind, value))
        pos = m.end()
    return tokens


class _Parser:
    def __init__(self, text: str, symbols: Mapping[str, sp.Expr]):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0
        self.symbols = symbols

    def peek(self):
        return self.tokens[self.i] if self.i < len(self.tokens) else (None, None)

    def take(self, value=None):
        kind, tok = self.peek()
        if kind is None:
            raise ConfigError(f"unexpected end of expression {self.text!r}")
        if value is not None and tok != value:
            raise ConfigError(f"expected {value!r}, got {tok!r} in {self.text!r}")
        self.i += 1
        return kind, tok

    def parse(self) -> sp.Expr:
        if not self.tokens:
            raise ConfigError("empty expression")
        out = self.expr()
        if self.i != len(self.tokens):
            raise ConfigError(f"trailing input {self.peek()[1]!r} in {self.text!r}")
        return out

    def expr(self):
        out = self.term()
        while self.peek()[1] in ("+", "-"):
            _, op = self.take()
            rhs = self.term()
            out = out + rhs if op == "+" else out - rhs
        return out

    def term(self):
        out = self.unary()
        while self.peek()[1] in ("*", "/"):
            _, op = self.take()
            rhs = self.unary()
            out = out * rhs if op == "*" else out / rhs
        return out

    def unary(self):
        if self.peek()[1] in ("+", "-"):
            _, op = self.take()
            arg = self.unary()
            return -arg if op == "-" else arg
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek()[1] == "^":
            self.take()
            return base ** self.unary()
        return base

    def atom(self):
        kind, tok = self.take()
        if kind == "num":
            return sp.Float(tok) if any(c in tok for c in ".eE") else sp.Integer(tok)
        if kind == "name":
            if tok in _FUNCTIONS:
                self.take("(")
                arg = self.expr()
                self.take(")")
                return _FUNCTIONS[tok](arg)
            if tok == "pi":
                return sp.pi
            if tok in self.symbols:
                return self.symbols[tok]
            raise ConfigError(f"unknown name {tok!r} in {self.text!r}")
        if tok == "(":
            out = self.expr()
            self.take(")")
            return out
        raise ConfigError(f"unexpected token {tok!r} in {self.text!r}")


X1, X2 = sp.symbols("x1 x2", real=True)


def parse_expression(
    text: str,
    variables: Iterable[str] = ("x1",),
    params: Mapping[str, float] | None = None,
) -> sp.Expr:
    """Parse ``text`` into a sympy expression in ``x1`` (and optionally ``x2``).

    Parameter names are substituted by their numeric values.
    """
    symbols: dict[str, sp.Expr] = {}
    for name in variables:
        symbols[name] = {"x1": X1, "x2": X2}.get(name) or sp.Symbol(name, real=True)
    for name, value in (params or {}).items():
        if name in symbols or name in _FUNCTIONS or name == "pi":
            raise ConfigError(f"parameter name {name!r} shadows a reserved name")
        symbols[name] = sp.Float(value)
    return _Parser(text, symbols).parse()


def to_numpy(expr: sp.Expr, variables: tuple[sp.Symbol, ...] = (X1,)) -> Callable:
    """Lambdify ``expr``; constant expressions broadcast to the argument shape."""
    fn = sp.lambdify(variables, expr, modules="numpy")
    if expr.free_symbols:
        return fn

    value = float(expr)

    def const(*args):
        return value + np.zeros(np.shape(args[0]))

    return const
