"""Restricted arithmetic expressions over the coordinates x1, x2.

Grammar::

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := '-' unary | power
    power  := atom ('^' unary)?
    atom   := NUMBER | 'pi' | 'x1' | 'x2' | FUNC '(' expr ')' | '(' expr ')'
    FUNC   := exp | sin | cos

Expressions are parsed once and evaluated vectorized on (N, 2) point arrays.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ConfigError

_TOKEN = re.compile(
    r"\s*(?:(?P<number>\d+\.?\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>[-+*/^()]))"
)

FUNCTIONS: dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "exp": np.exp,
    "sin": np.sin,
    "cos": np.cos,
}
VARIABLES = ("x1", "x2")
CONSTANTS = {"pi": math.pi}

Evaluator = Callable[[np.ndarray], np.ndarray]


def _tokenize(source: str) -> list[tuple[str, str]]:
    tokens: list[tuple[str, str]] = []
    position = 0
    stripped = source.rstrip()
    while position < len(stripped):
        match = _TOKEN.match(stripped, position)
        if match is None or match.end() == position:
            raise ConfigError(f"unexpected character in expression {source!r} at {position}")
        kind = match.lastgroup
        assert kind is not None
        tokens.append((kind, match.group(kind)))
        position = match.end()
    return tokens


class _Parser:
    def __init__(self, source: str) -> None:
        self.source = source
        self.tokens = _tokenize(source)
        self.index = 0

    def _peek(self) -> tuple[str, str] | None:
        return self.tokens[self.index] if self.index < len(self.tokens) else None

    def _take(self, value: str | None = None) -> tuple[str, str]:
        token = self._peek()
        if token is None or (value is not None and token[1] != value):
            wanted = f"{value!r}" if value else "a token"
            raise ConfigError(f"expected {wanted} in expression {self.source!r}")
        self.index += 1
        return token

    def parse(self) -> Evaluator:
        node = self._expr()
        trailing = self._peek()
        if trailing is not None:
            raise ConfigError(f"trailing input {trailing[1]!r} in expression {self.source!r}")
        return node

    def _expr(self) -> Evaluator:
        node = self._term()
        while (token := self._peek()) is not None and token[1] in "+-":
            self._take()
            node = _binary(token[1], node, self._term())
        return node

    def _term(self) -> Evaluator:
        node = self._unary()
        while (token := self._peek()) is not None and token[1] in "*/":
            self._take()
            node = _binary(token[1], node, self._unary())
        return node

    def _unary(self) -> Evaluator:
        token = self._peek()
        if token is not None and token[1] == "-":
            self._take()
            inner = self._unary()
            return lambda x: -inner(x)
        return self._power()

    def _power(self) -> Evaluator:
        base = self._atom()
        token = self._peek()
        if token is not None and token[1] == "^":
            self._take()
            return _binary("^", base, self._unary())
        return base

    def _atom(self) -> Evaluator:
        kind, value = self._take()
        if kind == "number":
            constant = float(value)
            return lambda x: np.full(x.shape[0], constant)
        if kind == "name":
            if value in VARIABLES:
                column = VARIABLES.index(value)
                return lambda x: x[:, column]
            if value in CONSTANTS:
                constant = CONSTANTS[value]
                return lambda x: np.full(x.shape[0], constant)
            if value in FUNCTIONS:
                function = FUNCTIONS[value]
                self._take("(")
                argument = self._expr()
                self._take(")")
                return lambda x: function(argument(x))
            raise ConfigError(f"unknown name {value!r} in expression {self.source!r}")
        if value == "(":
            node = self._expr()
            self._take(")")
            return node
        raise ConfigError(f"unexpected {value!r} in expression {self.source!r}")


def _binary(op: str, left: Evaluator, right: Evaluator) -> Evaluator:
    if op == "+":
        return lambda x: left(x) + right(x)
    if op == "-":
        return lambda x: left(x) - right(x)
    if op == "*":
        return lambda x: left(x) * right(x)
    if op == "/":
        return lambda x: left(x) / right(x)
    return lambda x: np.power(left(x), right(x))


@dataclass(frozen=True, eq=False)
class Expression:
    """A parsed expression; calling it on (N, 2) points returns N values."""

    source: str
    _evaluate: Evaluator

    def __call__(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        return np.asarray(self._evaluate(points), dtype=float)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Expression) and other.source == self.source

    def __hash__(self) -> int:
        return hash(self.source)


def parse_expression(source: str | float | int) -> Expression:
    if isinstance(source, (int, float)) and not isinstance(source, bool):
        source = repr(float(source))
    if not isinstance(source, str) or not source.strip():
        raise ConfigError(f"expression must be a non-empty string, got {source!r}")
    return Expression(source=source.strip(), _evaluate=_Parser(source).parse())
