"""Scalar coefficient expressions.

Grammar, loosest binding first::

    expr    := term (('+' | '-') term)*
    term    := unary (('*' | '/') unary)*
    unary   := '-' unary | power
    power   := primary ('^' exponent)?        # right-associative
    primary := NUMBER | NAME | FUNC '(' expr ')' | '(' expr ')'

``^`` only accepts a nonnegative integer literal as exponent, so
``-x^2`` is ``-(x^2)`` and ``x^2^3`` is rejected.  Numbers may be decimal
or C99 hexadecimal float literals (``0x1.8p-3``).  Offsets reported in
errors are byte offsets into the UTF-8 source.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Iterable, Union

import numpy as np

from .errors import (ExponentError, ExprEvaluationError, ExprSyntaxError,
                     UnknownIdentifierError)

FUNCTIONS = {"sin": np.sin, "cos": np.cos, "exp": np.exp}
COEFFICIENT_VARIABLES = ("x", "xd")
HISTORY_VARIABLES = ("t",)


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


@dataclass(frozen=True)
class Pow:
    base: "Expr"
    exponent: int


@dataclass(frozen=True)
class Call:
    func: str
    arg: "Expr"


Expr = Union[Num, Var, Neg, BinOp, Pow, Call]

_TOKEN_RE = re.compile(r"""
    (?P<ws>\s+)
  | (?P<hex>0[xX](?:[0-9a-fA-F]+\.?[0-9a-fA-F]*|\.[0-9a-fA-F]+)(?:[pP][+-]?[0-9]+)?)
  | (?P<num>(?:[0-9]+\.?[0-9]*|\.[0-9]+)(?:[eE][+-]?[0-9]+)?)
  | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[-+*/^()])
""", re.VERBOSE)


@dataclass(frozen=True)
class _Token:
    kind: str  # "num", "name", "op", "end"
    text: str
    offset: int  # byte offset
    value: float = 0.0


def _tokenize(source: str):
    tokens = []
    pos = 0
    byte_pos = 0
    while pos < len(source):
        m = _TOKEN_RE.match(source, pos)
        if m is None:
            raise ExprSyntaxError(f"unexpected character {source[pos]!r}", byte_pos)
        kind = m.lastgroup
        text = m.group()
        if kind == "hex":
            kind = "num"
            literal = text if re.search("[pP]", text) else text + "p0"
            try:
                value = float.fromhex(literal)
            except ValueError:
                raise ExprSyntaxError(f"malformed hexadecimal literal {text!r}", byte_pos) from None
        elif kind == "num":
            value = float(text)
        else:
            value = 0.0
        if kind == "num" and not math.isfinite(value):
            raise ExprSyntaxError(f"literal {text!r} is not a finite number", byte_pos)
        if kind != "ws":
            tokens.append(_Token(kind, text, byte_pos, value))
        pos = m.end()
        byte_pos += len(text.encode("utf-8"))
    tokens.append(_Token("end", "", byte_pos))
    return tokens


def _describe(tok: _Token) -> str:
    return "end of input" if tok.kind == "end" else repr(tok.text)


class _Parser:
    def __init__(self, source: str, variables: Iterable[str]):
        self.tokens = _tokenize(source)
        self.i = 0
        self.variables = frozenset(variables)

    @property
    def tok(self) -> _Token:
        return self.tokens[self.i]

    def _take(self) -> _Token:
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def _is_op(self, *ops) -> bool:
        return self.tok.kind == "op" and self.tok.text in ops

    def _expect_op(self, op: str):
        if not self._is_op(op):
            raise ExprSyntaxError(f"expected {op!r} but found {_describe(self.tok)}", self.tok.offset)
        self._take()

    def parse(self) -> Expr:
        node = self.expr()
        if self.tok.kind != "end":
            raise ExprSyntaxError(f"expected operator or end of input but found {_describe(self.tok)}",
                                  self.tok.offset)
        return node

    def expr(self) -> Expr:
        node = self.term()
        while self._is_op("+", "-"):
            op = self._take().text
            node = BinOp(op, node, self.term())
        return node

    def term(self) -> Expr:
        node = self.unary()
        while self._is_op("*", "/"):
            op = self._take().text
            node = BinOp(op, node, self.unary())
        return node

    def unary(self) -> Expr:
        if self._is_op("-"):
            self._take()
            return Neg(self.unary())
        return self.power()

    def power(self) -> Expr:
        base = self.primary()
        if not self._is_op("^"):
            return base
        self._take()
        start = self.tok
        exponent = self.unary()
        if isinstance(exponent, Neg):
            raise ExponentError("exponent must be nonnegative", start.offset)
        if not (isinstance(exponent, Num) and start.kind == "num"
                and re.fullmatch(r"[0-9]+", start.text)):
            raise ExponentError("exponent must be a nonnegative integer literal", start.offset)
        return Pow(base, int(start.text))

    def primary(self) -> Expr:
        tok = self.tok
        if tok.kind == "num":
            self._take()
            return Num(tok.value)
        if tok.kind == "name":
            self._take()
            if tok.text in FUNCTIONS:
                self._expect_op("(")
                arg = self.expr()
                self._expect_op(")")
                return Call(tok.text, arg)
            if tok.text not in self.variables:
                known = ", ".join(sorted(self.variables | set(FUNCTIONS)))
                raise UnknownIdentifierError(f"unknown identifier {tok.text!r} (known: {known})",
                                             tok.offset)
            return Var(tok.text)
        if self._is_op("("):
            self._take()
            node = self.expr()
            self._expect_op(")")
            return node
        raise ExprSyntaxError(
            f"expected number, variable, function or '(' but found {_describe(tok)}", tok.offset)


def parse_expr(source: Union[str, bytes], variables: Iterable[str] = COEFFICIENT_VARIABLES) -> Expr:
    if isinstance(source, bytes):
        source = source.decode("utf-8")
    return _Parser(source, variables).parse()


# precedence levels used by the printer
_PREC = {"+": 1, "-": 1, "*": 2, "/": 2}
_NEG, _POW, _ATOM = 3, 4, 5


def _prec(node: Expr) -> int:
    if isinstance(node, BinOp):
        return _PREC[node.op]
    if isinstance(node, Neg):
        return _NEG
    if isinstance(node, Pow):
        return _POW
    return _ATOM


def to_source(node: Expr) -> str:
    """Print with the fewest parentheses that reparse to the same tree."""
    if isinstance(node, Num):
        return repr(float(node.value))
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Call):
        return f"{node.func}({to_source(node.arg)})"
    if isinstance(node, Neg):
        inner = to_source(node.operand)
        return "-" + (f"({inner})" if _prec(node.operand) < _NEG else inner)
    if isinstance(node, Pow):
        base = to_source(node.base)
        if _prec(node.base) < _ATOM:
            base = f"({base})"
        return f"{base}^{node.exponent}"
    p = _PREC[node.op]
    left, right = to_source(node.left), to_source(node.right)
    if _prec(node.left) < p:
        left = f"({left})"
    if _prec(node.right) <= p:
        right = f"({right})"
    return f"{left} {node.op} {right}"


def variables_of(node: Expr) -> frozenset:
    if isinstance(node, Var):
        return frozenset([node.name])
    if isinstance(node, Num):
        return frozenset()
    if isinstance(node, (Neg, Call)):
        return variables_of(node.operand if isinstance(node, Neg) else node.arg)
    if isinstance(node, Pow):
        return variables_of(node.base)
    return variables_of(node.left) | variables_of(node.right)


def _divide(a, b):
    if np.any(np.asarray(b) == 0):
        raise ExprEvaluationError("division by zero")
    return a / b


_BINOPS = {
    "+": lambda a, b: a + b,
    "-": lambda a, b: a - b,
    "*": lambda a, b: a * b,
    "/": _divide,
}


def _compile(node: Expr):
    if isinstance(node, Num):
        value = float(node.value)
        return lambda env: value
    if isinstance(node, Var):
        name = node.name
        return lambda env: env[name]
    if isinstance(node, Neg):
        inner = _compile(node.operand)
        return lambda env: -inner(env)
    if isinstance(node, Pow):
        base, n = _compile(node.base), node.exponent
        return lambda env: base(env) ** n
    if isinstance(node, Call):
        fn, arg = FUNCTIONS[node.func], _compile(node.arg)
        return lambda env: fn(arg(env))
    op = _BINOPS[node.op]
    left, right = _compile(node.left), _compile(node.right)
    return lambda env: op(left(env), right(env))


class Compiled:
    """Expression compiled to nested closures; call with keyword values."""

    def __init__(self, node: Expr):
        self.node = node
        self._fn = _compile(node)

    def __call__(self, **env):
        try:
            return self._fn(env)
        except KeyError as exc:
            raise ExprEvaluationError(f"no value bound for variable {exc.args[0]!r}") from None

    def __getstate__(self):
        return self.node

    def __setstate__(self, node):
        self.__init__(node)


def evaluate(node: Expr, **env):
    return Compiled(node)(**env)
