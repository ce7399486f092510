"""A small arithmetic language for computed variables.

Grammar (``*``/``/`` bind tighter than ``+``/``-``, all left associative)::

    expr    := term (('+' | '-') term)*
    term    := unary (('*' | '/') unary)*
    unary   := '-' unary | primary
    primary := NUMBER | NAME | '(' expr ')'

``×`` and ``÷`` are accepted as aliases.  Names look like ``boiler.temp``.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

from plantbus.errors import EvalError, ExprSyntaxError, UnknownIdentifier


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Neg:
    operand: "Node"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Node"
    right: "Node"


Node = Num | Var | Neg | BinOp

_TOKEN = re.compile(r"""
    (?P<ws>\s+)
  | (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z0-9_.]*)
  | (?P<op>[-+*/()×÷])
""", re.VERBOSE)
_ALIASES = {"×": "*", "÷": "/"}


def tokenize(text: str):
    pos = 0
    out = []
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise ExprSyntaxError(f"unexpected character {text[pos]!r}", pos)
        kind = m.lastgroup
        if kind != "ws":
            value = m.group()
            if kind == "op":
                value = _ALIASES.get(value, value)
            out.append((kind, value, pos))
        pos = m.end()
    out.append(("end", "", len(text)))
    return out


class _Parser:
    def __init__(self, text):
        self.tokens = tokenize(text)
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
        kind, value, _ = self.peek()
        if kind == "op" and value == "-":
            self.take()
            return Neg(self.unary())
        return self.primary()

    def primary(self):
        kind, value, pos = self.take()
        if kind == "num":
            return Num(float(value))
        if kind == "name":
            return Var(value)
        if kind == "op" and value == "(":
            node = self.expr()
            kind, value, pos = self.take()
            if value != ")":
                raise ExprSyntaxError("expected ')'", pos)
            return node
        what = "end of input" if kind == "end" else repr(value)
        raise ExprSyntaxError(f"unexpected {what}", pos)


def parse_expr(text: str) -> Node:
    """Parse ``text`` into a tree.

    >>> evaluate(parse_expr("a + b * 2"), {"a": 1, "b": 3})
    7.0
    """
    p = _Parser(text)
    node = p.expr()
    kind, value, pos = p.peek()
    if kind != "end":
        raise ExprSyntaxError(f"unexpected {value!r}", pos)
    return node


def identifiers(node: Node) -> set[str]:
    if isinstance(node, Var):
        return {node.name}
    if isinstance(node, Neg):
        return identifiers(node.operand)
    if isinstance(node, BinOp):
        return identifiers(node.left) | identifiers(node.right)
    return set()


def is_constant(node: Node) -> bool:
    return not identifiers(node)


def evaluate(node: Node, env) -> float:
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Var):
        try:
            return float(env[node.name])
        except KeyError:
            raise UnknownIdentifier(f"unknown identifier {node.name!r}") from None
    if isinstance(node, Neg):
        return -evaluate(node.operand, env)
    a = evaluate(node.left, env)
    b = evaluate(node.right, env)
    op = node.op
    if op == "+":
        r = a + b
    elif op == "-":
        r = a - b
    elif op == "*":
        r = a * b
    else:
        if b == 0:
            raise EvalError("division by zero")
        r = a / b
    if not math.isfinite(r):
        raise EvalError(f"non-finite intermediate result {r!r}")
    return r


def bind(node: Node, names) -> Node:
    """Check ``node`` against the allowed input ``names``.

    Raises :class:`UnknownIdentifier` for foreign names and :class:`EvalError`
    when a divisor is a constant sub-expression equal to zero.
    """
    names = set(names)
    unknown = sorted(identifiers(node) - names)
    if unknown:
        raise UnknownIdentifier(f"unknown identifier {unknown[0]!r}")
    _check_const_divisors(node)
    return node


def _check_const_divisors(node):
    if isinstance(node, Neg):
        _check_const_divisors(node.operand)
    elif isinstance(node, BinOp):
        _check_const_divisors(node.left)
        _check_const_divisors(node.right)
        if node.op == "/" and is_constant(node.right):
            try:
                zero = evaluate(node.right, {}) == 0
            except EvalError:
                zero = False
            if zero:
                raise EvalError("division by a constant zero")


_PREC = {"+": 1, "-": 1, "*": 2, "/": 2}


def to_text(node: Node) -> str:
    """Render with minimal parentheses; ``parse_expr(to_text(t)) == t``."""
    if isinstance(node, Num):
        return repr(node.value)
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Neg):
        inner = to_text(node.operand)
        return "-" + (f"({inner})" if isinstance(node.operand, BinOp) else inner)
    p = _PREC[node.op]
    left = to_text(node.left)
    if isinstance(node.left, BinOp) and _PREC[node.left.op] < p:
        left = f"({left})"
    right = to_text(node.right)
    if isinstance(node.right, BinOp) and _PREC[node.right.op] <= p:
        right = f"({right})"
    return f"{left} {node.op} {right}"
