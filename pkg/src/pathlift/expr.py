"""Arithmetic expressions for scene files.

Grammar (whitespace insensitive)::

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := '-' unary | power
    power  := atom ('^' unary)?
    atom   := NUMBER | NAME | NAME '(' expr ')' | '(' expr ')'

so ``^`` binds tighter than unary minus, which binds tighter than ``*`` and
``/``; ``^`` is right associative (``2^3^2 == 512``) and ``-2^2 == -4``.

Names are the path parameter ``s``, coordinates ``x1..xn``, velocity
components ``v1..vn`` and the constant ``pi``. Evaluation walks the tree with
numpy, so every variable may be an array and results broadcast.
"""

import math
import re
from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import EvaluationDomainError, ExpressionError

FUNCTIONS = {
    "sin": np.sin,
    "cos": np.cos,
    "tan": np.tan,
    "exp": np.exp,
    "log": np.log,
    "sqrt": np.sqrt,
    "cot": lambda x: np.cos(x) / np.sin(x),
}
CONSTANTS = {"pi": np.pi}

_DEFAULT_NAME = re.compile(r"^(s|[xv][1-9][0-9]*)$")


@dataclass(frozen=True)
class Num:
    value: float

    def __str__(self):
        return repr(float(self.value))


@dataclass(frozen=True)
class Name:
    id: str

    def __str__(self):
        return self.id


@dataclass(frozen=True)
class Unary:
    op: str
    operand: "Node"

    def __str__(self):
        return f"(-{self.operand})"


@dataclass(frozen=True)
class Binary:
    op: str
    left: "Node"
    right: "Node"

    def __str__(self):
        return f"({self.left} {self.op} {self.right})"


@dataclass(frozen=True)
class Call:
    func: str
    arg: "Node"

    def __str__(self):
        return f"{self.func}({self.arg})"


Node = Union[Num, Name, Unary, Binary, Call]

_TOKEN = re.compile(
    r"\s*(?:"
    r"(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^()])"
    r")"
)


def _tokenize(text):
    tokens = []
    pos = 0
    n = len(text)
    while pos < n:
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            j = pos
            while j < n and text[j].isspace():
                j += 1
            raise ExpressionError(
                f"unexpected character {text[j]!r}", len(text[:j].encode())
            )
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append((kind, m.group(kind), len(text[:start].encode())))
        pos = m.end()
    tokens.append(("end", "", len(text.encode())))
    return tokens


class _Parser:
    def __init__(self, text, allowed):
        self.tokens = _tokenize(text)
        self.i = 0
        self.allowed = allowed

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value):
        kind, text, offset = self.take()
        if text != value or kind == "end":
            found = "end of input" if kind == "end" else repr(text)
            raise ExpressionError(f"expected {value!r}, found {found}", offset)

    def parse(self):
        node = self.expr()
        kind, text, offset = self.peek()
        if kind != "end":
            raise ExpressionError(f"unexpected {text!r}", offset)
        return node

    def expr(self):
        node = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            node = Binary(op, node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()[1]
            node = Binary(op, node, self.unary())
        return node

    def unary(self):
        kind, text, _ = self.peek()
        if kind == "op" and text == "-":
            self.take()
            return Unary("-", self.unary())
        return self.power()

    def power(self):
        base = self.atom()
        kind, text, _ = self.peek()
        if kind == "op" and text == "^":
            self.take()
            return Binary("^", base, self.unary())
        return base

    def atom(self):
        kind, text, offset = self.take()
        if kind == "num":
            return Num(float(text))
        if kind == "name":
            if self.peek()[1] == "(" and self.peek()[0] == "op":
                if text not in FUNCTIONS:
                    raise ExpressionError(f"unknown function {text!r}", offset)
                self.take()
                arg = self.expr()
                self.expect(")")
                return Call(text, arg)
            if text in FUNCTIONS:
                raise ExpressionError(f"function {text!r} needs an argument", offset)
            if text not in CONSTANTS and not self._allowed(text):
                raise ExpressionError(f"unknown variable {text!r}", offset)
            return Name(text)
        if kind == "op" and text == "(":
            node = self.expr()
            self.expect(")")
            return node
        found = "end of input" if kind == "end" else repr(text)
        raise ExpressionError(f"expected a number, name or '(', found {found}", offset)

    def _allowed(self, name):
        if self.allowed is None:
            return bool(_DEFAULT_NAME.match(name))
        return name in self.allowed


def parse_expression(text, variables=None):
    """Parse ``text`` into an expression tree.

    ``variables`` restricts the admissible variable names; by default any of
    ``s``, ``x<k>`` and ``v<k>`` is accepted.
    """
    if not isinstance(text, str):
        raise ExpressionError(f"expression must be a string, got {type(text).__name__}")
    allowed = None if variables is None else frozenset(variables)
    return _Parser(text, allowed).parse()


def free_names(node):
    """Variable names referenced by ``node`` (constants excluded)."""
    if isinstance(node, Name):
        return set() if node.id in CONSTANTS else {node.id}
    if isinstance(node, Num):
        return set()
    if isinstance(node, Unary):
        return free_names(node.operand)
    if isinstance(node, Call):
        return free_names(node.arg)
    return free_names(node.left) | free_names(node.right)


def _finite(x):
    if isinstance(x, float):
        return math.isfinite(x)
    return bool(np.isfinite(x).all())


def _guard(result, inputs, what):
    if not _finite(result) and all(_finite(x) for x in inputs):
        raise EvaluationDomainError(f"{what} evaluated outside its domain")
    return result


def evaluate(node, env):
    """Evaluate ``node`` with variable values from ``env`` (scalars or arrays)."""
    with np.errstate(all="ignore"):
        return _eval(node, env)


def _eval(node, env):
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Name):
        if node.id in CONSTANTS:
            return CONSTANTS[node.id]
        try:
            return env[node.id]
        except KeyError:
            raise ExpressionError(f"no value bound for variable {node.id!r}") from None
    if isinstance(node, Unary):
        return -_eval(node.operand, env)
    if isinstance(node, Call):
        x = _eval(node.arg, env)
        if node.func == "log" and np.any(x <= 0):
            raise EvaluationDomainError("log of a nonpositive value")
        if node.func == "sqrt" and np.any(x < 0):
            raise EvaluationDomainError("sqrt of a negative value")
        return _guard(FUNCTIONS[node.func](x), [x], node.func)
    a = _eval(node.left, env)
    b = _eval(node.right, env)
    if node.op == "+":
        return a + b
    if node.op == "-":
        return a - b
    if node.op == "*":
        return a * b
    if node.op == "/":
        if np.any(b == 0):
            raise EvaluationDomainError("division by zero")
        return a / b
    return _guard(np.power(np.asarray(a, dtype=float), b), [a, b], "power")


def is_constant(node):
    return not free_names(node)


def constant_value(node):
    """Value of a variable-free expression."""
    names = free_names(node)
    if names:
        raise ExpressionError(f"expected a constant expression, found variables {sorted(names)}")
    return float(evaluate(node, {}))


def as_expression(value, variables=None):
    """Accept an expression tree, a string, or a number."""
    if isinstance(value, (Num, Name, Unary, Binary, Call)):
        return value
    if isinstance(value, bool):
        raise ExpressionError("booleans are not expressions")
    if isinstance(value, (int, float)):
        return Num(float(value))
    return parse_expression(value, variables)


def vector_function(exprs, dim_vars=None):
    """Broadcasting callable ``s -> (..., len(exprs))`` for expressions in ``s``."""
    nodes = [as_expression(e, dim_vars) for e in exprs]

    def fn(s):
        s_arr = np.asarray(s, dtype=float)
        cols = [np.broadcast_to(np.asarray(evaluate(n, {"s": s_arr}), dtype=float), s_arr.shape)
                for n in nodes]
        return np.stack(cols, axis=-1)

    return fn


def matrix_function(rows, env_builder):
    """Broadcasting matrix-valued callable built from a nested list of expressions.

    ``env_builder(*args)`` returns ``(env, shape)`` where ``shape`` is the
    broadcast shape of the batch; each entry is broadcast to that shape.
    """
    nodes = [[as_expression(e) for e in row] for row in rows]

    def fn(*args):
        env, shape = env_builder(*args)
        out = np.empty(shape + (len(nodes), len(nodes[0])))
        for i, row in enumerate(nodes):
            for j, node in enumerate(row):
                out[..., i, j] = evaluate(node, env)
        return out

    return fn
