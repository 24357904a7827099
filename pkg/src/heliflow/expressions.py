"""Mini-language for initial-condition and potential expressions.

Accepted grammar (left-associative binaries, precedence ^ above unary minus
above * / above + -):

    expr   := term  (("+" | "-") term)*
    term   := unary (("*" | "/") unary)*
    unary  := "-" unary | power
    power  := atom ("^" atom)*
    atom   := NUMBER | NAME | NAME "(" expr ")" | "(" expr ")"

Names are the coordinates x1..x3, the time t, the constant pi, and scenario
parameters; functions are sin, cos, exp, tanh, sqrt.  Division and sqrt are
domain-checked at evaluation and failures report a sample point.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Union

import numpy as np

from .fields import Grid, ScalarField

FUNCTIONS = ("sin", "cos", "exp", "tanh", "sqrt")
CONSTANTS = {"pi": np.pi}


class ExpressionError(ValueError):
    """Parse or evaluation failure; position is a source offset when known."""

    def __init__(self, message, position=None):
        self.position = position
        if position is not None:
            message = f"{message} (at position {position})"
        super().__init__(message)


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Name:
    ident: str


@dataclass(frozen=True)
class Neg:
    arg: "Expr"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Call:
    fn: str
    arg: "Expr"


Expr = Union[Num, Name, Neg, BinOp, Call]

_TOKEN = re.compile(r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
                    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
                    r"|(?P<op>[-+*/^()]))")


def _tokenize(src):
    tokens = []
    pos = 0
    while pos < len(src):
        m = _TOKEN.match(src, pos)
        if m is None:
            stripped = src[pos:].lstrip()
            if not stripped:
                break
            bad_at = len(src) - len(stripped)
            raise ExpressionError(f"unexpected character {stripped[0]!r}", bad_at)
        if m.lastgroup == "num":
            tokens.append(("num", float(m.group("num")), m.start("num")))
        elif m.lastgroup == "name":
            tokens.append(("name", m.group("name"), m.start("name")))
        else:
            tokens.append(("op", m.group("op"), m.start("op")))
        pos = m.end()
    tokens.append(("end", "", len(src)))
    return tokens


class _Parser:
    def __init__(self, src):
        self.src = src
        self.tokens = _tokenize(src)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def next(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def fail(self, message):
        raise ExpressionError(message, self.peek()[2])

    def expect_op(self, op):
        kind, val, _ = self.peek()
        if kind != "op" or val != op:
            self.fail(f"expected {op!r}")
        self.next()

    def parse(self):
        e = self.expr()
        kind, val, _ = self.peek()
        if kind != "end":
            self.fail(f"unexpected trailing input {val!r}")
        return e

    def expr(self):
        e = self.term()
        while self.peek()[:2] in (("op", "+"), ("op", "-")):
            op = self.next()[1]
            e = BinOp(op, e, self.term())
        return e

    def term(self):
        e = self.unary()
        while self.peek()[:2] in (("op", "*"), ("op", "/")):
            op = self.next()[1]
            e = BinOp(op, e, self.unary())
        return e

    def unary(self):
        if self.peek()[:2] == ("op", "-"):
            self.next()
            return Neg(self.unary())
        return self.power()

    def power(self):
        e = self.atom()
        while self.peek()[:2] == ("op", "^"):
            self.next()
            e = BinOp("^", e, self.atom())
        return e

    def atom(self):
        kind, val, pos = self.peek()
        if kind == "num":
            self.next()
            return Num(val)
        if kind == "name":
            self.next()
            if self.peek()[:2] == ("op", "("):
                if val not in FUNCTIONS:
                    raise ExpressionError(f"unknown function {val!r}", pos)
                self.next()
                arg = self.expr()
                self.expect_op(")")
                return Call(val, arg)
            return Name(val)
        if (kind, val) == ("op", "("):
            self.next()
            e = self.expr()
            self.expect_op(")")
            return e
        self.fail("expected a number, name or parenthesized expression")


def parse_expression(src: str) -> Expr:
    """Parse source text to an AST; raises ExpressionError with a position."""
    if not src.strip():
        raise ExpressionError("empty expression", 0)
    return _Parser(src).parse()


# ---------------------------------------------------------------------------
# canonical printing
# ---------------------------------------------------------------------------

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "neg": 3, "^": 4, "atom": 5}


def _prec(e):
    if isinstance(e, BinOp):
        return _PREC[e.op]
    if isinstance(e, Neg):
        return _PREC["neg"]
    return _PREC["atom"]


def to_source(e: Expr) -> str:
    """Canonical rendering; parse(to_source(parse(s))) reproduces the AST."""
    if isinstance(e, Num):
        return format(e.value, ".17g")
    if isinstance(e, Name):
        return e.ident
    if isinstance(e, Call):
        return f"{e.fn}({to_source(e.arg)})"
    if isinstance(e, Neg):
        inner = to_source(e.arg)
        if _prec(e.arg) < _PREC["neg"]:
            inner = f"({inner})"
        return f"-{inner}"
    left = to_source(e.left)
    right = to_source(e.right)
    p = _PREC[e.op]
    if _prec(e.left) < p:
        left = f"({left})"
    if _prec(e.right) <= p:  # left-associative: parenthesize equal-level right side
        right = f"({right})"
    pad = " " if e.op in "+-" else ""
    return f"{left}{pad}{e.op}{pad}{right}"


def free_names(e: Expr) -> set[str]:
    if isinstance(e, Num):
        return set()
    if isinstance(e, Name):
        return {e.ident}
    if isinstance(e, Neg):
        return free_names(e.arg)
    if isinstance(e, Call):
        return free_names(e.arg)
    return free_names(e.left) | free_names(e.right)


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------

def _where(mask, env):
    """Human-readable sample point for the first True entry of mask."""
    idx = np.argwhere(mask)
    if idx.size == 0:
        return "unknown point"
    first = tuple(idx[0])
    coords = []
    for axis in range(len(first)):
        name = f"x{axis + 1}"
        arr = env.get(name)
        if arr is not None and np.ndim(arr) == len(first):
            sl = [0] * len(first)
            sl[axis] = first[axis]
            coords.append(f"{name}={np.asarray(arr)[tuple(sl)]:.6g}")
    return ", ".join(coords) if coords else f"grid index {first}"


def eval_expr(e: Expr, env: dict):
    """Evaluate on an environment of floats/arrays, domain-checking / and sqrt."""
    if isinstance(e, Num):
        return e.value
    if isinstance(e, Name):
        if e.ident not in env:
            raise ExpressionError(f"unknown identifier {e.ident!r}")
        return env[e.ident]
    if isinstance(e, Neg):
        return -eval_expr(e.arg, env)
    if isinstance(e, Call):
        arg = eval_expr(e.arg, env)
        if e.fn == "sqrt":
            bad = np.asarray(arg) < 0
            if bad.any():
                raise ExpressionError(f"sqrt of negative value at {_where(bad, env)}")
            return np.sqrt(arg)
        return getattr(np, e.fn)(arg)
    left = eval_expr(e.left, env)
    right = eval_expr(e.right, env)
    if e.op == "+":
        return left + right
    if e.op == "-":
        return left - right
    if e.op == "*":
        return left * right
    if e.op == "/":
        bad = np.asarray(right) == 0
        if bad.any():
            raise ExpressionError(f"division by zero at {_where(bad, env)}")
        return left / right
    with np.errstate(all="ignore"):
        return left ** right


def eval_on_grid(e: Expr, grid: Grid, params=None, t=0.0) -> ScalarField:
    """Pointwise evaluation on the grid nodes; params are extra named values."""
    env = dict(CONSTANTS)
    for axis, arr in enumerate(grid.coords()):
        env[f"x{axis + 1}"] = arr
    env["t"] = t
    if params:
        env.update(params)
    unknown = sorted(free_names(e) - env.keys())
    if unknown:
        raise ExpressionError(f"unknown identifier {unknown[0]!r}")
    vals = eval_expr(e, env)
    vals = np.broadcast_to(np.asarray(vals, dtype=np.float64), grid.n).copy()
    if not np.isfinite(vals).all():
        bad = ~np.isfinite(vals)
        raise ExpressionError(f"non-finite result at {_where(bad, env)}")
    return ScalarField(grid, vals)
