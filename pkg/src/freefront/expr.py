"""
Closed-form expressions for boundary data, initial data and manufactured fields.

Grammar (highest precedence first)::

    atom    := number | constant | variable | name '(' args ')' | '(' expr ')'
    power   := atom ['^' unary]            # right-associative
    unary   := '-' unary | power
    term    := unary (('*' | '/') unary)*
    expr    := term (('+' | '-') term)*

So ``-2^2 == -4`` and ``2^3^2 == 512``. Functions: sin, cos, exp, cosh, sinh,
tanh, sqrt, abs, pow(a, b) and piecewise(threshold, left, right), which
takes ``left`` where the switching variable is <= threshold. Constants: pi, e.

Evaluation is vectorised over numpy arrays so that a field g(xi, t) can be
evaluated on a whole grid at once.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Union

import numpy as np

from .core import DomainError, InvalidInput

__all__ = [
    "Expr",
    "ExprSyntaxError",
    "UnknownIdentifier",
    "parse",
    "evaluate",
    "render",
    "numeric_derivative",
]

DEFAULT_VARIABLES = ("t", "x", "xi")

CONSTANTS = {"pi": math.pi, "e": math.e}

UNARY_FUNCTIONS = {
    "sin": np.sin,
    "cos": np.cos,
    "exp": np.exp,
    "cosh": np.cosh,
    "sinh": np.sinh,
    "tanh": np.tanh,
    "sqrt": np.sqrt,
    "abs": np.abs,
}
ARITY = {**{name: 1 for name in UNARY_FUNCTIONS}, "pow": 2, "piecewise": 3}


class ExprSyntaxError(SyntaxError):
    """Malformed expression text. ``pos`` is the 0-based character offset."""

    def __init__(self, message: str, text: str, pos: int):
        self.pos = pos
        self.text = text
        super().__init__(f"{message} at position {pos}: {text!r}")


class UnknownIdentifier(ExprSyntaxError):
    pass


# -- AST nodes ---------------------------------------------------------------


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


@dataclass(frozen=True)
class Call:
    name: str
    args: tuple


@dataclass(frozen=True)
class Piecewise:
    threshold: "Node"
    left: "Node"
    right: "Node"


Node = Union[Num, Var, Neg, BinOp, Call, Piecewise]


@dataclass(frozen=True)
class Expr:
    """A parsed expression.

    ``variables`` lists the names the expression may reference; ``primary``
    is the variable piecewise() switches on and the one a bare positional
    value binds to.
    """

    root: Node
    variables: tuple
    primary: str
    text: str = ""

    def __post_init__(self):
        object.__setattr__(self, "_used", frozenset(_collect_vars(self.root)))
        object.__setattr__(self, "_fn", _compile(self.root, self.primary))

    def __call__(self, *args, **env):
        return evaluate(self, *args, **env)

    def uses(self) -> frozenset:
        """Variable names that actually occur in the tree."""
        return self._used


def _collect_vars(root: Node) -> set:
    found = set()
    stack = [root]
    while stack:
        node = stack.pop()
        if isinstance(node, Var):
            found.add(node.name)
        elif isinstance(node, Neg):
            stack.append(node.operand)
        elif isinstance(node, BinOp):
            stack += [node.left, node.right]
        elif isinstance(node, Call):
            stack += list(node.args)
        elif isinstance(node, Piecewise):
            stack += [node.threshold, node.left, node.right]
    return found


# -- parsing -----------------------------------------------------------------

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_]\w*)|(?P<op>[-+*/^(),]))"
)


def _tokenize(text: str):
    tokens = []
    pos = 0
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if m is None:
            bad = pos + len(text[pos:]) - len(text[pos:].lstrip())
            raise ExprSyntaxError(f"unexpected character {text[bad]!r}", text, bad)
        kind = m.lastgroup
        tokens.append((kind, m.group(kind), m.start(kind)))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str, allowed: tuple):
        self.text = text
        self.allowed = allowed
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def advance(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value: str):
        kind, tok, pos = self.advance()
        if tok != value or kind != "op":
            found = "end of input" if kind == "end" else repr(tok)
            raise ExprSyntaxError(f"expected {value!r}, found {found}", self.text, pos)

    def parse(self) -> Node:
        node = self.expr()
        kind, tok, pos = self.peek()
        if kind != "end":
            raise ExprSyntaxError(f"unexpected {tok!r}", self.text, pos)
        return node

    def expr(self) -> Node:
        node = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.advance()[1]
            node = BinOp(op, node, self.term())
        return node

    def term(self) -> Node:
        node = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.advance()[1]
            node = BinOp(op, node, self.unary())
        return node

    def unary(self) -> Node:
        if self.peek()[:2] == ("op", "-"):
            self.advance()
            return Neg(self.unary())
        if self.peek()[:2] == ("op", "+"):
            self.advance()
            return self.unary()
        return self.power()

    def power(self) -> Node:
        base = self.atom()
        if self.peek()[:2] == ("op", "^"):
            self.advance()
            return BinOp("^", base, self.unary())
        return base

    def atom(self) -> Node:
        kind, tok, pos = self.advance()
        if kind == "num":
            return Num(float(tok))
        if kind == "name":
            if self.peek()[:2] == ("op", "("):
                return self.call(tok, pos)
            if tok in self.allowed:
                return Var(tok)
            if tok in CONSTANTS:
                return Num(CONSTANTS[tok])
            raise UnknownIdentifier(f"unknown identifier {tok!r}", self.text, pos)
        if (kind, tok) == ("op", "("):
            node = self.expr()
            self.expect(")")
            return node
        found = "end of input" if kind == "end" else repr(tok)
        raise ExprSyntaxError(f"unexpected {found}", self.text, pos)

    def call(self, name: str, pos: int) -> Node:
        if name not in ARITY:
            raise UnknownIdentifier(f"unknown function {name!r}", self.text, pos)
        self.expect("(")
        args = [self.expr()]
        while self.peek()[:2] == ("op", ","):
            self.advance()
            args.append(self.expr())
        self.expect(")")
        if len(args) != ARITY[name]:
            raise ExprSyntaxError(f"{name}() takes {ARITY[name]} argument(s), got {len(args)}", self.text, pos)
        if name == "piecewise":
            return Piecewise(*args)
        return Call(name, tuple(args))


def parse(text: str, variables=None) -> Expr:
    """Parse ``text`` into an Expr.

    With ``variables=None`` the expression may use at most one of t, x, xi.
    Passing a tuple such as ``("xi", "t")`` allows several; the first one is
    the primary variable.
    """
    if not isinstance(text, str) or not text.strip():
        raise ExprSyntaxError("empty expression", str(text), 0)
    allowed = DEFAULT_VARIABLES if variables is None else tuple(variables)
    root = _Parser(text, allowed).parse()
    expr = Expr(root, allowed, allowed[0], text)
    if variables is None:
        used = sorted(expr.uses())
        if len(used) > 1:
            raise ExprSyntaxError(f"expression mixes variables {used}", text, 0)
        name = used[0] if used else "t"
        expr = Expr(root, (name,), name, text)
    return expr


# -- evaluation --------------------------------------------------------------
#
# Trees are compiled once into nested closures taking an environment dict;
# this avoids per-node type dispatch when a field is evaluated every step.


def _divide(a, b):
    if np.any(np.asarray(b) == 0):
        raise DomainError("division by zero")
    return a / b


def _power(a, b):
    result = np.power(np.asarray(a, dtype=float), b)
    if np.any(np.isnan(result) & np.isfinite(a) & np.isfinite(b)):
        raise DomainError("power of a negative base with a non-integer exponent")
    return result


def _sqrt(a):
    if np.any(np.asarray(a) < 0):
        raise DomainError("sqrt of a negative number")
    return np.sqrt(a)


_BINARY = {"+": lambda a, b: a + b, "-": lambda a, b: a - b, "*": lambda a, b: a * b, "/": _divide, "^": _power}


def _compile(node: Node, primary: str):
    if isinstance(node, Num):
        value = node.value
        return lambda env: value
    if isinstance(node, Var):
        name = node.name
        return lambda env: env[name]
    if isinstance(node, Neg):
        inner = _compile(node.operand, primary)
        return lambda env: -inner(env)
    if isinstance(node, BinOp):
        op = _BINARY[node.op]
        left, right = _compile(node.left, primary), _compile(node.right, primary)
        return lambda env: op(left(env), right(env))
    if isinstance(node, Call):
        args = [_compile(a, primary) for a in node.args]
        if node.name == "pow":
            base, exponent = args
            return lambda env: _power(base(env), exponent(env))
        fn = _sqrt if node.name == "sqrt" else UNARY_FUNCTIONS[node.name]
        arg = args[0]
        return lambda env: fn(arg(env))
    if isinstance(node, Piecewise):
        threshold, left, right = (_compile(n, primary) for n in (node.threshold, node.left, node.right))
        return lambda env: _piecewise(env, primary, threshold, left, right)
    raise TypeError(f"not an expression node: {node!r}")


def _piecewise(env, primary, threshold, left, right):
    cut = threshold(env)
    left_mask = np.asarray(env[primary] <= cut)
    if left_mask.ndim == 0:
        return left(env) if left_mask else right(env)
    shape = np.broadcast_shapes(*(np.shape(v) for v in env.values()), np.shape(cut))
    left_mask = np.broadcast_to(left_mask, shape)
    out = np.empty(shape)
    # each branch only sees its own points, so e.g. sqrt(t - 1) on the right is safe
    for branch, mask in ((left, left_mask), (right, ~left_mask)):
        if mask.any():
            sub = {k: np.broadcast_to(v, shape)[mask] for k, v in env.items()}
            out[mask] = branch(sub)
    return out


def evaluate(expr: Expr, value=None, **env):
    """Evaluate ``expr``; ``value`` binds the primary variable.

    Scalars in give a Python float back; arrays give an ndarray.
    """
    if value is not None:
        env[expr.primary] = value
    missing = expr.uses() - env.keys()
    if missing:
        raise InvalidInput(f"no value supplied for {sorted(missing)}")
    scalar = True
    for k, v in env.items():
        if isinstance(v, np.ndarray) and v.ndim > 0:
            scalar = False
            if v.dtype != float:
                env[k] = v.astype(float)
        elif np.ndim(v) == 0:
            env[k] = float(v)
        else:
            scalar = False
            env[k] = np.asarray(v, dtype=float)
    with np.errstate(all="ignore"):
        result = expr._fn(env)
    if scalar:
        return float(result)
    shape = np.broadcast_shapes(*(np.shape(v) for v in env.values()))
    if np.shape(result) == shape:
        return np.asarray(result, dtype=float)
    return np.broadcast_to(np.asarray(result, dtype=float), shape).copy()


# -- rendering ---------------------------------------------------------------


def _render(node: Node) -> str:
    if isinstance(node, Num):
        return repr(node.value) if node.value >= 0 else f"({node.value!r})"
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Neg):
        return f"(-{_render(node.operand)})"
    if isinstance(node, BinOp):
        return f"({_render(node.left)} {node.op} {_render(node.right)})"
    if isinstance(node, Call):
        return f"{node.name}({', '.join(_render(a) for a in node.args)})"
    if isinstance(node, Piecewise):
        return f"piecewise({_render(node.threshold)}, {_render(node.left)}, {_render(node.right)})"
    raise TypeError(f"not an expression node: {node!r}")


def render(expr: Expr) -> str:
    """Fully parenthesised text that parses back to an equivalent tree."""
    return _render(expr.root)


# -- numerical differentiation ----------------------------------------------


def numeric_derivative(func, value: float, order: int = 1, h: float = 1e-5, side: str = "central") -> float:
    """Finite-difference derivative of a scalar function (Expr or callable).

    ``side`` selects the stencil: "central", or "forward"/"backward" for
    endpoints. Central and one-sided first-derivative stencils are
    second-order accurate; the one-sided second derivative uses five points
    and is third-order, so a larger h can keep roundoff down.
    """
    if order not in (1, 2):
        raise InvalidInput(f"order must be 1 or 2, got {order!r}")
    if not h > 0:
        raise InvalidInput(f"h must be > 0, got {h!r}")
    if side not in ("central", "forward", "backward"):
        raise InvalidInput(f"unknown side {side!r}")
    f = lambda z: float(func(z))  # noqa: E731
    x = float(value)
    if side == "central":
        if order == 1:
            return (f(x + h) - f(x - h)) / (2 * h)
        return (f(x + h) - 2 * f(x) + f(x - h)) / (h * h)
    sgn = 1.0 if side == "forward" else -1.0
    if order == 1:
        return sgn * (-3 * f(x) + 4 * f(x + sgn * h) - f(x + 2 * sgn * h)) / (2 * h)
    w = (35.0, -104.0, 114.0, -56.0, 11.0)
    return sum(c * f(x + j * sgn * h) for j, c in enumerate(w)) / (12 * h * h)
