"""Scalar fields given as expression strings.

Parses a small arithmetic language into an immutable AST and evaluates it either
to a float or to a second-order jet (value, gradient, Hessian) by forward-mode
differentiation. A central-difference oracle is provided for cross-checking.

Grammar (highest precedence first):
    atom   := NUMBER | IDENT | IDENT '(' expr ')' | '(' expr ')'
    power  := atom ('^' unary)?          right-associative
    unary  := '-' unary | power
    term   := unary (('*' | '/') unary)*
    expr   := term (('+' | '-') term)*

Variable naming used across the package: x1..xm (base), u1..un (fiber),
uA_i (jet coordinate u^A_i), p, pA_i (momentum p^i_A).
"""

from __future__ import annotations

import math
import re
from collections.abc import Callable, Mapping, Sequence
from dataclasses import dataclass
from typing import Literal

import numpy as np

from config.logging import get_logger
from fieldtriple_core.errors import (
    DimensionMismatch,
    EvaluationDomainError,
    ParseError,
    ProblemError,
    UnknownFunction,
)

logger = get_logger("fields")

BinaryOp = Literal["+", "-", "*", "/", "^"]


# ---------------------------------------------------------------------------
# AST
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Neg:
    operand: Expr


@dataclass(frozen=True)
class BinOp:
    op: BinaryOp
    left: Expr
    right: Expr


@dataclass(frozen=True)
class Call:
    func: str
    arg: Expr


Expr = Num | Var | Neg | BinOp | Call


# ---------------------------------------------------------------------------
# Lexer / parser
# ---------------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z][A-Za-z0-9_]*)"
    r"|(?P<op>[-+*/^()]))"
)


@dataclass(frozen=True)
class _Token:
    kind: Literal["num", "ident", "op", "end"]
    text: str
    pos: int  # character position


class _Parser:
    def __init__(self, source: str):
        self.source = source
        self.tokens = self._tokenize(source)
        self.index = 0

    def _offset(self, pos: int) -> int:
        return len(self.source[:pos].encode("utf-8"))

    def _error(self, message: str, pos: int) -> ParseError:
        return ParseError(message, self._offset(pos), self.source)

    def _tokenize(self, source: str) -> list[_Token]:
        tokens: list[_Token] = []
        pos = 0
        while pos < len(source):
            if source[pos:].strip() == "":
                break
            match = _TOKEN_RE.match(source, pos)
            if match is None or match.end() == pos:
                bad = pos + len(source[pos:]) - len(source[pos:].lstrip())
                raise self._error(f"unexpected character {source[bad]!r}", bad)
            kind = match.lastgroup
            start = match.start(kind)
            tokens.append(_Token(kind, match.group(kind), start))
            pos = match.end()
        tokens.append(_Token("end", "", len(source)))
        return tokens

    @property
    def current(self) -> _Token:
        return self.tokens[self.index]

    def _advance(self) -> _Token:
        token = self.tokens[self.index]
        self.index += 1
        return token

    def _expect(self, text: str) -> None:
        if self.current.text != text or self.current.kind != "op":
            found = self.current.text or "end of input"
            raise self._error(f"expected {text!r}, found {found!r}", self.current.pos)
        self._advance()

    def parse(self) -> Expr:
        node = self._expr()
        if self.current.kind != "end":
            raise self._error(f"unexpected {self.current.text!r}", self.current.pos)
        return node

    def _expr(self) -> Expr:
        node = self._term()
        while self.current.kind == "op" and self.current.text in "+-":
            op = self._advance().text
            node = BinOp(op, node, self._term())
        return node

    def _term(self) -> Expr:
        node = self._unary()
        while self.current.kind == "op" and self.current.text in "*/":
            op = self._advance().text
            node = BinOp(op, node, self._unary())
        return node

    def _unary(self) -> Expr:
        if self.current.kind == "op" and self.current.text == "-":
            self._advance()
            return Neg(self._unary())
        return self._power()

    def _power(self) -> Expr:
        base = self._atom()
        if self.current.kind == "op" and self.current.text == "^":
            self._advance()
            return BinOp("^", base, self._unary())
        return base

    def _atom(self) -> Expr:
        token = self.current
        if token.kind == "num":
            value = float(token.text)
            if not math.isfinite(value):
                raise self._error(f"literal {token.text!r} is not a finite number", token.pos)
            self._advance()
            return Num(value)
        if token.kind == "ident":
            self._advance()
            if self.current.kind == "op" and self.current.text == "(":
                if token.text not in FUNCTIONS:
                    raise UnknownFunction(
                        f"unknown function {token.text!r}",
                        self._offset(token.pos),
                        self.source,
                    )
                self._advance()
                arg = self._expr()
                self._expect(")")
                return Call(token.text, arg)
            return Var(token.text)
        if token.kind == "op" and token.text == "(":
            self._advance()
            node = self._expr()
            self._expect(")")
            return node
        found = token.text or "end of input"
        raise self._error(f"unexpected {found!r}", token.pos)


def parse(source: str) -> Expr:
    """Parse expression source into an AST.

    Raises:
        ParseError: malformed input, with the byte offset of the problem
        UnknownFunction: call to a function outside the supported set
    """
    return _Parser(source).parse()


def to_source(node: Expr) -> str:
    """Print an AST back to fully parenthesized source."""
    if isinstance(node, Num):
        text = repr(float(node.value))
        return f"({text})" if node.value < 0 else text
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Neg):
        return f"(-{to_source(node.operand)})"
    if isinstance(node, BinOp):
        return f"({to_source(node.left)} {node.op} {to_source(node.right)})"
    if isinstance(node, Call):
        return f"{node.func}({to_source(node.arg)})"
    raise TypeError(f"not an expression node: {node!r}")


def free_variables(node: Expr) -> frozenset[str]:
    if isinstance(node, Var):
        return frozenset({node.name})
    if isinstance(node, Num):
        return frozenset()
    if isinstance(node, Neg):
        return free_variables(node.operand)
    if isinstance(node, Call):
        return free_variables(node.arg)
    return free_variables(node.left) | free_variables(node.right)


def substitute(node: Expr, mapping: Mapping[str, Expr]) -> Expr:
    """Replace variables by expressions (simultaneously)."""
    if isinstance(node, Var):
        return mapping.get(node.name, node)
    if isinstance(node, Num):
        return node
    if isinstance(node, Neg):
        return Neg(substitute(node.operand, mapping))
    if isinstance(node, Call):
        return Call(node.func, substitute(node.arg, mapping))
    return BinOp(node.op, substitute(node.left, mapping), substitute(node.right, mapping))


# Builders for assembling trees in code


def constant(value: float) -> Expr:
    value = float(value)
    return Neg(Num(-value)) if value < 0 else Num(value)


def variable(name: str) -> Expr:
    return Var(name)


def add(*terms: Expr) -> Expr:
    if not terms:
        return Num(0.0)
    node = terms[0]
    for term in terms[1:]:
        node = BinOp("+", node, term)
    return node


def mul(*factors: Expr) -> Expr:
    if not factors:
        return Num(1.0)
    node = factors[0]
    for factor in factors[1:]:
        node = BinOp("*", node, factor)
    return node


def scale(c: float, node: Expr) -> Expr:
    return BinOp("*", constant(c), node)


# ---------------------------------------------------------------------------
# Second-order jets
# ---------------------------------------------------------------------------


class Jet2Scalar:
    """Value, gradient and Hessian of a scalar at a point.

    Every operation builds the Hessian from symmetric pieces (outer(a, b) +
    outer(b, a), scalar multiples of symmetric matrices) so it stays exactly
    symmetric.
    """

    __slots__ = ("value", "grad", "hess")
    __array_ufunc__ = None

    def __init__(self, value: float, grad: np.ndarray, hess: np.ndarray):
        self.value = float(value)
        self.grad = grad
        self.hess = hess

    @classmethod
    def constant(cls, value: float, dim: int) -> Jet2Scalar:
        return cls(value, np.zeros(dim), np.zeros((dim, dim)))

    @classmethod
    def seed(cls, value: float, index: int, dim: int) -> Jet2Scalar:
        grad = np.zeros(dim)
        grad[index] = 1.0
        return cls(value, grad, np.zeros((dim, dim)))

    def __repr__(self) -> str:
        return f"Jet2Scalar(value={self.value!r}, dim={self.grad.shape[0]})"

    def __add__(self, other: Jet2Scalar | float) -> Jet2Scalar:
        if isinstance(other, Jet2Scalar):
            return Jet2Scalar(self.value + other.value, self.grad + other.grad, self.hess + other.hess)
        return Jet2Scalar(self.value + other, self.grad, self.hess)

    __radd__ = __add__

    def __neg__(self) -> Jet2Scalar:
        return Jet2Scalar(-self.value, -self.grad, -self.hess)

    def __sub__(self, other: Jet2Scalar | float) -> Jet2Scalar:
        return self + (-other)

    def __rsub__(self, other: float) -> Jet2Scalar:
        return (-self) + other

    def __mul__(self, other: Jet2Scalar | float) -> Jet2Scalar:
        if isinstance(other, Jet2Scalar):
            cross = np.outer(self.grad, other.grad)
            return Jet2Scalar(
                self.value * other.value,
                self.value * other.grad + other.value * self.grad,
                self.value * other.hess + other.value * self.hess + cross + cross.T,
            )
        return Jet2Scalar(self.value * other, other * self.grad, other * self.hess)

    __rmul__ = __mul__

    def compose(self, f: float, df: float, d2f: float) -> Jet2Scalar:
        """Chain rule for a univariate function with the given derivatives."""
        return Jet2Scalar(
            f,
            df * self.grad,
            df * self.hess + d2f * np.outer(self.grad, self.grad),
        )

    def reciprocal(self) -> Jet2Scalar:
        t = self.value
        return self.compose(1.0 / t, -1.0 / t**2, 2.0 / t**3)

    def __truediv__(self, other: Jet2Scalar | float) -> Jet2Scalar:
        if isinstance(other, Jet2Scalar):
            return self * other.reciprocal()
        return self * (1.0 / other)

    def __rtruediv__(self, other: float) -> Jet2Scalar:
        return self.reciprocal() * other


Scalar = float | Jet2Scalar


def _value_of(x: Scalar) -> float:
    return x.value if isinstance(x, Jet2Scalar) else x


@dataclass(frozen=True)
class _Function:
    f: Callable[[float], float]
    df: Callable[[float], float]
    d2f: Callable[[float], float]
    domain: Callable[[float, bool], str | None]


def _always(t: float, jet: bool) -> str | None:
    return None


def _positive(t: float, jet: bool) -> str | None:
    return None if t > 0 else "log of a non-positive number"


def _sqrt_domain(t: float, jet: bool) -> str | None:
    if t < 0 or (jet and t == 0):
        return "sqrt outside its differentiable domain"
    return None


FUNCTIONS: dict[str, _Function] = {
    "sin": _Function(math.sin, math.cos, lambda t: -math.sin(t), _always),
    "cos": _Function(math.cos, lambda t: -math.sin(t), lambda t: -math.cos(t), _always),
    "exp": _Function(math.exp, math.exp, math.exp, _always),
    "log": _Function(math.log, lambda t: 1.0 / t, lambda t: -1.0 / t**2, _positive),
    "sqrt": _Function(
        math.sqrt,
        lambda t: 0.5 / math.sqrt(t),
        lambda t: -0.25 / (t * math.sqrt(t)),
        _sqrt_domain,
    ),
}


def _integer_exponent(node: Expr) -> int | None:
    sign = 1
    if isinstance(node, Neg):
        sign, node = -1, node.operand
    if isinstance(node, Num) and float(node.value).is_integer():
        return sign * int(node.value)
    return None


def _power_int(base: Scalar, exponent: int) -> Scalar:
    result: Scalar = 1.0
    factor = base
    k = exponent
    while k:
        if k & 1:
            result = factor * result
        k >>= 1
        if k:
            factor = factor * factor
    return result


def _walk(node: Expr, env: Mapping[str, Scalar]) -> Scalar:
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Var):
        return env[node.name]
    if isinstance(node, Neg):
        return -_walk(node.operand, env)
    if isinstance(node, Call):
        arg = _walk(node.arg, env)
        fn = FUNCTIONS[node.func]
        t = _value_of(arg)
        problem = fn.domain(t, isinstance(arg, Jet2Scalar))
        if problem:
            raise EvaluationDomainError(problem, to_source(node))
        if isinstance(arg, Jet2Scalar):
            return arg.compose(fn.f(t), fn.df(t), fn.d2f(t))
        return fn.f(t)

    left = _walk(node.left, env)
    if node.op == "^":
        exponent = _integer_exponent(node.right)
        if exponent is not None:
            if exponent < 0:
                if _value_of(left) == 0.0:
                    raise EvaluationDomainError("division by zero", to_source(node))
                return 1.0 / _power_int(left, -exponent)
            return _power_int(left, exponent)
        if _value_of(left) <= 0.0:
            raise EvaluationDomainError(
                "real power of a non-positive number", to_source(node)
            )
        right = _walk(node.right, env)
        log_left = (
            left.compose(math.log(left.value), 1.0 / left.value, -1.0 / left.value**2)
            if isinstance(left, Jet2Scalar)
            else math.log(left)
        )
        product = right * log_left
        t = _value_of(product)
        if isinstance(product, Jet2Scalar):
            e = math.exp(t)
            return product.compose(e, e, e)
        return math.exp(t)

    right = _walk(node.right, env)
    if node.op == "+":
        return left + right
    if node.op == "-":
        return left - right
    if node.op == "*":
        return left * right
    if _value_of(right) == 0.0:
        raise EvaluationDomainError("division by zero", to_source(node))
    return left / right


# ---------------------------------------------------------------------------
# Scalar fields
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ScalarField:
    """An expression together with the layout of its evaluation point."""

    expr: Expr
    variable_order: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "variable_order", tuple(self.variable_order))
        missing = free_variables(self.expr) - set(self.variable_order)
        if missing:
            raise ProblemError(
                f"variables {sorted(missing)} not in {list(self.variable_order)}"
            )

    @classmethod
    def from_source(cls, source: str, variables: Sequence[str]) -> ScalarField:
        return cls(parse(source), tuple(variables))

    @classmethod
    def constant(cls, value: float, variables: Sequence[str]) -> ScalarField:
        return cls(constant(value), tuple(variables))

    def __repr__(self) -> str:
        return f"ScalarField({to_source(self.expr)!r})"

    @property
    def dim(self) -> int:
        return len(self.variable_order)

    def _check_point(self, point: Sequence[float] | np.ndarray) -> np.ndarray:
        arr = np.asarray(point, dtype=float).reshape(-1)
        if arr.shape[0] != self.dim:
            raise DimensionMismatch(
                f"point has {arr.shape[0]} entries, field expects {self.dim}"
            )
        return arr

    def rebind(self, variables: Sequence[str]) -> ScalarField:
        """Same expression over a different (super)set of variables."""
        return ScalarField(self.expr, tuple(variables))


def evaluate(f: ScalarField, point: Sequence[float] | np.ndarray) -> float:
    """Value of f at point."""
    arr = f._check_point(point)
    env = {name: float(v) for name, v in zip(f.variable_order, arr)}
    return float(_walk(f.expr, env))


def eval2(f: ScalarField, point: Sequence[float] | np.ndarray) -> Jet2Scalar:
    """Exact value, gradient and Hessian of f at point."""
    arr = f._check_point(point)
    dim = f.dim
    env = {
        name: Jet2Scalar.seed(v, i, dim)
        for i, (name, v) in enumerate(zip(f.variable_order, arr))
    }
    result = _walk(f.expr, env)
    if isinstance(result, Jet2Scalar):
        return result
    return Jet2Scalar.constant(result, dim)


def fd_oracle(
    f: ScalarField, point: Sequence[float] | np.ndarray, h: float = 1e-4
) -> tuple[np.ndarray, np.ndarray]:
    """Central-difference gradient and Hessian (test oracle for eval2)."""
    if h <= 0:
        raise ProblemError("step must be positive")
    x = f._check_point(point)
    dim = f.dim
    eye = np.eye(dim) * h
    f0 = evaluate(f, x)
    grad = np.zeros(dim)
    hess = np.zeros((dim, dim))
    for i in range(dim):
        fp = evaluate(f, x + eye[i])
        fm = evaluate(f, x - eye[i])
        grad[i] = (fp - fm) / (2 * h)
        hess[i, i] = (fp - 2 * f0 + fm) / h**2
        for j in range(i + 1, dim):
            fpp = evaluate(f, x + eye[i] + eye[j])
            fpm = evaluate(f, x + eye[i] - eye[j])
            fmp = evaluate(f, x - eye[i] + eye[j])
            fmm = evaluate(f, x - eye[i] - eye[j])
            hess[i, j] = hess[j, i] = (fpp - fpm - fmp + fmm) / (4 * h**2)
    return grad, hess


# ---------------------------------------------------------------------------
# Naming convention
# ---------------------------------------------------------------------------


def base_names(m: int) -> list[str]:
    return [f"x{i + 1}" for i in range(m)]


def fiber_names(n: int) -> list[str]:
    return [f"u{a + 1}" for a in range(n)]


def jet_names(n: int, m: int) -> list[str]:
    """u^A_i names, row-major in (A, i)."""
    return [f"u{a + 1}_{i + 1}" for a in range(n) for i in range(m)]


def momentum_names(n: int, m: int) -> list[str]:
    """p^i_A names, row-major in (A, i)."""
    return [f"p{a + 1}_{i + 1}" for a in range(n) for i in range(m)]
