"""Scalar expressions over coordinates and parameters, with second-order jets.

Expressions follow the grammar

    expr  := term (("+" | "-") term)*
    term  := unary (("*" | "/") unary)*
    unary := "-" unary | power
    power := atom ("^" unary)?
    atom  := number | ident | ident "(" expr ")" | "(" expr ")"

so ``^`` binds tighter than unary minus (``-x^2`` is ``-(x^2)``), products bind
tighter than sums and binary operators associate to the left. Function identifiers
are sin, cos, exp, log and sqrt; ``pi`` is a built-in constant. The exponent of ``^``
must not depend on the coordinates.

``evaluate`` returns an IEEE double. ``eval_jet2`` returns the value together with
the exact gradient and Hessian with respect to the coordinates, propagated through
the tree by the product and chain rules. ``evaluate_many`` and ``eval_jet2_many``
do the same over a stack of points at once.
"""

from __future__ import annotations

import math
import re
from collections.abc import Iterable, Iterator, Mapping, Sequence
from dataclasses import dataclass, field
from functools import cached_property
from typing import NamedTuple

import numpy as np
import numpy.typing as npt

from weylconn.exceptions import (
    DimensionMismatchError,
    DomainError,
    ExpressionSyntaxError,
    InvalidParameterError,
    UnboundParameterError,
    UnknownIdentifierError,
)

FUNCTIONS = ("sin", "cos", "exp", "log", "sqrt")
CONSTANTS = {"pi": math.pi}


class Bindings(Mapping[str, float]):
    """Immutable map from parameter names to real values."""

    __slots__ = ("_values",)

    def __init__(self, values: Mapping[str, float] | None = None, /, **kwargs: float):
        """Bind parameters from a mapping and/or keyword arguments."""
        merged = dict(values or {})
        merged.update(kwargs)
        self._values = {name: float(value) for name, value in merged.items()}

    def __getitem__(self, name: str) -> float:
        """Return the value bound to name."""
        return self._values[name]

    def __iter__(self) -> Iterator[str]:
        """Iterate over the bound names in insertion order."""
        return iter(self._values)

    def __len__(self) -> int:
        """Return the number of bound parameters."""
        return len(self._values)

    def __repr__(self) -> str:
        """Return a representation listing the bound values."""
        return f"Bindings({self._values!r})"

    def require(self, names: Iterable[str]) -> None:
        """Check that every name is bound.

        Raises:
            UnboundParameterError: Listing the names without a value.

        """
        missing = sorted(set(names) - self._values.keys())
        if missing:
            raise UnboundParameterError(f"Unbound parameters: {', '.join(missing)}")

    def merged(self, **overrides: float) -> Bindings:
        """Return new bindings with the given values replaced or added."""
        return Bindings(self._values, **overrides)

    def as_dict(self) -> dict[str, float]:
        """Return a plain dictionary copy."""
        return dict(self._values)


# Syntax tree. The `constant` flag is True when the subtree does not depend on any
# coordinate; it is excluded from comparisons so equality stays structural.


@dataclass(frozen=True, slots=True)
class Num:
    """Real literal."""

    value: float
    constant: bool = field(default=True, init=False, compare=False, repr=False)


@dataclass(frozen=True, slots=True)
class Var:
    """Coordinate variable with its index in the point."""

    name: str
    index: int
    constant: bool = field(default=False, init=False, compare=False, repr=False)


@dataclass(frozen=True, slots=True)
class Param:
    """Parameter bound through Bindings."""

    name: str
    constant: bool = field(default=True, init=False, compare=False, repr=False)


@dataclass(frozen=True, slots=True)
class Neg:
    """Unary minus."""

    operand: Node
    constant: bool = field(init=False, compare=False, repr=False)

    def __post_init__(self):
        """Propagate the constant flag."""
        object.__setattr__(self, "constant", self.operand.constant)


@dataclass(frozen=True, slots=True)
class Call:
    """Call of one of the built-in functions."""

    func: str
    arg: Node
    constant: bool = field(init=False, compare=False, repr=False)

    def __post_init__(self):
        """Propagate the constant flag."""
        object.__setattr__(self, "constant", self.arg.constant)


@dataclass(frozen=True, slots=True)
class BinOp:
    """Binary operation among + - * /."""

    op: str
    left: Node
    right: Node
    constant: bool = field(init=False, compare=False, repr=False)

    def __post_init__(self):
        """Propagate the constant flag."""
        object.__setattr__(
            self, "constant", self.left.constant and self.right.constant
        )


@dataclass(frozen=True, slots=True)
class Pow:
    """Power with a coordinate-free exponent."""

    base: Node
    exponent: Node
    constant: bool = field(init=False, compare=False, repr=False)

    def __post_init__(self):
        """Propagate the constant flag."""
        object.__setattr__(self, "constant", self.base.constant)


Node = Num | Var | Param | Neg | Call | BinOp | Pow


@dataclass(frozen=True, slots=True)
class Jet2:
    """Value, gradient and Hessian of a scalar at a point."""

    value: float
    grad: npt.NDArray[np.float64]
    hess: npt.NDArray[np.float64]

    @classmethod
    def constant(cls, value: float, n: int) -> Jet2:
        """Return the jet of a constant in n variables."""
        return cls(value, np.zeros(n), np.zeros((n, n)))

    @classmethod
    def variable(cls, value: float, index: int, n: int) -> Jet2:
        """Return the jet of the coordinate function with the given index."""
        grad = np.zeros(n)
        grad[index] = 1.0
        return cls(value, grad, np.zeros((n, n)))

    def __neg__(self) -> Jet2:
        """Negate the jet."""
        return Jet2(-self.value, -self.grad, -self.hess)

    def __add__(self, other: Jet2) -> Jet2:
        """Add two jets."""
        return Jet2(
            self.value + other.value, self.grad + other.grad, self.hess + other.hess
        )

    def __sub__(self, other: Jet2) -> Jet2:
        """Subtract two jets."""
        return Jet2(
            self.value - other.value, self.grad - other.grad, self.hess - other.hess
        )

    def __mul__(self, other: Jet2) -> Jet2:
        """Multiply two jets with the product rule."""
        cross = np.outer(self.grad, other.grad)
        return Jet2(
            self.value * other.value,
            self.grad * other.value + other.grad * self.value,
            self.hess * other.value + other.hess * self.value + cross + cross.T,
        )

    def __truediv__(self, other: Jet2) -> Jet2:
        """Divide two jets.

        Raises:
            DomainError: If the divisor vanishes.

        """
        if other.value == 0.0:
            raise DomainError("Division by zero")
        quotient = self.value / other.value
        grad = (self.grad - quotient * other.grad) / other.value
        cross = np.outer(grad, other.grad)
        hess = (self.hess - quotient * other.hess - cross - cross.T) / other.value
        return Jet2(quotient, grad, hess)

    def chain(self, value: float, first: float, second: float) -> Jet2:
        """Compose with a scalar function f given f, f' and f'' at self.value."""
        return Jet2(
            value,
            first * self.grad,
            first * self.hess + second * np.outer(self.grad, self.grad),
        )

    def power(self, exponent: float) -> Jet2:
        """Raise the jet to a constant exponent."""
        value = _power(self.value, exponent)
        if exponent == 0.0:
            return Jet2.constant(value, self.grad.size)
        first = exponent * _power(self.value, exponent - 1.0)
        coefficient = exponent * (exponent - 1.0)
        second = 0.0
        if coefficient != 0.0:
            second = coefficient * _power(self.value, exponent - 2.0)
        return self.chain(value, first, second)


def _outer(a: npt.NDArray[np.float64], b: npt.NDArray[np.float64]):
    return a[:, :, None] * b[:, None, :]


@dataclass(frozen=True, slots=True)
class JetArray:
    """Values, gradients and Hessians of a scalar at a stack of m points.

    Shapes are (m,), (m, n) and (m, n, n).
    """

    value: npt.NDArray[np.float64]
    grad: npt.NDArray[np.float64]
    hess: npt.NDArray[np.float64]

    @classmethod
    def constant(cls, value: float, m: int, n: int) -> JetArray:
        """Return the jet of a constant at m points in n variables."""
        return cls(np.full(m, value), np.zeros((m, n)), np.zeros((m, n, n)))

    @classmethod
    def variable(
        cls, values: npt.NDArray[np.float64], index: int, n: int
    ) -> JetArray:
        """Return the jet of the coordinate function with the given index."""
        m = values.shape[0]
        grad = np.zeros((m, n))
        grad[:, index] = 1.0
        return cls(values, grad, np.zeros((m, n, n)))

    def __neg__(self) -> JetArray:
        """Negate the jet."""
        return JetArray(-self.value, -self.grad, -self.hess)

    def __add__(self, other: JetArray) -> JetArray:
        """Add two jets."""
        return JetArray(
            self.value + other.value, self.grad + other.grad, self.hess + other.hess
        )

    def __sub__(self, other: JetArray) -> JetArray:
        """Subtract two jets."""
        return JetArray(
            self.value - other.value, self.grad - other.grad, self.hess - other.hess
        )

    def __mul__(self, other: JetArray) -> JetArray:
        """Multiply two jets with the product rule."""
        cross = _outer(self.grad, other.grad)
        return JetArray(
            self.value * other.value,
            self.grad * other.value[:, None] + other.grad * self.value[:, None],
            self.hess * other.value[:, None, None]
            + other.hess * self.value[:, None, None]
            + cross
            + cross.swapaxes(1, 2),
        )

    def __truediv__(self, other: JetArray) -> JetArray:
        """Divide two jets.

        Raises:
            DomainError: If the divisor vanishes at some point.

        """
        if np.any(other.value == 0.0):
            raise DomainError("Division by zero")
        quotient = self.value / other.value
        grad = (self.grad - quotient[:, None] * other.grad) / other.value[:, None]
        cross = _outer(grad, other.grad)
        hess = (
            self.hess
            - quotient[:, None, None] * other.hess
            - cross
            - cross.swapaxes(1, 2)
        ) / other.value[:, None, None]
        return JetArray(quotient, grad, hess)

    def chain(
        self,
        value: npt.NDArray[np.float64],
        first: npt.NDArray[np.float64],
        second: npt.NDArray[np.float64],
    ) -> JetArray:
        """Compose with a scalar function f given f, f' and f'' at self.value."""
        return JetArray(
            value,
            first[:, None] * self.grad,
            first[:, None, None] * self.hess
            + second[:, None, None] * _outer(self.grad, self.grad),
        )

    def power(self, exponent: float) -> JetArray:
        """Raise the jet to a constant exponent."""
        value = _power_array(self.value, exponent)
        if exponent == 0.0:
            return JetArray(value, np.zeros_like(self.grad), np.zeros_like(self.hess))
        first = exponent * _power_array(self.value, exponent - 1.0)
        coefficient = exponent * (exponent - 1.0)
        second = np.zeros_like(value)
        if coefficient != 0.0:
            second = coefficient * _power_array(self.value, exponent - 2.0)
        return self.chain(value, first, second)


@dataclass(frozen=True)
class ScalarExpr:
    """Parsed expression together with the names it was declared against."""

    root: Node
    coords: tuple[str, ...]
    params: tuple[str, ...] = ()

    def __str__(self) -> str:
        """Return the canonical text."""
        return self.text

    @cached_property
    def text(self) -> str:
        """Canonical text; parsing it yields a structurally identical tree."""
        return to_text(self.root)

    @cached_property
    def free_params(self) -> frozenset[str]:
        """Parameters actually referenced by the tree."""
        return frozenset(_walk_params(self.root))

    @property
    def depends_on_coords(self) -> bool:
        """Return True when the value changes with the point."""
        return not self.root.constant

    @property
    def dim(self) -> int:
        """Number of coordinates."""
        return len(self.coords)


class _Token(NamedTuple):
    kind: str
    text: str
    position: int


_TOKEN_RE = re.compile(
    r"(?P<number>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^()])"
)


def _tokenize(text: str) -> Iterator[_Token]:
    position = 0
    while position < len(text):
        if text[position].isspace():
            position += 1
            continue
        match = _TOKEN_RE.match(text, position)
        if match is None:
            raise ExpressionSyntaxError(
                f"Unexpected character '{text[position]}'", position
            )
        yield _Token(match.lastgroup, match.group(), position)
        position = match.end()
    yield _Token("end", "", len(text))


class _Parser:
    """Recursive descent parser over the token list."""

    def __init__(self, text: str, coords: Sequence[str], params: Iterable[str]):
        self._tokens = list(_tokenize(text))
        self._index = 0
        self._coords = {name: index for index, name in enumerate(coords)}
        self._params = set(params)

    @property
    def _current(self) -> _Token:
        return self._tokens[self._index]

    def _advance(self) -> _Token:
        token = self._tokens[self._index]
        self._index += 1
        return token

    def _expect(self, text: str) -> None:
        token = self._current
        if token.text != text:
            found = token.text or "end of expression"
            raise ExpressionSyntaxError(
                f"Expected '{text}' but found '{found}'", token.position
            )
        self._advance()

    def parse(self) -> Node:
        if self._current.kind == "end":
            raise ExpressionSyntaxError("Empty expression", 0)
        node = self._expr()
        token = self._current
        if token.kind != "end":
            raise ExpressionSyntaxError(
                f"Unexpected token '{token.text}'", token.position
            )
        return node

    def _expr(self) -> Node:
        node = self._term()
        while self._current.kind == "op" and self._current.text in "+-":
            op = self._advance().text
            node = BinOp(op, node, self._term())
        return node

    def _term(self) -> Node:
        node = self._unary()
        while self._current.kind == "op" and self._current.text in "*/":
            op = self._advance().text
            node = BinOp(op, node, self._unary())
        return node

    def _unary(self) -> Node:
        if self._current.text == "-":
            self._advance()
            return Neg(self._unary())
        return self._power()

    def _power(self) -> Node:
        base = self._atom()
        if self._current.text != "^":
            return base
        token = self._advance()
        exponent = self._unary()
        if not exponent.constant:
            raise ExpressionSyntaxError(
                "Exponent must not depend on coordinates", token.position
            )
        return Pow(base, exponent)

    def _atom(self) -> Node:
        token = self._current
        match token.kind:
            case "number":
                self._advance()
                value = float(token.text)
                if not math.isfinite(value):
                    raise ExpressionSyntaxError(
                        f"Number '{token.text}' is not finite", token.position
                    )
                return Num(value)
            case "ident":
                self._advance()
                return self._identifier(token)
            case "end":
                raise ExpressionSyntaxError(
                    "Unexpected end of expression", token.position
                )
        if token.text == "(":
            self._advance()
            node = self._expr()
            self._expect(")")
            return node
        raise ExpressionSyntaxError(f"Unexpected token '{token.text}'", token.position)

    def _identifier(self, token: _Token) -> Node:
        name = token.text
        if self._current.text == "(":
            if name not in FUNCTIONS:
                raise UnknownIdentifierError(name, token.position)
            self._advance()
            arg = self._expr()
            self._expect(")")
            return Call(name, arg)
        if name in self._coords:
            return Var(name, self._coords[name])
        if name in self._params:
            return Param(name)
        if name in CONSTANTS:
            return Num(CONSTANTS[name])
        if name in FUNCTIONS:
            raise ExpressionSyntaxError(
                f"Function '{name}' needs an argument", token.position
            )
        raise UnknownIdentifierError(name, token.position)


def _check_names(coords: Sequence[str], params: Sequence[str]) -> None:
    names = [*coords, *params]
    for name in names:
        if name in FUNCTIONS or name in CONSTANTS:
            raise InvalidParameterError(f"Name '{name}' is reserved")
        if names.count(name) > 1:
            raise InvalidParameterError(f"Name '{name}' is declared twice")


def parse(text: str, coords: Sequence[str], params: Sequence[str] = ()) -> ScalarExpr:
    """Parse text into an expression over the given coordinates and parameters.

    Args:
        text: The expression text.
        coords: Coordinate names, in point order.
        params: Parameter names.

    Returns:
        ScalarExpr: The parsed expression.

    Raises:
        ExpressionSyntaxError: If the text does not follow the grammar.
        UnknownIdentifierError: If the text uses an undeclared name.

    """
    coords = tuple(coords)
    params = tuple(params)
    _check_names(coords, params)
    return ScalarExpr(_Parser(text, coords, params).parse(), coords, params)


_PRECEDENCE = {"+": 1, "-": 1, "*": 2, "/": 2}


def _precedence(node: Node) -> int:
    match node:
        case BinOp(op=op):
            return _PRECEDENCE[op]
        case Neg():
            return 3
        case Pow():
            return 4
    return 5


def _format_number(value: float) -> str:
    if value.is_integer() and abs(value) < 1e15:
        return str(int(value))
    return repr(value)


def to_text(node: Node) -> str:
    """Print a tree with the minimal parentheses the grammar needs."""
    match node:
        case Num(value=value):
            return _format_number(value)
        case Var(name=name) | Param(name=name):
            return name
        case Call(func=func, arg=arg):
            return f"{func}({to_text(arg)})"
        case Neg(operand=operand):
            inner = to_text(operand)
            return f"-({inner})" if _precedence(operand) < 3 else f"-{inner}"
        case Pow(base=base, exponent=exponent):
            left = to_text(base)
            if _precedence(base) < 5:
                left = f"({left})"
            right = to_text(exponent)
            if _precedence(exponent) < 3:
                right = f"({right})"
            return f"{left}^{right}"
        case BinOp(op=op, left=left, right=right):
            precedence = _PRECEDENCE[op]
            left_text = to_text(left)
            if _precedence(left) < precedence:
                left_text = f"({left_text})"
            right_text = to_text(right)
            if _precedence(right) <= precedence:
                right_text = f"({right_text})"
            separator = f" {op} " if precedence == 1 else op
            return f"{left_text}{separator}{right_text}"
    raise TypeError(f"Not an expression node: {node!r}")


def _walk_params(node: Node) -> Iterator[str]:
    match node:
        case Param(name=name):
            yield name
        case Neg(operand=child) | Call(arg=child):
            yield from _walk_params(child)
        case Pow(base=left, exponent=right) | BinOp(left=left, right=right):
            yield from _walk_params(left)
            yield from _walk_params(right)


def _power(base: float, exponent: float) -> float:
    if base < 0.0 and not exponent.is_integer():
        raise DomainError(
            f"Non-integer power {exponent!r} of negative base {base!r}"
        )
    if base == 0.0 and exponent < 0.0:
        raise DomainError(f"Negative power {exponent!r} of zero")
    try:
        return base**exponent
    except OverflowError as e:
        raise DomainError(f"Overflow in power {base!r}^{exponent!r}") from e


def _apply(func: str, x: float) -> float:
    match func:
        case "sin":
            return math.sin(x)
        case "cos":
            return math.cos(x)
        case "exp":
            try:
                return math.exp(x)
            except OverflowError as e:
                raise DomainError(f"Overflow in exp({x!r})") from e
        case "log":
            if x <= 0.0:
                raise DomainError(f"log of non-positive value {x!r}")
            return math.log(x)
        case "sqrt":
            if x < 0.0:
                raise DomainError(f"sqrt of negative value {x!r}")
            return math.sqrt(x)
    raise DomainError(f"Unknown function '{func}'")


def _derivatives(func: str, x: float) -> tuple[float, float, float]:
    value = _apply(func, x)
    match func:
        case "sin":
            return value, math.cos(x), -value
        case "cos":
            return value, -math.sin(x), -value
        case "exp":
            return value, value, value
        case "log":
            return value, 1.0 / x, -1.0 / (x * x)
    if value == 0.0:
        raise DomainError("sqrt is not differentiable at 0")
    return value, 0.5 / value, -0.25 / (value * x)


def _value(node: Node, point: Sequence[float], binds: Mapping[str, float]) -> float:
    match node:
        case Num(value=value):
            return value
        case Var(index=index):
            return float(point[index])
        case Param(name=name):
            return binds[name]
        case Neg(operand=operand):
            return -_value(operand, point, binds)
        case Call(func=func, arg=arg):
            return _apply(func, _value(arg, point, binds))
        case Pow(base=base, exponent=exponent):
            return _power(_value(base, point, binds), _value(exponent, point, binds))
        case BinOp(op=op, left=left, right=right):
            a = _value(left, point, binds)
            b = _value(right, point, binds)
            match op:
                case "+":
                    return a + b
                case "-":
                    return a - b
                case "*":
                    return a * b
            if b == 0.0:
                raise DomainError("Division by zero")
            return a / b
    raise TypeError(f"Not an expression node: {node!r}")


def _jet(
    node: Node, point: Sequence[float], binds: Mapping[str, float], n: int
) -> Jet2:
    if node.constant:
        return Jet2.constant(_value(node, point, binds), n)
    match node:
        case Var(index=index):
            return Jet2.variable(float(point[index]), index, n)
        case Neg(operand=operand):
            return -_jet(operand, point, binds, n)
        case Call(func=func, arg=arg):
            inner = _jet(arg, point, binds, n)
            return inner.chain(*_derivatives(func, inner.value))
        case Pow(base=base, exponent=exponent):
            return _jet(base, point, binds, n).power(_value(exponent, point, binds))
        case BinOp(op=op, left=left, right=right):
            a = _jet(left, point, binds, n)
            b = _jet(right, point, binds, n)
            match op:
                case "+":
                    return a + b
                case "-":
                    return a - b
                case "*":
                    return a * b
            return a / b
    raise TypeError(f"Not an expression node: {node!r}")


def _check_inputs(e: ScalarExpr, pt: Sequence[float], binds: Bindings) -> None:
    if len(pt) != e.dim:
        raise DimensionMismatchError(
            f"Point has {len(pt)} coordinates, expression '{e.text}' expects {e.dim}"
        )
    binds.require(e.free_params)


def evaluate(e: ScalarExpr, pt: Sequence[float], binds: Bindings) -> float:
    """Evaluate an expression at a point.

    Raises:
        DomainError: On log of a non-positive value, division by zero or sqrt of a
            negative value.
        DimensionMismatchError: If the point has the wrong dimension.
        UnboundParameterError: If a referenced parameter has no value.

    """
    _check_inputs(e, pt, binds)
    return _value(e.root, pt, binds)


def eval_jet2(e: ScalarExpr, pt: Sequence[float], binds: Bindings) -> Jet2:
    """Evaluate value, gradient and Hessian of an expression at a point.

    The value is bit-for-bit the one returned by ``evaluate``.

    Raises:
        DomainError: As ``evaluate``, plus sqrt differentiated at zero.

    """
    _check_inputs(e, pt, binds)
    return _jet(e.root, pt, binds, e.dim)


def _power_array(
    base: npt.NDArray[np.float64], exponent: float
) -> npt.NDArray[np.float64]:
    if not float(exponent).is_integer() and np.any(base < 0.0):
        raise DomainError(f"Non-integer power {exponent!r} of a negative base")
    if exponent < 0.0 and np.any(base == 0.0):
        raise DomainError(f"Negative power {exponent!r} of zero")
    with np.errstate(over="raise"):
        try:
            return np.power(base, exponent)
        except FloatingPointError as e:
            raise DomainError(f"Overflow in power with exponent {exponent!r}") from e


def _apply_array(func: str, x: npt.NDArray[np.float64]) -> npt.NDArray[np.float64]:
    match func:
        case "sin":
            return np.sin(x)
        case "cos":
            return np.cos(x)
        case "exp":
            with np.errstate(over="raise"):
                try:
                    return np.exp(x)
                except FloatingPointError as e:
                    raise DomainError(f"Overflow in exp({float(np.max(x))!r})") from e
        case "log":
            if np.any(x <= 0.0):
                raise DomainError(f"log of non-positive value {float(np.min(x))!r}")
            return np.log(x)
        case "sqrt":
            if np.any(x < 0.0):
                raise DomainError(f"sqrt of negative value {float(np.min(x))!r}")
            return np.sqrt(x)
    raise DomainError(f"Unknown function '{func}'")


def _derivatives_array(func: str, x: npt.NDArray[np.float64]):
    value = _apply_array(func, x)
    match func:
        case "sin":
            return value, np.cos(x), -value
        case "cos":
            return value, -np.sin(x), -value
        case "exp":
            return value, value, value
        case "log":
            return value, 1.0 / x, -1.0 / (x * x)
    if np.any(value == 0.0):
        raise DomainError("sqrt is not differentiable at 0")
    return value, 0.5 / value, -0.25 / (value * x)


def _values_array(
    node: Node, points: npt.NDArray[np.float64], binds: Mapping[str, float]
) -> npt.NDArray[np.float64]:
    if node.constant:
        return np.full(points.shape[0], _value(node, (), binds))
    match node:
        case Var(index=index):
            return points[:, index]
        case Neg(operand=operand):
            return -_values_array(operand, points, binds)
        case Call(func=func, arg=arg):
            return _apply_array(func, _values_array(arg, points, binds))
        case Pow(base=base, exponent=exponent):
            return _power_array(
                _values_array(base, points, binds), _value(exponent, (), binds)
            )
        case BinOp(op=op, left=left, right=right):
            a = _values_array(left, points, binds)
            b = _values_array(right, points, binds)
            match op:
                case "+":
                    return a + b
                case "-":
                    return a - b
                case "*":
                    return a * b
            if np.any(b == 0.0):
                raise DomainError("Division by zero")
            return a / b
    raise TypeError(f"Not an expression node: {node!r}")


def _jet_array(
    node: Node, points: npt.NDArray[np.float64], binds: Mapping[str, float], n: int
) -> JetArray:
    if node.constant:
        return JetArray.constant(_value(node, (), binds), points.shape[0], n)
    match node:
        case Var(index=index):
            return JetArray.variable(points[:, index], index, n)
        case Neg(operand=operand):
            return -_jet_array(operand, points, binds, n)
        case Call(func=func, arg=arg):
            inner = _jet_array(arg, points, binds, n)
            return inner.chain(*_derivatives_array(func, inner.value))
        case Pow(base=base, exponent=exponent):
            return _jet_array(base, points, binds, n).power(_value(exponent, (), binds))
        case BinOp(op=op, left=left, right=right):
            a = _jet_array(left, points, binds, n)
            b = _jet_array(right, points, binds, n)
            match op:
                case "+":
                    return a + b
                case "-":
                    return a - b
                case "*":
                    return a * b
            return a / b
    raise TypeError(f"Not an expression node: {node!r}")


def _check_points(
    e: ScalarExpr, points: npt.ArrayLike, binds: Bindings
) -> npt.NDArray[np.float64]:
    array = np.asarray(points, dtype=float)
    if array.ndim != 2 or array.shape[1] != e.dim:
        raise DimensionMismatchError(
            f"Points of shape {array.shape} do not fit expression '{e.text}' "
            f"over {e.dim} coordinates"
        )
    binds.require(e.free_params)
    return array


def evaluate_many(
    e: ScalarExpr, points: npt.ArrayLike, binds: Bindings
) -> npt.NDArray[np.float64]:
    """Evaluate an expression at every row of an (m, n) array of points.

    Raises:
        DomainError: As ``evaluate``, if any point is outside the domain.

    """
    return _values_array(e.root, _check_points(e, points, binds), binds)


def eval_jet2_many(e: ScalarExpr, points: npt.ArrayLike, binds: Bindings) -> JetArray:
    """Evaluate value, gradient and Hessian at every row of an (m, n) array.

    Raises:
        DomainError: As ``eval_jet2``, if any point is outside the domain.

    """
    array = _check_points(e, points, binds)
    return _jet_array(e.root, array, binds, e.dim)
