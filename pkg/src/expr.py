"""Symbolic real-valued functions of time: evaluation, simplification, differentiation.

Expressions are immutable trees. Evaluation is vectorized with numpy so that a
coefficient can be sampled on a whole time grid in one call; a scalar ``t``
returns a Python float.
"""

from dataclasses import dataclass
from typing import Callable, Dict, Union
import logging
import math

import numpy as np

logger = logging.getLogger(__name__)

Number = Union[int, float]
TimeArg = Union[float, np.ndarray]

# Printing precedence: higher binds tighter
PREC_ADD = 1
PREC_MUL = 2
PREC_NEG = 3
PREC_POW = 4
PREC_ATOM = 5


class EvaluationDomainError(ValueError):
    """Raised when an expression is evaluated outside its domain."""

    def __init__(self, message: str, node: 'Expr', t: float):
        super().__init__(f"{message} in '{node}' at t={t!r}")
        self.node = node
        self.t = t


class Expr:
    """Base class of expression nodes."""

    precedence = PREC_ATOM

    def _eval(self, t: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def derivative(self) -> 'Expr':
        """Unsimplified derivative with respect to t."""
        raise NotImplementedError

    def depends_on_t(self) -> bool:
        raise NotImplementedError

    # Arithmetic builds trees; numbers are coerced to constants
    def __add__(self, other: Union['Expr', Number]) -> 'Expr':
        return Add(self, coerce(other))

    def __radd__(self, other: Number) -> 'Expr':
        return Add(coerce(other), self)

    def __sub__(self, other: Union['Expr', Number]) -> 'Expr':
        return Sub(self, coerce(other))

    def __rsub__(self, other: Number) -> 'Expr':
        return Sub(coerce(other), self)

    def __mul__(self, other: Union['Expr', Number]) -> 'Expr':
        return Mul(self, coerce(other))

    def __rmul__(self, other: Number) -> 'Expr':
        return Mul(coerce(other), self)

    def __truediv__(self, other: Union['Expr', Number]) -> 'Expr':
        return Div(self, coerce(other))

    def __rtruediv__(self, other: Number) -> 'Expr':
        return Div(coerce(other), self)

    def __neg__(self) -> 'Expr':
        return Neg(self)

    def __pow__(self, exponent: Number) -> 'Expr':
        if isinstance(exponent, Expr):
            if exponent.depends_on_t():
                raise TypeError("exponent must be a constant")
            exponent = float(exponent._eval(np.zeros(1))[0])
        return Pow(self, float(exponent))

    def _wrap(self, child: 'Expr', min_prec: int) -> str:
        text = str(child)
        return f"({text})" if child.precedence < min_prec else text


def coerce(value: Union[Expr, Number]) -> Expr:
    """Turn a number into a constant node; pass expressions through."""
    if isinstance(value, Expr):
        return value
    return Const(float(value))


def _format_number(value: float) -> str:
    if value.is_integer() and abs(value) < 1e15:
        return str(int(value))
    return repr(value)


@dataclass(frozen=True, eq=True)
class Const(Expr):
    value: float

    @property
    def precedence(self) -> int:
        return PREC_NEG if self.value < 0 else PREC_ATOM

    def _eval(self, t: np.ndarray) -> np.ndarray:
        return np.full(t.shape, self.value, dtype=float)

    def derivative(self) -> Expr:
        return ZERO

    def depends_on_t(self) -> bool:
        return False

    def __str__(self) -> str:
        if self.value == 0:
            return "0"
        return _format_number(self.value)


@dataclass(frozen=True, eq=True)
class Var(Expr):
    """The time variable t."""

    def _eval(self, t: np.ndarray) -> np.ndarray:
        return t

    def derivative(self) -> Expr:
        return ONE

    def depends_on_t(self) -> bool:
        return True

    def __str__(self) -> str:
        return "t"


@dataclass(frozen=True, eq=True)
class Neg(Expr):
    operand: Expr

    precedence = PREC_NEG

    def _eval(self, t: np.ndarray) -> np.ndarray:
        return -self.operand._eval(t)

    def derivative(self) -> Expr:
        return Neg(self.operand.derivative())

    def depends_on_t(self) -> bool:
        return self.operand.depends_on_t()

    def __str__(self) -> str:
        return "-" + self._wrap(self.operand, PREC_NEG)


@dataclass(frozen=True, eq=True)
class _Binary(Expr):
    left: Expr
    right: Expr

    symbol = "?"

    def depends_on_t(self) -> bool:
        return self.left.depends_on_t() or self.right.depends_on_t()

    def __str__(self) -> str:
        # Right operands of equal precedence keep their parentheses so that
        # the printed form re-parses to the same tree.
        left = self._wrap(self.left, self.precedence)
        right = self._wrap(self.right, self.precedence + 1)
        if self.precedence == PREC_ADD:
            return f"{left} {self.symbol} {right}"
        return f"{left}{self.symbol}{right}"


@dataclass(frozen=True, eq=True)
class Add(_Binary):
    precedence = PREC_ADD
    symbol = "+"

    def _eval(self, t: np.ndarray) -> np.ndarray:
        return self.left._eval(t) + self.right._eval(t)

    def derivative(self) -> Expr:
        return Add(self.left.derivative(), self.right.derivative())


@dataclass(frozen=True, eq=True)
class Sub(_Binary):
    precedence = PREC_ADD
    symbol = "-"

    def _eval(self, t: np.ndarray) -> np.ndarray:
        return self.left._eval(t) - self.right._eval(t)

    def derivative(self) -> Expr:
        return Sub(self.left.derivative(), self.right.derivative())


@dataclass(frozen=True, eq=True)
class Mul(_Binary):
    precedence = PREC_MUL
    symbol = "*"

    def _eval(self, t: np.ndarray) -> np.ndarray:
        return self.left._eval(t) * self.right._eval(t)

    def derivative(self) -> Expr:
        return Add(
            Mul(self.left.derivative(), self.right),
            Mul(self.left, self.right.derivative())
        )


@dataclass(frozen=True, eq=True)
class Div(_Binary):
    precedence = PREC_MUL
    symbol = "/"

    def _eval(self, t: np.ndarray) -> np.ndarray:
        numerator = self.left._eval(t)
        denominator = self.right._eval(t)
        bad = denominator == 0
        if np.any(bad):
            raise EvaluationDomainError("division by zero", self, _first(t, bad))
        return numerator / denominator

    def derivative(self) -> Expr:
        # (u/v)' = (u'v - uv') / v^2
        u, v = self.left, self.right
        return Div(
            Sub(Mul(u.derivative(), v), Mul(u, v.derivative())),
            Pow(v, 2.0)
        )


@dataclass(frozen=True, eq=True)
class Pow(Expr):
    """Power with a constant real exponent."""

    base: Expr
    exponent: float

    precedence = PREC_POW

    def _eval(self, t: np.ndarray) -> np.ndarray:
        base = self.base._eval(t)
        if not float(self.exponent).is_integer():
            bad = base < 0
            if np.any(bad):
                raise EvaluationDomainError(
                    "non-integer power of a negative number", self, _first(t, bad)
                )
        if self.exponent < 0:
            bad = base == 0
            if np.any(bad):
                raise EvaluationDomainError("division by zero", self, _first(t, bad))
        return np.power(base, self.exponent)

    def derivative(self) -> Expr:
        # (u^c)' = c * u^(c-1) * u'
        return Mul(
            Mul(Const(self.exponent), Pow(self.base, self.exponent - 1.0)),
            self.base.derivative()
        )

    def depends_on_t(self) -> bool:
        return self.base.depends_on_t()

    def __str__(self) -> str:
        base = self._wrap(self.base, PREC_ATOM)
        return f"{base}^{_format_number(float(self.exponent))}"


def _sqrt_domain(x: np.ndarray) -> np.ndarray:
    return x < 0


def _ln_domain(x: np.ndarray) -> np.ndarray:
    return x <= 0


# name -> (numpy function, domain violation mask, message)
FUNCTIONS: Dict[str, tuple] = {
    'sin': (np.sin, None, None),
    'cos': (np.cos, None, None),
    'exp': (np.exp, None, None),
    'ln': (np.log, _ln_domain, "logarithm of a non-positive number"),
    'sqrt': (np.sqrt, _sqrt_domain, "square root of a negative number"),
}


@dataclass(frozen=True, eq=True)
class Func(Expr):
    """Unary function application: sin, cos, exp, ln or sqrt."""

    name: str
    operand: Expr

    def __post_init__(self):
        if self.name not in FUNCTIONS:
            raise ValueError(f"unknown function: {self.name}")

    def _eval(self, t: np.ndarray) -> np.ndarray:
        fn, domain, message = FUNCTIONS[self.name]
        x = self.operand._eval(t)
        if domain is not None:
            bad = domain(x)
            if np.any(bad):
                raise EvaluationDomainError(message, self, _first(t, bad))
        return fn(x)

    def derivative(self) -> Expr:
        u = self.operand
        du = u.derivative()
        if self.name == 'sin':
            outer = Func('cos', u)
        elif self.name == 'cos':
            outer = Neg(Func('sin', u))
        elif self.name == 'exp':
            outer = self
        elif self.name == 'ln':
            return Div(du, u)
        else:
            return Div(du, Mul(TWO, self))
        return Mul(outer, du)

    def depends_on_t(self) -> bool:
        return self.operand.depends_on_t()

    def __str__(self) -> str:
        return f"{self.name}({self.operand})"


ZERO = Const(0.0)
ONE = Const(1.0)
TWO = Const(2.0)
T = Var()


def _first(t: np.ndarray, mask: np.ndarray) -> float:
    mask = np.broadcast_to(mask, t.shape)
    return float(t[np.argmax(mask)])


def evaluate(e: Expr, t: TimeArg) -> TimeArg:
    """
    Evaluate an expression at a time or on an array of times.

    Args:
        e: Expression to evaluate
        t: Scalar time or numpy array of times

    Returns:
        Float for scalar t, float array of the same shape otherwise

    Raises:
        EvaluationDomainError: On division by zero, ln of a non-positive
            number, sqrt of a negative number, or a non-finite result
    """
    scalar = np.ndim(t) == 0
    times = np.atleast_1d(np.asarray(t, dtype=float))
    with np.errstate(all='ignore'):
        values = np.asarray(e._eval(times), dtype=float)
    values = np.broadcast_to(values, times.shape)
    finite = np.isfinite(values)
    if not np.all(finite):
        raise EvaluationDomainError("non-finite value", e, _first(times, ~finite))
    if scalar:
        return float(values[0])
    return np.array(values, dtype=float)


def is_constant(e: Expr) -> bool:
    """True when the expression does not involve t."""
    return not e.depends_on_t()


def to_string(e: Expr) -> str:
    """Printed form with minimal parentheses; re-parses to an equal function."""
    return str(e)


# --- simplification -------------------------------------------------------

def _fold(fn: Callable[[], float]) -> Union[Const, None]:
    with np.errstate(all='ignore'):
        try:
            value = float(fn())
        except (ValueError, ZeroDivisionError, OverflowError):
            return None
    return Const(value) if math.isfinite(value) else None


def _is(e: Expr, value: float) -> bool:
    return isinstance(e, Const) and e.value == value


def make_neg(x: Expr) -> Expr:
    if isinstance(x, Const):
        return Const(-x.value) if x.value != 0 else ZERO
    if isinstance(x, Neg):
        return x.operand
    return Neg(x)


def make_add(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Const) and isinstance(b, Const):
        return _fold(lambda: a.value + b.value) or Add(a, b)
    if _is(a, 0):
        return b
    if _is(b, 0):
        return a
    return Add(a, b)


def make_sub(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Const) and isinstance(b, Const):
        return _fold(lambda: a.value - b.value) or Sub(a, b)
    if _is(b, 0):
        return a
    if _is(a, 0):
        return make_neg(b)
    return Sub(a, b)


def make_mul(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Const) and isinstance(b, Const):
        return _fold(lambda: a.value * b.value) or Mul(a, b)
    if _is(a, 0) or _is(b, 0):
        return ZERO
    if _is(a, 1):
        return b
    if _is(b, 1):
        return a
    if _is(a, -1):
        return make_neg(b)
    if _is(b, -1):
        return make_neg(a)
    return Mul(a, b)


def make_div(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Const) and isinstance(b, Const):
        # Only exact integer quotients fold; 1/2 stays a readable fraction
        if b.value != 0:
            quotient = a.value / b.value
            if math.isfinite(quotient) and quotient.is_integer():
                return Const(quotient)
        return Div(a, b)
    if _is(b, 1):
        return a
    if _is(b, -1):
        return make_neg(a)
    return Div(a, b)


def make_pow(base: Expr, exponent: float) -> Expr:
    exponent = float(exponent)
    if exponent == 0:
        return ONE
    if exponent == 1:
        return base
    if isinstance(base, Const):
        folded = _fold(lambda: math.pow(base.value, exponent))
        if folded is not None:
            return folded
    return Pow(base, exponent)


def make_func(name: str, operand: Expr) -> Expr:
    if isinstance(operand, Const):
        fn, domain, _ = FUNCTIONS[name]
        x = np.array([operand.value])
        if domain is None or not np.any(domain(x)):
            folded = _fold(lambda: fn(x)[0])
            if folded is not None:
                return folded
    return Func(name, operand)


_BINARY_BUILDERS = {Add: make_add, Sub: make_sub, Mul: make_mul, Div: make_div}


def simplify(e: Expr) -> Expr:
    """
    Constant folding and identity elimination (x*0, x*1, x+0, x/1, --x).

    The result is pointwise equal to the input wherever the input is defined,
    and simplify(simplify(e)) == simplify(e).
    """
    if isinstance(e, (Const, Var)):
        return e
    if isinstance(e, Neg):
        return make_neg(simplify(e.operand))
    if isinstance(e, Pow):
        return make_pow(simplify(e.base), e.exponent)
    if isinstance(e, Func):
        return make_func(e.name, simplify(e.operand))
    builder = _BINARY_BUILDERS[type(e)]
    return builder(simplify(e.left), simplify(e.right))


def differentiate(e: Expr) -> Expr:
    """Symbolic derivative d e/dt, simplified."""
    return simplify(e.derivative())
