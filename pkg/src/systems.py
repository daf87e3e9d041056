"""LTV differential systems and their feedback conjugates.

A system of order N is sum_{n=0..N} a_n(t) y^(n)(t) = x(t) on a closed time
interval, with a_N nonvanishing there. Coefficients are kept symbolic so that
they can be differentiated and re-printed.
"""

from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple, Union
import logging

import numpy as np

from .expr import Expr, coerce, evaluate, make_add, make_div, make_mul, make_neg, simplify
from .parsers.expression import parse
from .settings import DEFAULTS

logger = logging.getLogger(__name__)

ExprLike = Union[Expr, str, int, float]
Interval = Tuple[float, float]


class SystemValidationError(ValueError):
    """Base class for invalid systems and gains."""
    pass


class EmptyCoefficients(SystemValidationError):
    """Raised when a system is declared without coefficients."""
    pass


class BadDomain(SystemValidationError):
    """Raised for a degenerate or malformed time interval."""
    pass


class VanishingLeadingCoefficient(SystemValidationError):
    """Raised when |a_N(t)| <= eps_lead somewhere on the validation grid."""

    def __init__(self, message: str, t: float):
        super().__init__(message)
        self.t = t


class VanishingForwardGain(SystemValidationError):
    """Raised when |alpha(t)| <= eps_lead somewhere on the validation grid."""

    def __init__(self, message: str, t: float):
        super().__init__(message)
        self.t = t


def as_expr(value: ExprLike) -> Expr:
    """Accept an Expr, expression text or a number."""
    if isinstance(value, str):
        return parse(value)
    return coerce(value)


def validation_grid(domain: Interval, points: Optional[int] = None) -> np.ndarray:
    """Uniform grid used for the nonvanishing checks."""
    points = points or DEFAULTS.grid_points
    return np.linspace(domain[0], domain[1], points)


def _check_domain(domain: Sequence[float]) -> Interval:
    try:
        t0, t1 = (float(v) for v in domain)
    except (TypeError, ValueError):
        raise BadDomain(f"domain must be a pair of numbers, got {domain!r}")
    if not (np.isfinite(t0) and np.isfinite(t1)) or t1 <= t0:
        raise BadDomain(f"domain must satisfy t0 < t1, got [{t0}, {t1}]")
    return t0, t1


def _first_small(e: Expr, grid: np.ndarray, eps: float) -> Optional[float]:
    values = evaluate(e, grid)
    small = np.abs(values) <= eps
    if np.any(small):
        return float(grid[np.argmax(small)])
    return None


@dataclass(frozen=True)
class LtvSystem:
    """sum a_n(t) y^(n) = x; coeffs[n] is a_n, low order first."""

    coeffs: Tuple[Expr, ...]
    domain: Interval
    name: Optional[str] = field(default=None, compare=False)

    @property
    def order(self) -> int:
        return len(self.coeffs) - 1

    @property
    def leading(self) -> Expr:
        return self.coeffs[-1]

    def label(self) -> str:
        return self.name or f"order-{self.order} system"

    def coefficient_strings(self, prefix: str = 'a') -> dict:
        """Printed coefficients keyed a0..aN."""
        return {f"{prefix}{n}": str(c) for n, c in enumerate(self.coeffs)}

    def sample(self, grid: np.ndarray) -> np.ndarray:
        """Coefficient values, shape (order+1, len(grid))."""
        return np.array([evaluate(c, grid) for c in self.coeffs])

    def to_dict(self) -> dict:
        return {
            'name': self.name,
            'order': self.order,
            'coeffs': [str(c) for c in self.coeffs],
            'domain': list(self.domain),
        }

    def __str__(self) -> str:
        terms = []
        for n, c in reversed(list(enumerate(self.coeffs))):
            derivative = "y" if n == 0 else f"y^({n})"
            terms.append(f"({c})*{derivative}")
        return " + ".join(terms) + " = x"


@dataclass(frozen=True)
class GainPair:
    """Forward path gain alpha(t) and feedback path gain beta(t)."""

    alpha: Expr
    beta: Expr
    name: Optional[str] = field(default=None, compare=False)

    def to_dict(self) -> dict:
        return {'name': self.name, 'alpha': str(self.alpha), 'beta': str(self.beta)}


def make_system(
    coeffs: Sequence[ExprLike],
    domain: Sequence[float],
    name: Optional[str] = None,
    grid_points: Optional[int] = None,
    eps_lead: Optional[float] = None
) -> LtvSystem:
    """
    Build and validate an LTV system.

    Args:
        coeffs: a_0..a_N as Expr, expression text or numbers
        domain: (t0, t1) with t1 > t0
        name: Optional label used in diagnostics
        grid_points: Validation grid size (default 1001)
        eps_lead: Nonvanishing threshold for a_N (default 1e-9)

    Returns:
        Validated LtvSystem

    Raises:
        EmptyCoefficients: No coefficients given
        BadDomain: Degenerate domain
        VanishingLeadingCoefficient: |a_N| <= eps_lead on the grid
    """
    if not coeffs:
        raise EmptyCoefficients(f"{name or 'system'}: coefficient list is empty")
    interval = _check_domain(domain)
    exprs = tuple(as_expr(c) for c in coeffs)
    eps = DEFAULTS.eps_lead if eps_lead is None else eps_lead

    grid = validation_grid(interval, grid_points)
    # Every coefficient must be evaluable on the domain
    for c in exprs:
        evaluate(c, grid)
    bad_t = _first_small(exprs[-1], grid, eps)
    if bad_t is not None:
        raise VanishingLeadingCoefficient(
            f"{name or 'system'}: leading coefficient a{len(exprs) - 1} = {exprs[-1]} "
            f"vanishes at t={bad_t}",
            bad_t
        )

    system = LtvSystem(coeffs=exprs, domain=interval, name=name)
    logger.debug(f"Validated {system.label()} (order {system.order}) on {interval}")
    return system


def make_gains(alpha: ExprLike, beta: ExprLike, name: Optional[str] = None) -> GainPair:
    """Build a gain pair from Expr, text or numbers."""
    return GainPair(alpha=as_expr(alpha), beta=as_expr(beta), name=name)


def validate_gains(
    gains: GainPair,
    domain: Interval,
    grid_points: Optional[int] = None,
    eps_lead: Optional[float] = None
) -> GainPair:
    """
    Check that alpha is nonvanishing and both gains are evaluable on a domain.

    Raises:
        VanishingForwardGain: |alpha| <= eps_lead somewhere on the grid
    """
    eps = DEFAULTS.eps_lead if eps_lead is None else eps_lead
    grid = validation_grid(domain, grid_points)
    evaluate(gains.beta, grid)
    bad_t = _first_small(gains.alpha, grid, eps)
    if bad_t is not None:
        raise VanishingForwardGain(
            f"{gains.name or 'gains'}: forward gain alpha = {gains.alpha} vanishes at t={bad_t}",
            bad_t
        )
    return gains


def feedback_conjugate(
    base: LtvSystem,
    gains: GainPair,
    name: Optional[str] = None
) -> LtvSystem:
    """
    Realize the closed loop of base with gains as a single system.

    b_n = a_n / alpha for n = N..1 and b_0 = a_0 / alpha + beta; the result
    has the same order and domain as base.

    Raises:
        VanishingForwardGain: alpha vanishes on base.domain
    """
    validate_gains(gains, base.domain)
    alpha = simplify(gains.alpha)
    beta = simplify(gains.beta)
    coeffs = [make_div(simplify(a), alpha) for a in base.coeffs]
    coeffs[0] = make_add(coeffs[0], beta)
    label = name or f"{base.label()} | alpha={alpha}, beta={beta}"
    conjugate = make_system(coeffs, base.domain, name=label)
    logger.debug(f"Feedback conjugate of {base.label()}: {conjugate.coefficient_strings('b')}")
    return conjugate


def scaled(system: LtvSystem, factor: float, name: Optional[str] = None) -> LtvSystem:
    """Multiply every coefficient by a constant."""
    k = coerce(factor)
    return make_system(
        [make_mul(k, simplify(c)) for c in system.coeffs],
        system.domain,
        name=name or system.name
    )


def negated(system: LtvSystem) -> LtvSystem:
    """The equivalent system with all coefficients negated."""
    return make_system(
        [make_neg(simplify(c)) for c in system.coeffs],
        system.domain,
        name=system.name
    )


def is_time_invariant(system: LtvSystem, tau_const: Optional[float] = None) -> bool:
    """
    True when every coefficient is constant on the validation grid.

    Constancy uses max|s - mean| / (1 + |mean|) <= tau_const.
    """
    tau = DEFAULTS.tau_const if tau_const is None else tau_const
    samples = system.sample(validation_grid(system.domain))
    means = samples.mean(axis=1, keepdims=True)
    spread = np.max(np.abs(samples - means), axis=1) / (1.0 + np.abs(means[:, 0]))
    return bool(np.all(spread <= tau))


def scalar_invariant_conjugate(base: LtvSystem, beta: float) -> GainPair:
    """
    Gains turning an order-0 system into a time-invariant commutative pair.

    With alpha = -a_0 and constant beta the conjugate is the constant scalar
    gain beta - 1.
    """
    if base.order != 0:
        raise SystemValidationError(
            f"{base.label()}: scalar conjugate requires an order-0 system, got order {base.order}"
        )
    return GainPair(alpha=make_neg(simplify(base.coeffs[0])), beta=coerce(beta))
