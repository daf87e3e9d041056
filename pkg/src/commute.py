"""Commutativity decisions for LTV systems and their feedback conjugates.

Three kinds of evidence are offered:
  - numerical: simulate both cascade orders over a probe family and compare
  - structural: solve for the constant vector c relating B's coefficients to A's (N = 1, 2)
  - gain-level: constancy of the gains (single conjugate) or the linear relation
    between two gain pairs (pair of conjugates)
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence, Tuple
import logging

import numpy as np

from .expr import coerce, differentiate, evaluate, make_add, make_div, make_mul, simplify
from .settings import DEFAULTS
from .signals import Signal, default_probes
from .simulation import (
    NonFiniteState, SolverOptions, Trace, discrepancy, simulate_cascade_many
)
from .systems import (
    GainPair, LtvSystem, VanishingForwardGain, negated, validation_grid
)

logger = logging.getLogger(__name__)

RELATIONS = ('derived', 'printed')


class CheckError(ValueError):
    """Base class for failures of the structural and gain-level checks."""
    pass


class OrderMismatch(CheckError):
    """Raised when a check is applied to systems of the wrong order."""
    pass


class VanishingDivisor(CheckError):
    """Raised when a1 vanishes on the grid used for the first-order check."""

    def __init__(self, message: str, t: float):
        super().__init__(message)
        self.t = t


class NonPositiveLeading(CheckError):
    """Raised when a2 changes sign or vanishes (the square root needs a2 > 0)."""

    def __init__(self, message: str, t: float):
        super().__init__(message)
        self.t = t


class DegenerateAlpha(CheckError):
    """Raised when alpha1 is too close to zero to identify p."""
    pass


class Decision(str, Enum):
    COMMUTATIVE = 'Commutative'
    NOT_COMMUTATIVE = 'NotCommutative'
    INCONCLUSIVE = 'Inconclusive'
    ALWAYS_COMMUTATIVE = 'AlwaysCommutative'


@dataclass
class ProbeDiscrepancy:
    """AB/BA discrepancy of one probe at the base and refined steps."""

    probe: str
    base: float
    refined: float

    def to_dict(self) -> Dict[str, Any]:
        return {'probe': self.probe, 'base': self.base, 'refined': self.refined}


@dataclass
class Verdict:
    """Outcome of numerical_commute_check."""

    decision: Decision
    discrepancy: Optional[float]
    probes: List[ProbeDiscrepancy]
    steps: Tuple[float, float]
    step_discrepancies: Tuple[Optional[float], Optional[float]]
    diagnostic: Optional[str] = None
    traces: Dict[str, Tuple[Trace, Trace]] = field(default_factory=dict, repr=False)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'decision': self.decision.value,
            'discrepancy': self.discrepancy,
            'steps': list(self.steps),
            'step_discrepancies': list(self.step_discrepancies),
            'probes': [p.to_dict() for p in self.probes],
            'diagnostic': self.diagnostic,
        }


@dataclass
class StructuralResult:
    """Solved constants (c_N, ..., c_0) and their residual profile."""

    satisfied: bool
    constants: Tuple[float, ...]
    residuals: Tuple[float, ...]
    order: int
    tau_const: float
    negated: bool = False

    @property
    def max_residual(self) -> float:
        return max(self.residuals)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'satisfied': self.satisfied,
            'meaning': 'necessary conditions satisfied' if self.satisfied
                       else 'necessary conditions violated',
            'order': self.order,
            'constants': list(self.constants),
            'residuals': list(self.residuals),
            'tau_const': self.tau_const,
            'negated': self.negated,
        }


@dataclass
class GainVerdict:
    """Gain-constancy classification of one feedback conjugate."""

    decision: Decision
    order: int
    alpha_residual: float
    beta_residual: float
    c_lead: Optional[float] = None
    c0: Optional[float] = None
    constants: Optional[Tuple[float, ...]] = None

    def to_dict(self) -> Dict[str, Any]:
        return {
            'decision': self.decision.value,
            'order': self.order,
            'alpha_residual': self.alpha_residual,
            'beta_residual': self.beta_residual,
            'c_lead': self.c_lead,
            'c0': self.c0,
            'constants': list(self.constants) if self.constants is not None else None,
        }


@dataclass
class RelationFit:
    """Fitted (p, q) with alpha2 = p*alpha1 and beta2 = beta1/p + q (or p*beta1 + q)."""

    p: float
    q: float
    alpha_residual: float
    beta_residual: float
    satisfied: bool
    relation: str = 'derived'

    @property
    def c_lead(self) -> float:
        return 1.0 / self.p

    @property
    def c0(self) -> float:
        return self.q

    def to_dict(self) -> Dict[str, Any]:
        return {
            'p': self.p,
            'q': self.q,
            'c_lead': self.c_lead,
            'c0': self.c0,
            'alpha_residual': self.alpha_residual,
            'beta_residual': self.beta_residual,
            'satisfied': self.satisfied,
            'relation': self.relation,
        }


def constancy_measure(samples: Sequence[float]) -> float:
    """
    max_k |s_k - mean| / (1 + |mean|).

    Raises:
        ValueError: Empty samples
    """
    values = np.asarray(samples, dtype=float)
    if values.size == 0:
        raise ValueError("constancy_measure needs at least one sample")
    mean = values.mean()
    return float(np.max(np.abs(values - mean)) / (1.0 + abs(mean)))


def _classify(base: float, refined: float, tau_pass: float, tau_fail: float) -> Decision:
    if base < tau_pass and refined < tau_pass:
        return Decision.COMMUTATIVE
    if base > tau_fail and refined > tau_fail:
        return Decision.NOT_COMMUTATIVE
    return Decision.INCONCLUSIVE


def numerical_commute_check(
    a: LtvSystem,
    b: LtvSystem,
    probes: Optional[Sequence[Signal]] = None,
    opts: Optional[SolverOptions] = None,
    keep_traces: bool = False,
    tau_pass: Optional[float] = None,
    tau_fail: Optional[float] = None
) -> Verdict:
    """
    Compare the AB and BA cascades over a probe family at h and h/refinement.

    Args:
        a: First system
        b: Second system
        probes: Input signals (default: the 4-signal family on a's domain)
        opts: Solver options
        keep_traces: Keep the base-step AB/BA traces per probe
        tau_pass: Commutative when D < tau_pass at both steps
        tau_fail: NotCommutative when D > tau_fail at both steps

    Returns:
        Verdict; a blow-up on any probe yields Inconclusive with a diagnostic

    Raises:
        DomainMismatch: Systems declared on different intervals
    """
    opts = opts or SolverOptions()
    probes = list(probes) if probes else default_probes(a.domain)
    tau_pass = DEFAULTS.tau_pass if tau_pass is None else tau_pass
    tau_fail = DEFAULTS.tau_fail if tau_fail is None else tau_fail
    refined = opts.refined()
    steps = (opts.step, refined.step)

    per_step: List[List[float]] = []
    traces: Dict[str, Tuple[Trace, Trace]] = {}
    for level, level_opts in enumerate((opts, refined)):
        try:
            ab = simulate_cascade_many(a, b, probes, level_opts)
            ba = simulate_cascade_many(b, a, probes, level_opts)
        except NonFiniteState as e:
            diagnostic = f"blow-up at h={level_opts.step:g}: {e}"
            logger.warning(f"{a.label()} vs {b.label()}: Inconclusive ({diagnostic})")
            return Verdict(
                decision=Decision.INCONCLUSIVE,
                discrepancy=None,
                probes=[],
                steps=steps,
                step_discrepancies=(None, None),
                diagnostic=diagnostic,
            )
        per_step.append([discrepancy(x, y) for x, y in zip(ab, ba)])
        if keep_traces and level == 0:
            traces = {s.name: (x, y) for s, x, y in zip(probes, ab, ba)}

    results = [
        ProbeDiscrepancy(s.name, base, fine)
        for s, base, fine in zip(probes, per_step[0], per_step[1])
    ]
    worst_base = max(per_step[0])
    worst_refined = max(per_step[1])
    decision = _classify(worst_base, worst_refined, tau_pass, tau_fail)

    for r in results:
        logger.debug(f"  probe {r.probe}: D={r.base:.3e} (h), {r.refined:.3e} (h/{opts.refinement})")
    message = f"{a.label()} vs {b.label()}: {decision.value} (D={worst_base:.3e}, {worst_refined:.3e})"
    if decision == Decision.INCONCLUSIVE:
        logger.warning(message)
    else:
        logger.info(message)

    return Verdict(
        decision=decision,
        discrepancy=max(worst_base, worst_refined),
        probes=results,
        steps=steps,
        step_discrepancies=(worst_base, worst_refined),
        traces=traces,
    )


def _check_orders(a: LtvSystem, b: LtvSystem, order: int):
    if a.order != order or b.order != order:
        raise OrderMismatch(
            f"order-{order} check needs two order-{order} systems, got {a.order} and {b.order}"
        )


def _grid_for(a: LtvSystem, grid: Optional[np.ndarray]) -> np.ndarray:
    return validation_grid(a.domain) if grid is None else np.asarray(grid, dtype=float)


def _result(constants, profiles, order, tau, negated_pair=False) -> StructuralResult:
    residuals = tuple(constancy_measure(p) for p in profiles)
    return StructuralResult(
        satisfied=all(r <= tau for r in residuals),
        constants=tuple(float(c) for c in constants),
        residuals=residuals,
        order=order,
        tau_const=tau,
        negated=negated_pair,
    )


def structural_check_n1(
    a: LtvSystem,
    b: LtvSystem,
    grid: Optional[np.ndarray] = None,
    tau_const: Optional[float] = None
) -> StructuralResult:
    """
    First-order condition: b1 = a1*c1 and b0 = a0*c1 + c0 with constant c.

    c1(t) = b1/a1 is averaged first; c0(t) = b0 - a0*mean(c1) is then formed
    with that mean and the residuals are measured against both means.

    Raises:
        OrderMismatch: Either system is not order 1
        VanishingDivisor: |a1| <= eps_lead on the grid
    """
    _check_orders(a, b, 1)
    tau = DEFAULTS.tau_const if tau_const is None else tau_const
    grid = _grid_for(a, grid)
    (a0, a1), (b0, b1) = a.sample(grid), b.sample(grid)

    small = np.abs(a1) <= DEFAULTS.eps_lead
    if np.any(small):
        t = float(grid[np.argmax(small)])
        raise VanishingDivisor(f"{a.label()}: a1 vanishes at t={t}", t)

    c1 = b1 / a1
    c1_bar = c1.mean()
    c0 = b0 - a0 * c1_bar
    result = _result((c1_bar, c0.mean()), (c1, c0), 1, tau)
    logger.debug(f"n1 structural check: c={result.constants}, residuals={result.residuals}")
    return result


def structural_check_n2(
    a: LtvSystem,
    b: LtvSystem,
    grid: Optional[np.ndarray] = None,
    tau_const: Optional[float] = None
) -> StructuralResult:
    """
    Second-order condition solved by back-substitution.

    c2 = b2/a2, c1 = (b1 - a1*c2)/sqrt(a2) and
    c0 = b0 - a0*c2 - c1*(2*a1 - a2')/(4*sqrt(a2)), with a2' symbolic.
    If a2 < 0 everywhere both systems are negated first and the result
    records it.

    Raises:
        OrderMismatch: Either system is not order 2
        NonPositiveLeading: a2 vanishes or changes sign on the grid
    """
    _check_orders(a, b, 2)
    tau = DEFAULTS.tau_const if tau_const is None else tau_const
    grid = _grid_for(a, grid)
    eps = DEFAULTS.eps_lead

    lead = evaluate(a.leading, grid)
    flipped = False
    if np.all(lead < -eps):
        a, b = negated(a), negated(b)
        flipped = True
        logger.info(f"{a.label()}: a2 < 0 on the grid, negating both systems")
    elif not np.all(lead > eps):
        bad = lead <= eps
        t = float(grid[np.argmax(bad)])
        raise NonPositiveLeading(f"{a.label()}: a2 is not positive at t={t}", t)

    (a0, a1, a2), (b0, b1, b2) = a.sample(grid), b.sample(grid)
    a2_dot = evaluate(differentiate(a.leading), grid)
    root = np.sqrt(a2)

    c2 = b2 / a2
    c2_bar = c2.mean()
    c1 = (b1 - a1 * c2_bar) / root
    c1_bar = c1.mean()
    c0 = b0 - a0 * c2_bar - c1_bar * (2.0 * a1 - a2_dot) / (4.0 * root)

    result = _result((c2_bar, c1_bar, c0.mean()), (c2, c1, c0), 2, tau, flipped)
    logger.debug(f"n2 structural check: c={result.constants}, residuals={result.residuals}")
    return result


def structural_check(
    a: LtvSystem,
    b: LtvSystem,
    grid: Optional[np.ndarray] = None,
    tau_const: Optional[float] = None
) -> StructuralResult:
    """Dispatch to the first- or second-order check."""
    if a.order != b.order:
        raise OrderMismatch(f"structural checks need equal orders, got {a.order} and {b.order}")
    if a.order == 1:
        return structural_check_n1(a, b, grid, tau_const)
    if a.order == 2:
        return structural_check_n2(a, b, grid, tau_const)
    raise OrderMismatch(f"structural checks are available for orders 1 and 2, got {a.order}")


def _sample_gains(gains: GainPair, grid: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    alpha = evaluate(gains.alpha, grid)
    beta = evaluate(gains.beta, grid)
    small = np.abs(alpha) <= DEFAULTS.eps_lead
    if np.any(small):
        t = float(grid[np.argmax(small)])
        raise VanishingForwardGain(
            f"{gains.name or 'gains'}: forward gain alpha = {gains.alpha} vanishes at t={t}", t
        )
    return alpha, beta


def _gain_grid(grid: Optional[np.ndarray], domain: Optional[Sequence[float]]) -> np.ndarray:
    if grid is not None:
        return np.asarray(grid, dtype=float)
    if domain is None:
        logger.debug(f"no grid or domain given; sampling gains on the default domain {DEFAULTS.domain}")
    return validation_grid(DEFAULTS.domain if domain is None else domain)


def theorem1_check(
    base_order: int,
    gains: GainPair,
    grid: Optional[np.ndarray] = None,
    tau_const: Optional[float] = None,
    domain: Optional[Sequence[float]] = None
) -> GainVerdict:
    """
    Decide whether a system commutes with its feedback conjugate from the gains alone.

    Order-0 bases are always commutative. Otherwise the pair commutes iff
    alpha and beta are both constant, and then c_N = 1/alpha and c_0 = beta
    with every intermediate constant zero.

    Args:
        base_order: Order N of the base system
        gains: Forward and feedback gains
        grid: Sample times (default: validation grid on domain)
        tau_const: Constancy threshold
        domain: Interval the gains act on when no grid is given
            (default: the configured default domain)

    Returns:
        GainVerdict

    Raises:
        VanishingForwardGain: alpha vanishes on the grid
    """
    tau = DEFAULTS.tau_const if tau_const is None else tau_const
    alpha, beta = _sample_gains(gains, _gain_grid(grid, domain))
    alpha_residual = constancy_measure(alpha)
    beta_residual = constancy_measure(beta)

    if base_order == 0:
        return GainVerdict(Decision.ALWAYS_COMMUTATIVE, 0, alpha_residual, beta_residual)

    if alpha_residual <= tau and beta_residual <= tau:
        c_lead = 1.0 / float(alpha.mean())
        c0 = float(beta.mean())
        constants = (c_lead,) + (0.0,) * (base_order - 1) + (c0,)
        return GainVerdict(Decision.COMMUTATIVE, base_order, alpha_residual, beta_residual,
                           c_lead, c0, constants)

    logger.debug(f"theorem1: alpha residual {alpha_residual:.3e}, beta residual {beta_residual:.3e}")
    return GainVerdict(Decision.NOT_COMMUTATIVE, base_order, alpha_residual, beta_residual)


def theorem2_fit(
    g1: GainPair,
    g2: GainPair,
    grid: Optional[np.ndarray] = None,
    tau_const: Optional[float] = None,
    relation: str = 'derived',
    eps_degenerate: Optional[float] = None,
    domain: Optional[Sequence[float]] = None
) -> RelationFit:
    """
    Fit the relation between the gains of two conjugates of the same system.

    alpha2 = p*alpha1 is fitted by least squares. With relation='derived'
    the feedback gains must satisfy beta2 = beta1/p + q; relation='printed'
    tests beta2 = p*beta1 + q instead, which only agrees when p^2 = 1.

    The gains are sampled on grid, or on the validation grid of domain
    (default: the configured default domain) when no grid is given.

    Returns:
        RelationFit with c_N = 1/p and c_0 = q

    Raises:
        DegenerateAlpha: sum(alpha1^2) <= eps_degenerate
        ValueError: Unknown relation
    """
    if relation not in RELATIONS:
        raise ValueError(f"relation must be one of {RELATIONS}, got '{relation}'")
    tau = DEFAULTS.tau_const if tau_const is None else tau_const
    eps = DEFAULTS.eps_degenerate if eps_degenerate is None else eps_degenerate
    grid = _gain_grid(grid, domain)
    alpha1, beta1 = _sample_gains(g1, grid)
    alpha2, beta2 = _sample_gains(g2, grid)

    energy = float(np.sum(alpha1 ** 2))
    if energy <= eps:
        raise DegenerateAlpha(f"sum of alpha1^2 is {energy:g}; p cannot be identified")

    p = float(np.sum(alpha1 * alpha2) / energy)
    alpha_residual = float(np.max(np.abs(alpha2 - p * alpha1)) / (1.0 + np.max(np.abs(alpha2))))

    if abs(p) <= eps:
        return RelationFit(p, 0.0, alpha_residual, float('inf'), False, relation)

    mapped = beta1 / p if relation == 'derived' else p * beta1
    q = float(np.mean(beta2 - mapped))
    beta_residual = float(np.max(np.abs(beta2 - mapped - q)) / (1.0 + np.max(np.abs(beta2))))

    satisfied = alpha_residual <= tau and beta_residual <= tau
    logger.debug(f"theorem2 ({relation}): p={p:g}, q={q:g}, residuals "
                 f"{alpha_residual:.3e}/{beta_residual:.3e}")
    return RelationFit(p, q, alpha_residual, beta_residual, satisfied, relation)


def related_gains(
    g1: GainPair,
    p: float,
    q: float,
    relation: str = 'derived',
    name: Optional[str] = None
) -> GainPair:
    """
    Gains alpha2 = p*alpha1 and beta2 = beta1/p + q ('derived') or p*beta1 + q ('printed').
    """
    if relation not in RELATIONS:
        raise ValueError(f"relation must be one of {RELATIONS}, got '{relation}'")
    if p == 0:
        raise DegenerateAlpha("p must be nonzero")
    p_expr, q_expr = coerce(p), coerce(q)
    alpha = make_mul(p_expr, simplify(g1.alpha))
    if relation == 'derived':
        beta = make_add(make_div(simplify(g1.beta), p_expr), q_expr)
    else:
        beta = make_add(make_mul(p_expr, simplify(g1.beta)), q_expr)
    return GainPair(alpha=alpha, beta=beta, name=name)
