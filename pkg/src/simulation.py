"""State-form conversion and fixed-step RK4 simulation under zero initial conditions.

Every configuration (single system, cascade, feedback loop) is reduced to a
tabulated linear realization

    z'(t) = M(t) z + B(t) x(t),    y(t) = C(t) z + D(t) x(t)

sampled on the half-step grid t0, t0 + h/2, ..., t1 that classical RK4 visits.
Order-0 systems are pure feedthrough blocks (no state, D = 1/a0).
"""

from dataclasses import dataclass, replace
from typing import List, Optional, Sequence, Tuple
import logging

import numpy as np
import pandas as pd

from .expr import evaluate
from .settings import DEFAULTS
from .signals import Signal
from .systems import GainPair, LtvSystem, validate_gains

logger = logging.getLogger(__name__)

DOMAIN_TOLERANCE = 1e-12


class SimulationError(RuntimeError):
    """Base class for simulation failures."""
    pass


class NonFiniteState(SimulationError):
    """Raised when the integrated state leaves the blow-up threshold."""

    def __init__(self, message: str, t: float):
        super().__init__(message)
        self.t = t


class DomainMismatch(SimulationError):
    """Raised when cascaded systems are declared on different intervals."""
    pass


class GridMismatch(SimulationError):
    """Raised when traces on different grids are compared."""
    pass


class InvalidStep(SimulationError):
    """Raised when the step does not divide the domain into >= 10 steps."""
    pass


class SingularLoop(SimulationError):
    """Raised when an algebraic feedback loop has no solution (1 + D*alpha*beta = 0)."""
    pass


@dataclass(frozen=True)
class SolverOptions:
    """Fixed RK4 step and the refinement factor for verdict-stability reruns."""

    step: float = DEFAULTS.step
    refinement: int = DEFAULTS.refinement
    blowup_threshold: float = DEFAULTS.blowup_threshold

    def refined(self) -> 'SolverOptions':
        return replace(self, step=self.step / self.refinement)

    def steps_for(self, domain: Tuple[float, float]) -> int:
        """
        Number of steps covering the domain.

        Raises:
            InvalidStep: Non-positive step, fewer than 10 steps, or a step
                that does not divide the domain
        """
        if not self.step > 0:
            raise InvalidStep(f"step must be positive, got {self.step}")
        span = domain[1] - domain[0]
        n = int(round(span / self.step))
        if n < 10:
            raise InvalidStep(
                f"step {self.step} gives {n} steps on [{domain[0]}, {domain[1]}]; at least 10 required"
            )
        if abs(n * self.step - span) > 1e-9 * max(span, 1.0):
            raise InvalidStep(f"step {self.step} does not divide [{domain[0]}, {domain[1]}]")
        return n

    def to_dict(self) -> dict:
        return {'step': self.step, 'refinement': self.refinement,
                'blowup_threshold': self.blowup_threshold}


@dataclass(frozen=True, eq=False)
class Trace:
    """Sampled input/output pair on a uniform grid."""

    grid: np.ndarray
    input: np.ndarray
    output: np.ndarray
    state_dim: int
    label: str = ''

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({'t': self.grid, 'x': self.input, 'y': self.output})

    def __len__(self) -> int:
        return len(self.grid)


@dataclass(frozen=True, eq=False)
class LinearRealization:
    """State-space data tabulated at T sample times (see module docstring)."""

    matrix: np.ndarray       # (T, d, d)
    input_gain: np.ndarray   # (T, d)
    output_gain: np.ndarray  # (T, d)
    feedthrough: np.ndarray  # (T,)

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]


class StateForm:
    """Companion-form view of one LTV system.

    With z = (y, y', ..., y^(N-1)) the system becomes
    z_i' = z_{i+1} for i < N-1 and z_{N-1}' = (x - sum_{n<N} a_n z_n) / a_N.
    """

    def __init__(self, system: LtvSystem):
        self.system = system
        self.order = system.order

    def realize(self, times: np.ndarray) -> LinearRealization:
        """Tabulate M, B, C, D at the given times (vectorized)."""
        times = np.asarray(times, dtype=float)
        count = len(times)
        a = self.system.sample(times)
        n = self.order
        lead = a[n]

        matrix = np.zeros((count, n, n))
        input_gain = np.zeros((count, n))
        output_gain = np.zeros((count, n))
        feedthrough = np.zeros(count)

        if n == 0:
            feedthrough = 1.0 / lead
        else:
            for i in range(n - 1):
                matrix[:, i, i + 1] = 1.0
            matrix[:, n - 1, :] = -(a[:n] / lead).T
            input_gain[:, n - 1] = 1.0 / lead
            output_gain[:, 0] = 1.0

        return LinearRealization(matrix, input_gain, output_gain, feedthrough)

    def derivative(self, t: float, z: Sequence[float], x: float) -> np.ndarray:
        """
        State derivative z' at time t for state z and input value x.

        Raises:
            ValueError: For order-0 systems, which have no state
        """
        if self.order == 0:
            raise ValueError(f"{self.system.label()} is order 0 and has no state; use algebraic_output")
        z = np.asarray(z, dtype=float)
        if z.shape != (self.order,):
            raise ValueError(f"state must have length {self.order}, got shape {z.shape}")
        real = self.realize(np.array([float(t)]))
        return real.matrix[0] @ z + real.input_gain[0] * float(x)

    def algebraic_output(self, t: float, x: float) -> float:
        """Output y = x / a_0(t) of an order-0 system."""
        if self.order != 0:
            raise ValueError(f"{self.system.label()} is order {self.order}; algebraic output needs order 0")
        return float(x) / evaluate(self.system.coeffs[0], float(t))


def to_state_form(system: LtvSystem) -> StateForm:
    """Companion-form derivative evaluator (or algebraic map for order 0)."""
    return StateForm(system)


def cascade_realization(first: LinearRealization, second: LinearRealization) -> LinearRealization:
    """Series connection: the output of first drives second."""
    d1, d2 = first.dim, second.dim
    count = first.matrix.shape[0]
    dim = d1 + d2

    matrix = np.zeros((count, dim, dim))
    matrix[:, :d1, :d1] = first.matrix
    matrix[:, d1:, d1:] = second.matrix
    matrix[:, d1:, :d1] = second.input_gain[:, :, None] * first.output_gain[:, None, :]

    input_gain = np.concatenate(
        [first.input_gain, second.input_gain * first.feedthrough[:, None]], axis=1
    )
    output_gain = np.concatenate(
        [second.feedthrough[:, None] * first.output_gain, second.output_gain], axis=1
    )
    feedthrough = second.feedthrough * first.feedthrough
    return LinearRealization(matrix, input_gain, output_gain, feedthrough)


def feedback_realization(
    base: LinearRealization,
    alpha: np.ndarray,
    beta: np.ndarray
) -> LinearRealization:
    """
    Closed loop with forward gain alpha and feedback gain beta:
    x_A = alpha * (x - beta * y_A), y = y_A.

    Raises:
        SingularLoop: 1 + D*alpha*beta vanishes (algebraic loop of an order-0 base)
    """
    loop = 1.0 + base.feedthrough * alpha * beta
    if np.any(np.abs(loop) <= DEFAULTS.eps_lead):
        raise SingularLoop("algebraic feedback loop is singular (1 + alpha*beta/a0 = 0)")

    coupling = (alpha * beta / loop)[:, None, None]
    matrix = base.matrix - coupling * base.input_gain[:, :, None] * base.output_gain[:, None, :]
    input_gain = base.input_gain * (alpha / loop)[:, None]
    output_gain = base.output_gain / loop[:, None]
    feedthrough = base.feedthrough * alpha / loop
    return LinearRealization(matrix, input_gain, output_gain, feedthrough)


def half_step_times(domain: Tuple[float, float], steps: int) -> np.ndarray:
    """t0, t0 + h/2, ..., t1 with h = (t1 - t0) / steps."""
    return np.linspace(domain[0], domain[1], 2 * steps + 1)


def integrate(
    real: LinearRealization,
    inputs: np.ndarray,
    times: np.ndarray,
    blowup_threshold: float = DEFAULTS.blowup_threshold
) -> np.ndarray:
    """
    Classical RK4 from zero state for one or more input columns.

    For a linear right-hand side each RK4 step is the affine map
    z_{k+1} = Phi_k z_k + Gamma_k; Phi and Gamma are assembled for all steps
    at once from the stage matrices and the recurrence is then swept.

    Args:
        real: Realization tabulated at the half-step times
        inputs: Input samples, shape (2n+1, P)
        times: Half-step times, shape (2n+1,)
        blowup_threshold: Largest admissible |z|

    Returns:
        Outputs on the grid times[0::2], shape (n+1, P)

    Raises:
        NonFiniteState: Some |z| exceeds the threshold or is not finite
    """
    steps = (len(times) - 1) // 2
    h = (times[-1] - times[0]) / steps
    d = real.dim
    x_grid = inputs[0::2]

    with np.errstate(all='ignore'):
        if d == 0:
            outputs = real.feedthrough[0::2, None] * x_grid
            _check_finite(outputs, times[0::2], blowup_threshold, 'output')
            return outputs

        m0 = real.matrix[0:-1:2]
        m1 = real.matrix[1::2]
        m2 = real.matrix[2::2]
        u = real.input_gain[:, :, None] * inputs[:, None, :]
        u0, u1, u2 = u[0:-1:2], u[1::2], u[2::2]

        k1 = m0
        k2 = m1 + (h / 2) * (m1 @ k1)
        k3 = m1 + (h / 2) * (m1 @ k2)
        k4 = m2 + h * (m2 @ k3)
        phi = np.eye(d) + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)

        g1 = u0
        g2 = (h / 2) * (m1 @ g1) + u1
        g3 = (h / 2) * (m1 @ g2) + u1
        g4 = h * (m2 @ g3) + u2
        gamma = (h / 6) * (g1 + 2 * g2 + 2 * g3 + g4)

        states = np.zeros((steps + 1, d, inputs.shape[1]))
        for k in range(steps):
            states[k + 1] = phi[k] @ states[k] + gamma[k]

        _check_finite(states, times[0::2], blowup_threshold, 'state')

        c = real.output_gain[0::2]
        outputs = np.einsum('kd,kdp->kp', c, states) + real.feedthrough[0::2, None] * x_grid

    logger.debug(f"RK4: {steps} steps, h={h:g}, state dim {d}, {inputs.shape[1]} input(s)")
    return outputs


def _check_finite(values: np.ndarray, grid: np.ndarray, threshold: float, what: str):
    bad = ~np.isfinite(values) | (np.abs(values) > threshold)
    if np.any(bad):
        per_time = bad.reshape(len(grid), -1).any(axis=1)
        t = float(grid[np.argmax(per_time)])
        raise NonFiniteState(f"{what} exceeded {threshold:g} at t={t}", t)


def _resolve(opts: Optional[SolverOptions]) -> SolverOptions:
    return opts if opts is not None else SolverOptions()


def _common_domain(*systems: LtvSystem) -> Tuple[float, float]:
    domain = systems[0].domain
    for other in systems[1:]:
        if any(abs(a - b) > DOMAIN_TOLERANCE for a, b in zip(domain, other.domain)):
            raise DomainMismatch(
                f"{systems[0].label()} is on {list(domain)} but {other.label()} is on {list(other.domain)}"
            )
    return domain


def _input_matrix(signals: Sequence[Signal], times: np.ndarray) -> np.ndarray:
    return np.stack([np.asarray(s.evaluate(times), dtype=float) for s in signals], axis=1)


def _traces(
    outputs: np.ndarray,
    inputs: np.ndarray,
    times: np.ndarray,
    dim: int,
    signals: Sequence[Signal],
    label: str
) -> List[Trace]:
    grid = times[0::2]
    return [
        Trace(grid=grid, input=inputs[0::2, p].copy(), output=outputs[:, p].copy(),
              state_dim=dim, label=f"{label} [{signal.name}]")
        for p, signal in enumerate(signals)
    ]


def simulate_many(
    system: LtvSystem,
    signals: Sequence[Signal],
    opts: Optional[SolverOptions] = None
) -> List[Trace]:
    """simulate() for several inputs sharing one integration."""
    opts = _resolve(opts)
    times = half_step_times(system.domain, opts.steps_for(system.domain))
    real = StateForm(system).realize(times)
    inputs = _input_matrix(signals, times)
    outputs = integrate(real, inputs, times, opts.blowup_threshold)
    return _traces(outputs, inputs, times, real.dim, signals, system.label())


def simulate(system: LtvSystem, signal: Signal, opts: Optional[SolverOptions] = None) -> Trace:
    """
    Zero-initial-state response of one system.

    Raises:
        NonFiniteState: Integration blow-up, with the time of failure
    """
    return simulate_many(system, [signal], opts)[0]


def simulate_cascade_many(
    first: LtvSystem,
    second: LtvSystem,
    signals: Sequence[Signal],
    opts: Optional[SolverOptions] = None
) -> List[Trace]:
    """simulate_cascade() for several inputs sharing one integration."""
    opts = _resolve(opts)
    domain = _common_domain(first, second)
    times = half_step_times(domain, opts.steps_for(domain))
    real = cascade_realization(StateForm(first).realize(times), StateForm(second).realize(times))
    inputs = _input_matrix(signals, times)
    outputs = integrate(real, inputs, times, opts.blowup_threshold)
    return _traces(outputs, inputs, times, real.dim, signals,
                   f"{first.label()} -> {second.label()}")


def simulate_cascade(
    first: LtvSystem,
    second: LtvSystem,
    signal: Signal,
    opts: Optional[SolverOptions] = None
) -> Trace:
    """
    Series connection: x drives first, first's output drives second.

    The joint state has dimension N_first + N_second and is integrated as one
    system; the returned trace holds the overall (x, y) pair.

    Raises:
        DomainMismatch: The systems are declared on different intervals
        NonFiniteState: Integration blow-up
    """
    return simulate_cascade_many(first, second, [signal], opts)[0]


def simulate_closed_loop(
    base: LtvSystem,
    gains: GainPair,
    signal: Signal,
    opts: Optional[SolverOptions] = None
) -> Trace:
    """
    Feedback conjugate simulated as a loop: x_A = alpha (x - beta y_A), y = y_A.

    Raises:
        VanishingForwardGain: alpha vanishes on the domain
        NonFiniteState: Integration blow-up
    """
    opts = _resolve(opts)
    validate_gains(gains, base.domain)
    times = half_step_times(base.domain, opts.steps_for(base.domain))
    alpha = evaluate(gains.alpha, times)
    beta = evaluate(gains.beta, times)
    real = feedback_realization(StateForm(base).realize(times), alpha, beta)
    inputs = _input_matrix([signal], times)
    outputs = integrate(real, inputs, times, opts.blowup_threshold)
    return _traces(outputs, inputs, times, real.dim, [signal], f"{base.label()} (closed loop)")[0]


def discrepancy(a: Trace, b: Trace) -> float:
    """
    D = max|y_a - y_b| / (1 + max(max|y_a|, max|y_b|)).

    Raises:
        GridMismatch: The traces are not on the same grid
    """
    if a.grid.shape != b.grid.shape or np.max(np.abs(a.grid - b.grid)) > DOMAIN_TOLERANCE:
        raise GridMismatch(f"cannot compare traces on different grids ({len(a)} vs {len(b)} points)")
    scale = 1.0 + max(np.max(np.abs(a.output)), np.max(np.abs(b.output)))
    return float(np.max(np.abs(a.output - b.output)) / scale)
