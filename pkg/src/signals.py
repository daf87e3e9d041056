"""Input signals for simulations and the default probe family.

Every signal evaluates on numpy time arrays. The probe family approximates the
"for all inputs" quantifier of commutativity by falsification.
"""

from dataclasses import dataclass
from typing import List, Sequence, Tuple
import logging
import math

import numpy as np

from .expr import Expr, evaluate

logger = logging.getLogger(__name__)


class Signal:
    """Base class: a named real function of time."""

    name: str = 'signal'
    kind: str = 'signal'

    def evaluate(self, t: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class Step(Signal):
    """Unit step at the start of the simulation domain: x(t) = amplitude for t >= t0."""

    amplitude: float = 1.0
    name: str = 'step'
    kind = 'step'

    def evaluate(self, t: np.ndarray) -> np.ndarray:
        return np.full(np.shape(t), self.amplitude, dtype=float)

    def to_dict(self) -> dict:
        return {'kind': self.kind, 'amplitude': self.amplitude}


@dataclass(frozen=True)
class Sinusoid(Signal):
    amplitude: float = 1.0
    omega: float = 1.0
    phase: float = 0.0
    name: str = 'sinusoid'
    kind = 'sinusoid'

    def evaluate(self, t: np.ndarray) -> np.ndarray:
        return self.amplitude * np.sin(self.omega * np.asarray(t, dtype=float) + self.phase)

    def to_dict(self) -> dict:
        return {'kind': self.kind, 'amplitude': self.amplitude,
                'omega': self.omega, 'phase': self.phase}


@dataclass(frozen=True)
class Chirp(Signal):
    """Linear chirp sweeping f0 -> f1 (Hz) over [t0, t1]."""

    amplitude: float
    f0: float
    f1: float
    t0: float
    t1: float
    name: str = 'chirp'
    kind = 'chirp'

    def evaluate(self, t: np.ndarray) -> np.ndarray:
        tau = np.asarray(t, dtype=float) - self.t0
        span = self.t1 - self.t0
        phase = 2.0 * math.pi * (self.f0 * tau + 0.5 * (self.f1 - self.f0) * tau ** 2 / span)
        return self.amplitude * np.sin(phase)

    def to_dict(self) -> dict:
        return {'kind': self.kind, 'amplitude': self.amplitude, 'f0': self.f0,
                'f1': self.f1, 'domain': [self.t0, self.t1]}


@dataclass(frozen=True)
class PiecewiseLinear(Signal):
    """Linear interpolation between knots, held constant outside them."""

    knots: Tuple[Tuple[float, float], ...]
    name: str = 'piecewise-linear'
    kind = 'piecewise-linear'

    def __post_init__(self):
        if len(self.knots) < 1:
            raise ValueError("piecewise-linear signal needs at least one knot")
        times = [k[0] for k in self.knots]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError(f"piecewise-linear knots must be strictly increasing in t: {times}")

    def evaluate(self, t: np.ndarray) -> np.ndarray:
        times = np.array([k[0] for k in self.knots], dtype=float)
        values = np.array([k[1] for k in self.knots], dtype=float)
        return np.interp(np.asarray(t, dtype=float), times, values)

    def to_dict(self) -> dict:
        return {'kind': self.kind, 'knots': [list(k) for k in self.knots]}


@dataclass(frozen=True)
class Analytic(Signal):
    """Closed-form input given by an expression."""

    expr: Expr
    name: str = 'analytic'
    kind = 'analytic'

    def evaluate(self, t: np.ndarray) -> np.ndarray:
        return evaluate(self.expr, np.asarray(t, dtype=float))

    def to_dict(self) -> dict:
        return {'kind': self.kind, 'expr': str(self.expr)}


def default_probes(domain: Sequence[float]) -> List[Signal]:
    """
    The 4-signal probe family: step, sin(2t), chirp 0.1 -> 2 Hz over the
    domain, and a ramp-hold reaching 1 at 40% of the domain.
    """
    t0, t1 = float(domain[0]), float(domain[1])
    span = t1 - t0
    return [
        Step(name='step'),
        Sinusoid(amplitude=1.0, omega=2.0, phase=0.0, name='sin2t'),
        Chirp(amplitude=1.0, f0=0.1, f1=2.0, t0=t0, t1=t1, name='chirp'),
        PiecewiseLinear(knots=((t0, 0.0), (t0 + 0.4 * span, 1.0), (t1, 1.0)), name='ramp-hold'),
    ]
