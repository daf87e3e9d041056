"""Loader for experiment documents (JSON, or YAML with the same schema).

A document names systems, gain pairs and signals, then lists experiments that
refer to them by name. Everything is parsed and validated up front so that a
run never starts on a broken document.
"""

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Set, Tuple
import hashlib
import json
import logging
import re

import yaml

from ..expr import EvaluationDomainError
from ..settings import Settings, load_settings
from ..signals import Analytic, Chirp, PiecewiseLinear, Signal, Sinusoid, Step, default_probes
from ..simulation import InvalidStep, SolverOptions
from ..systems import (
    GainPair, LtvSystem, SystemValidationError, feedback_conjugate, make_gains,
    make_system, validate_gains
)
from .expression import ExprSyntaxError, parse

logger = logging.getLogger(__name__)

EXPERIMENT_KINDS = (
    'simulate', 'cascade', 'closed-loop', 'commute', 'structural-n1',
    'structural-n2', 'theorem1', 'theorem2', 'conjugate',
)

# kind -> (required references, optional references); reference -> entity table
EXPERIMENT_REFS: Dict[str, Tuple[Dict[str, str], Dict[str, str]]] = {
    'simulate': ({'system': 'systems'}, {'signal': 'signals'}),
    'cascade': ({'first': 'systems', 'second': 'systems'}, {'signal': 'signals'}),
    'closed-loop': ({'system': 'systems', 'gains': 'gains'}, {'signal': 'signals'}),
    'commute': ({'a': 'systems', 'b': 'systems'}, {}),
    'structural-n1': ({'a': 'systems', 'b': 'systems'}, {}),
    'structural-n2': ({'a': 'systems', 'b': 'systems'}, {}),
    'theorem1': ({'system': 'systems', 'gains': 'gains'}, {}),
    'theorem2': ({'g1': 'gains', 'g2': 'gains'}, {'system': 'systems'}),
    'conjugate': ({'system': 'systems', 'gains': 'gains'}, {}),
}

# Experiment kinds whose results carry AB/BA traces
TRACE_KINDS = ('commute', 'cascade')

SIGNAL_ALIASES = {'piecewise_linear': 'piecewise-linear', 'sine': 'sinusoid'}


def slug(text: str) -> str:
    """File-name-safe form of an id or signal name."""
    return re.sub(r'[^A-Za-z0-9_.-]+', '-', text).strip('-') or 'x'


def trace_file(stem: str) -> str:
    return f"traces/{slug(stem)}.csv"


def plot_file(experiment_id: str, label: str) -> str:
    return f"plots/{slug(experiment_id)}-{slug(label)}.csv"


def _run_domain(objects: Dict[str, Any]) -> Optional[Tuple[float, float]]:
    """Domain of the system an experiment drives, if it has one yet."""
    for key in ('a', 'system', 'first'):
        if key in objects:
            return objects[key].domain
    return None


class ConfigError(Exception):
    """Raised for unreadable or invalid experiment documents."""

    def __init__(self, message: str, location: Optional[str] = None):
        super().__init__(f"{location}: {message}" if location else message)
        self.location = location


class UnresolvedReference(ConfigError):
    """Raised when a document refers to an undeclared entity."""

    def __init__(self, kind: str, name: str, location: Optional[str] = None):
        super().__init__(f"unresolved reference to {kind} '{name}'", location)
        self.kind = kind
        self.name = name


@dataclass
class Experiment:
    """One configured experiment with its references resolved."""

    id: str
    kind: str
    refs: Dict[str, str]
    objects: Dict[str, Any]
    probes: Optional[List[Signal]] = None
    relation: str = 'derived'

    def to_dict(self) -> Dict[str, Any]:
        return {'id': self.id, 'kind': self.kind, **self.refs}

    def signal_names(self) -> List[str]:
        """Signals whose AB/BA traces a cascade or commute experiment writes."""
        if self.kind == 'cascade':
            return [self.objects['signal'].name]
        if self.kind == 'commute':
            probes = self.probes or default_probes(self.objects['a'].domain)
            return [p.name for p in probes]
        return []

    def output_files(self) -> List[str]:
        """Trace and plot files this experiment writes, relative to the run directory."""
        if self.kind in ('simulate', 'closed-loop'):
            return [trace_file(self.id)]
        files = []
        for name in self.signal_names():
            files += [trace_file(f"{self.id}-{name}-ab"), trace_file(f"{self.id}-{name}-ba"),
                      plot_file(self.id, name)]
        return files


@dataclass
class ExperimentConfig:
    """A fully validated experiment document."""

    path: Optional[Path]
    settings: Settings
    solver: SolverOptions
    domain: Tuple[float, float]
    systems: Dict[str, LtvSystem] = field(default_factory=dict)
    gains: Dict[str, GainPair] = field(default_factory=dict)
    signals: Dict[str, Signal] = field(default_factory=dict)
    probes: List[str] = field(default_factory=list)
    experiments: List[Experiment] = field(default_factory=list)
    digest: str = ''

    def experiment(self, experiment_id: str) -> Experiment:
        for e in self.experiments:
            if e.id == experiment_id:
                return e
        raise UnresolvedReference('experiment', experiment_id)


def _read_document(path: Path) -> Tuple[Dict[str, Any], bytes]:
    if not path.exists():
        raise ConfigError("file not found", str(path))
    raw = path.read_bytes()
    text = raw.decode('utf-8')

    if path.suffix.lower() in ('.yaml', '.yml'):
        try:
            document = yaml.safe_load(text)
        except yaml.YAMLError as e:
            mark = getattr(e, 'problem_mark', None)
            location = f"{path}:{mark.line + 1}:{mark.column + 1}" if mark else str(path)
            raise ConfigError(f"YAML parse error: {getattr(e, 'problem', e)}", location) from e
    else:
        try:
            document = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError(f"JSON parse error: {e.msg}", f"{path}:{e.lineno}:{e.colno}") from e

    if not isinstance(document, dict):
        raise ConfigError("top level must be an object", str(path))
    return document, raw


def _pair(value: Any, location: str) -> Tuple[float, float]:
    try:
        t0, t1 = (float(v) for v in value)
    except (TypeError, ValueError):
        raise ConfigError(f"expected [t0, t1], got {value!r}", location)
    return t0, t1


class ConfigParser:
    """Resolves one experiment document into an ExperimentConfig."""

    def __init__(
        self,
        document: Dict[str, Any],
        path: Optional[Path] = None,
        step: Optional[float] = None,
        domain: Optional[Sequence[float]] = None,
        settings: Optional[Settings] = None
    ):
        """
        Initialize parser.

        Args:
            document: Decoded document
            path: Source path, used in error locations
            step: Override for solver.step
            domain: Override for the default domain
            settings: Base settings (default: config/default.yaml)
        """
        self.document = document
        self.source = str(path) if path else '<document>'
        self.path = path

        overrides: Dict[str, Any] = {}
        if step is not None:
            overrides['solver'] = {'step': step}
        if domain is not None:
            overrides['domain'] = list(_pair(domain, '--domain'))
        try:
            base = (settings or load_settings()).merged(document)
            self.settings = base.merged(overrides)
        except (TypeError, ValueError) as e:
            raise ConfigError(f"invalid settings: {e}", self.source) from e

        self.domain_override = overrides.get('domain')
        self.systems: Dict[str, LtvSystem] = {}
        self.gains: Dict[str, GainPair] = {}
        self.signals: Dict[str, Signal] = {}
        self._domain_free: Set[str] = set()
        self._document_probes: Optional[List[str]] = None
        self._resolving: List[str] = []

    def _loc(self, *parts: Any) -> str:
        return self.source + ''.join(f"[{p!r}]" if isinstance(p, str) else f"[{p}]" for p in parts)

    def parse(self) -> ExperimentConfig:
        """
        Resolve every section.

        Returns:
            ExperimentConfig

        Raises:
            ConfigError: Invalid document
            UnresolvedReference: Reference to an undeclared entity
        """
        settings = self.settings
        solver = SolverOptions(
            step=settings.step,
            refinement=settings.refinement,
            blowup_threshold=settings.blowup_threshold,
        )
        self._parse_gains()
        self._parse_systems()
        for name, system in self.systems.items():
            try:
                solver.steps_for(system.domain)
                solver.refined().steps_for(system.domain)
            except InvalidStep as e:
                raise ConfigError(f"system '{name}': {e}", self._loc('solver')) from e
        self._parse_signals()
        probes = self._probe_names(self.document.get('probes'), ('probes',))
        self._document_probes = probes
        experiments = self._parse_experiments()

        config = ExperimentConfig(
            path=self.path,
            settings=settings,
            solver=solver,
            domain=settings.domain,
            systems=self.systems,
            gains=self.gains,
            signals=self.signals,
            probes=probes or [],
            experiments=experiments,
        )
        logger.info(
            f"Loaded {len(experiments)} experiment(s), {len(self.systems)} system(s), "
            f"{len(self.gains)} gain pair(s) from {self.source}"
        )
        return config

    def _section(self, key: str) -> Dict[str, Any]:
        section = self.document.get(key) or {}
        if not isinstance(section, dict):
            raise ConfigError(f"'{key}' must be an object keyed by name", self._loc(key))
        return section

    def _parse_gains(self):
        for name, spec in self._section('gains').items():
            location = self._loc('gains', name)
            if not isinstance(spec, dict) or 'alpha' not in spec or 'beta' not in spec:
                raise ConfigError("gain pair needs 'alpha' and 'beta'", location)
            try:
                self.gains[name] = make_gains(str(spec['alpha']), str(spec['beta']), name=name)
            except ExprSyntaxError as e:
                raise ConfigError(f"gain pair '{name}': {type(e).__name__}: {e}", location) from e

    def _parse_systems(self):
        for name in self._section('systems'):
            self._system(name, self._loc('systems'))

    def _system(self, name: str, location: str) -> LtvSystem:
        if name in self.systems:
            return self.systems[name]
        specs = self._section('systems')
        if name not in specs:
            raise UnresolvedReference('system', name, location)
        if name in self._resolving:
            chain = ' -> '.join(self._resolving + [name])
            raise ConfigError(f"cyclic system definition: {chain}", self._loc('systems', name))

        spec = specs[name]
        here = self._loc('systems', name)
        if not isinstance(spec, dict):
            raise ConfigError("system must be an object", here)

        self._resolving.append(name)
        try:
            system = self._build_system(name, spec, here)
        finally:
            self._resolving.pop()

        if 'order' in spec:
            try:
                declared = int(spec['order'])
            except (TypeError, ValueError) as e:
                raise ConfigError(f"system '{name}': order must be an integer, got {spec['order']!r}", here) from e
            if declared != system.order:
                raise ConfigError(
                    f"system '{name}': declared order {declared} but {system.order + 1} coefficient(s) give order {system.order}",
                    here
                )
        self.systems[name] = system
        return system

    def _build_system(self, name: str, spec: Dict[str, Any], here: str) -> LtvSystem:
        settings = self.settings
        try:
            if 'conjugate_of' in spec:
                base = self._system(spec['conjugate_of'], here)
                gains_name = spec.get('gains')
                if gains_name not in self.gains:
                    raise UnresolvedReference('gain pair', str(gains_name), here)
                return feedback_conjugate(base, self.gains[gains_name], name=name)

            coeffs = spec.get('coeffs')
            if not isinstance(coeffs, list):
                raise ConfigError(f"system '{name}': 'coeffs' must be a list (a0 first)", here)
            domain = self.domain_override or spec.get('domain') or settings.domain
            domain = _pair(domain, here)
            return make_system(
                [str(c) for c in coeffs],
                domain,
                name=name,
                grid_points=settings.grid_points,
                eps_lead=settings.eps_lead,
            )
        except (SystemValidationError, ExprSyntaxError, EvaluationDomainError) as e:
            raise ConfigError(f"system '{name}': {type(e).__name__}: {e}", here) from e

    def _parse_signals(self):
        for name, spec in self._section('signals').items():
            self.signals[name] = self._build_signal(name, spec, self._loc('signals', name))
            # chirps without their own span sweep the domain of whatever runs them
            if self.signals[name].kind == 'chirp' and 'domain' not in spec:
                self._domain_free.add(name)

    def _build_signal(self, name: str, spec: Any, location: str) -> Signal:
        if not isinstance(spec, dict) or 'kind' not in spec:
            raise ConfigError("signal needs a 'kind'", location)
        kind = SIGNAL_ALIASES.get(spec['kind'], spec['kind'])
        t0, t1 = self.settings.domain
        try:
            if kind == 'step':
                return Step(amplitude=float(spec.get('amplitude', 1.0)), name=name)
            if kind == 'sinusoid':
                return Sinusoid(
                    amplitude=float(spec.get('amplitude', 1.0)),
                    omega=float(spec.get('omega', 1.0)),
                    phase=float(spec.get('phase', 0.0)),
                    name=name,
                )
            if kind == 'chirp':
                c0, c1 = _pair(spec.get('domain', (t0, t1)), location)
                return Chirp(
                    amplitude=float(spec.get('amplitude', 1.0)),
                    f0=float(spec['f0']),
                    f1=float(spec['f1']),
                    t0=c0,
                    t1=c1,
                    name=name,
                )
            if kind == 'piecewise-linear':
                knots = tuple((float(t), float(v)) for t, v in spec['knots'])
                return PiecewiseLinear(knots=knots, name=name)
            if kind == 'analytic':
                return Analytic(expr=parse(str(spec['expr'])), name=name)
        except KeyError as e:
            raise ConfigError(f"signal '{name}' is missing {e}", location) from e
        except (TypeError, ValueError) as e:
            raise ConfigError(f"signal '{name}': {e}", location) from e
        raise ConfigError(f"unknown signal kind '{spec['kind']}'", location)

    def _signal(self, name: str, location: str, domain: Optional[Tuple[float, float]] = None) -> Signal:
        """
        Resolve a signal name for use on a domain.

        Named probes (chirp, ramp-hold) and chirps declared without a span are
        built on the domain they run on, default: the document domain.
        """
        domain = domain or self.settings.domain
        if name in self.signals:
            signal = self.signals[name]
            if name in self._domain_free:
                return replace(signal, t0=domain[0], t1=domain[1])
            return signal
        for probe in default_probes(domain):
            if probe.name == name:
                return probe
        raise UnresolvedReference('signal', name, location)

    def _probe_names(self, names: Any, where: Tuple[Any, ...]) -> Optional[List[str]]:
        if names is None:
            return None
        location = self._loc(*where)
        if not isinstance(names, list) or not names:
            raise ConfigError("'probes' must be a nonempty list of signal names", location)
        names = [str(n) for n in names]
        for name in names:
            self._signal(name, location)
        return names

    def _parse_experiments(self) -> List[Experiment]:
        entries = self.document.get('experiments')
        if not isinstance(entries, list) or not entries:
            raise ConfigError("at least one experiment is required", self._loc('experiments'))

        experiments = []
        seen = set()
        for i, entry in enumerate(entries, start=1):
            location = self._loc('experiments', i - 1)
            if not isinstance(entry, dict) or 'kind' not in entry:
                raise ConfigError("experiment needs a 'kind'", location)
            kind = entry['kind']
            if kind not in EXPERIMENT_KINDS:
                raise ConfigError(
                    f"unknown experiment kind '{kind}' (expected one of {', '.join(EXPERIMENT_KINDS)})",
                    location
                )
            experiment_id = str(entry.get('id') or f"{i:02d}-{kind}")
            if experiment_id in seen:
                raise ConfigError(f"duplicate experiment id '{experiment_id}'", location)
            seen.add(experiment_id)
            experiments.append(self._build_experiment(experiment_id, kind, entry, location, i - 1))

        writers: Dict[str, str] = {}
        for i, experiment in enumerate(experiments):
            for path in experiment.output_files():
                owner = writers.setdefault(path, experiment.id)
                if owner != experiment.id:
                    raise ConfigError(
                        f"experiments '{owner}' and '{experiment.id}' would both write {path}",
                        self._loc('experiments', i)
                    )
        return experiments

    def _build_experiment(
        self,
        experiment_id: str,
        kind: str,
        entry: Dict[str, Any],
        location: str,
        index: int
    ) -> Experiment:
        required, optional = EXPERIMENT_REFS[kind]
        refs: Dict[str, str] = {}
        objects: Dict[str, Any] = {}

        for key, table in list(required.items()) + list(optional.items()):
            if key not in entry:
                if key in required:
                    raise ConfigError(f"experiment '{experiment_id}' needs '{key}'", location)
                continue
            name = str(entry[key])
            refs[key] = name
            if table == 'systems':
                objects[key] = self._system(name, location)
            elif table == 'gains':
                if name not in self.gains:
                    raise UnresolvedReference('gain pair', name, location)
                objects[key] = self.gains[name]
            else:
                objects[key] = self._signal(name, location, _run_domain(objects))

        if 'signal' in optional and 'signal' not in objects:
            objects['signal'] = self._signal('step', location)
            refs['signal'] = 'step'

        relation = str(entry.get('relation', 'derived'))
        if relation not in ('derived', 'printed'):
            raise ConfigError(f"relation must be 'derived' or 'printed', got '{relation}'", location)

        self._check_experiment(experiment_id, kind, objects, location)

        names = self._probe_names(entry.get('probes'), ('experiments', index, 'probes'))
        if kind == 'commute':
            names = names or self._document_probes
        probes = None
        if names:
            domain = _run_domain(objects)
            probes = [self._signal(n, location, domain) for n in names]
        return Experiment(experiment_id, kind, refs, objects, probes, relation)

    def _check_experiment(self, experiment_id: str, kind: str, objects: Dict[str, Any], location: str):
        try:
            if kind in ('closed-loop', 'theorem1', 'conjugate'):
                validate_gains(objects['gains'], objects['system'].domain,
                               self.settings.grid_points, self.settings.eps_lead)
            if kind == 'theorem2':
                domain = objects['system'].domain if 'system' in objects else self.settings.domain
                for key in ('g1', 'g2'):
                    validate_gains(objects[key], domain, self.settings.grid_points, self.settings.eps_lead)
        except (SystemValidationError, EvaluationDomainError) as e:
            raise ConfigError(f"experiment '{experiment_id}': {type(e).__name__}: {e}", location) from e

        if kind == 'structural-n1' and (objects['a'].order, objects['b'].order) != (1, 1):
            raise ConfigError(f"experiment '{experiment_id}': structural-n1 needs two order-1 systems", location)
        if kind == 'structural-n2' and (objects['a'].order, objects['b'].order) != (2, 2):
            raise ConfigError(f"experiment '{experiment_id}': structural-n2 needs two order-2 systems", location)


def load_config(
    path: Path,
    step: Optional[float] = None,
    domain: Optional[Sequence[float]] = None,
    settings: Optional[Settings] = None
) -> ExperimentConfig:
    """
    Load and validate an experiment document.

    Args:
        path: JSON (or .yaml/.yml) document
        step: Override for the solver step
        domain: Override for every system's domain
        settings: Base settings (default: config/default.yaml)

    Returns:
        Fully validated ExperimentConfig

    Raises:
        ConfigError: File, parse or validation failure, with location
        UnresolvedReference: Reference to an undeclared entity (names it)
    """
    path = Path(path)
    document, raw = _read_document(path)
    config = ConfigParser(document, path, step=step, domain=domain, settings=settings).parse()
    config.digest = hashlib.sha256(raw).hexdigest()
    return config
