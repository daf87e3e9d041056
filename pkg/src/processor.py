"""Main orchestrator: runs configured experiments and assembles the report."""

import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union
import hashlib
import json
import logging

import numpy as np

from . import __version__
from .commute import (
    numerical_commute_check, structural_check_n1, structural_check_n2,
    theorem1_check, theorem2_fit
)
from .csv_writer import read_trace, write_plot, write_trace
from .excel_writer import ExcelWriter
from .markdown_writer import MarkdownWriter
from .parsers.experiment_config import (
    TRACE_KINDS, Experiment, ExperimentConfig, plot_file, trace_file
)
from .simulation import (
    discrepancy, simulate, simulate_cascade, simulate_closed_loop
)
from .systems import feedback_conjugate, is_time_invariant, validation_grid

logger = logging.getLogger(__name__)

REPORT_FILE = "report.json"
WORKBOOK_FILE = "report.xlsx"
SUMMARY_FILE = "SUMMARY.md"


class PlotError(ValueError):
    """Raised when plot data cannot be emitted for an experiment."""
    pass


@dataclass
class ReportEntry:
    """Outcome of one experiment."""

    id: str
    kind: str
    refs: Dict[str, str]
    status: str = 'ok'
    result: Dict[str, Any] = field(default_factory=dict)
    traces: Dict[str, Dict[str, str]] = field(default_factory=dict)
    error: Optional[str] = None

    @property
    def succeeded(self) -> bool:
        return self.status == 'ok'

    def outcome(self) -> str:
        """One-word outcome for tables."""
        if not self.succeeded:
            return 'failed'
        for key in ('decision', 'satisfied'):
            if key in self.result:
                value = self.result[key]
                if isinstance(value, bool):
                    return 'satisfied' if value else 'not satisfied'
                return str(value)
        return 'done'

    def to_dict(self) -> Dict[str, Any]:
        return {
            'id': self.id,
            'kind': self.kind,
            'refs': self.refs,
            'status': self.status,
            'result': self.result,
            'traces': self.traces,
            'error': self.error,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'ReportEntry':
        return cls(
            id=data['id'],
            kind=data['kind'],
            refs=data.get('refs', {}),
            status=data.get('status', 'ok'),
            result=data.get('result', {}),
            traces=data.get('traces', {}),
            error=data.get('error'),
        )


@dataclass
class Report:
    """Per-experiment results in config order."""

    version: str
    config_digest: str
    entries: List[ReportEntry]
    settings: Dict[str, Any] = field(default_factory=dict)
    generated_at: Optional[str] = None
    root: Optional[Path] = field(default=None, compare=False)

    def body(self) -> Dict[str, Any]:
        """Everything except timestamps."""
        return {
            'version': self.version,
            'config_digest': self.config_digest,
            'settings': self.settings,
            'experiments': [e.to_dict() for e in self.entries],
        }

    def body_digest(self) -> str:
        canonical = json.dumps(self.body(), sort_keys=True, default=str)
        return hashlib.sha256(canonical.encode('utf-8')).hexdigest()

    def to_dict(self) -> Dict[str, Any]:
        document = self.body()
        document['body_digest'] = self.body_digest()
        document['generated_at'] = self.generated_at
        return document

    def entry(self, experiment_id: str) -> ReportEntry:
        for e in self.entries:
            if e.id == experiment_id:
                return e
        raise PlotError(f"unknown experiment id '{experiment_id}'")

    @property
    def failures(self) -> List[ReportEntry]:
        return [e for e in self.entries if not e.succeeded]

    def write(self, path: Path) -> Path:
        path = Path(path)
        with open(path, 'w') as f:
            json.dump(self.to_dict(), f, indent=2, default=str)
        logger.info(f"Report: {path}")
        return path

    @classmethod
    def load(cls, path: Path) -> 'Report':
        path = Path(path)
        with open(path, 'r') as f:
            data = json.load(f)
        return cls(
            version=data.get('version', ''),
            config_digest=data.get('config_digest', ''),
            entries=[ReportEntry.from_dict(e) for e in data.get('experiments', [])],
            settings=data.get('settings', {}),
            generated_at=data.get('generated_at'),
            root=path.parent,
        )


class ExperimentRunner:
    """Runs the experiments of one config and writes traces and reports."""

    def __init__(self, config: ExperimentConfig, out_dir: Path, jobs: int = 1):
        """
        Initialize the runner.

        Args:
            config: Validated experiment configuration
            out_dir: Directory for report, traces and summaries
            jobs: Number of experiments run concurrently
        """
        self.config = config
        self.settings = config.settings
        self.out_dir = Path(out_dir)
        self.jobs = max(1, int(jobs))

    def run(self) -> Report:
        """
        Execute every experiment and write the outputs.

        Experiment failures are recorded in the report and do not stop the run.

        Returns:
            Report with one entry per configured experiment, in config order
        """
        self.out_dir.mkdir(parents=True, exist_ok=True)
        experiments = self.config.experiments
        logger.info(f"Running {len(experiments)} experiment(s) with {self.jobs} job(s)")

        if self.jobs > 1:
            with ThreadPoolExecutor(max_workers=self.jobs) as pool:
                entries = list(pool.map(self._execute, experiments))
        else:
            entries = [self._execute(e) for e in experiments]

        report = Report(
            version=__version__,
            config_digest=self.config.digest,
            entries=entries,
            settings=self._settings_summary(),
            generated_at=datetime.now().isoformat(timespec='seconds'),
            root=self.out_dir,
        )
        report.write(self.out_dir / REPORT_FILE)

        outputs = self.settings.outputs
        if outputs.get('plots', True):
            for entry in entries:
                if entry.kind in TRACE_KINDS and entry.succeeded and entry.traces:
                    emit_plot_data(report, entry.id, self.out_dir)
        if outputs.get('workbook', True):
            self._write_workbook(report)
        if outputs.get('markdown', True):
            MarkdownWriter(self.out_dir / SUMMARY_FILE).generate(report)

        failed = len(report.failures)
        logger.info(f"Run complete: {len(entries) - failed} ok, {failed} failed")
        return report

    def _settings_summary(self) -> Dict[str, Any]:
        s = self.settings
        return {
            'solver': self.config.solver.to_dict(),
            'domain': list(s.domain),
            'grid_points': s.grid_points,
            'eps_lead': s.eps_lead,
            'tau_const': s.tau_const,
            'tau_pass': s.tau_pass,
            'tau_fail': s.tau_fail,
        }

    def _write_workbook(self, report: Report):
        excel = ExcelWriter(self.out_dir / WORKBOOK_FILE)
        excel.add_summary(report)
        for kind in dict.fromkeys(e.kind for e in report.entries):
            excel.add_experiments(kind, [e for e in report.entries if e.kind == kind])
        excel.save()

    def _execute(self, experiment: Experiment) -> ReportEntry:
        entry = ReportEntry(id=experiment.id, kind=experiment.kind, refs=dict(experiment.refs))
        step = getattr(self, f"_step_{experiment.kind.replace('-', '_')}")
        logger.info(f"Experiment {experiment.id} ({experiment.kind})")
        try:
            entry.result, entry.traces = step(experiment)
        except Exception as e:
            logger.error(f"Experiment {experiment.id} failed: {type(e).__name__}: {e}")
            entry.status = 'failed'
            entry.error = f"{type(e).__name__}: {e}"
        return entry

    def _write_trace(self, trace, name: str) -> str:
        relative = trace_file(name)
        write_trace(trace, self.out_dir / relative)
        return relative

    def _grid(self, domain) -> np.ndarray:
        return validation_grid(domain, self.settings.grid_points)

    def _step_simulate(self, e: Experiment) -> Tuple[Dict[str, Any], Dict[str, Dict[str, str]]]:
        system, signal = e.objects['system'], e.objects['signal']
        trace = simulate(system, signal, self.config.solver)
        path = self._write_trace(trace, e.id)
        result = {
            'system': system.to_dict(),
            'signal': signal.to_dict(),
            'state_dim': trace.state_dim,
            'points': len(trace),
            'y_final': float(trace.output[-1]),
            'max_abs_y': float(np.max(np.abs(trace.output))),
            'trace': path,
        }
        return result, {}

    def _step_cascade(self, e: Experiment):
        first, second, signal = e.objects['first'], e.objects['second'], e.objects['signal']
        ab = simulate_cascade(first, second, signal, self.config.solver)
        ba = simulate_cascade(second, first, signal, self.config.solver)
        traces = {signal.name: {
            'ab': self._write_trace(ab, f"{e.id}-{signal.name}-ab"),
            'ba': self._write_trace(ba, f"{e.id}-{signal.name}-ba"),
        }}
        result = {
            'signal': signal.to_dict(),
            'state_dim': ab.state_dim,
            'discrepancy': discrepancy(ab, ba),
        }
        return result, traces

    def _step_closed_loop(self, e: Experiment):
        system, gains, signal = e.objects['system'], e.objects['gains'], e.objects['signal']
        loop = simulate_closed_loop(system, gains, signal, self.config.solver)
        realized = simulate(feedback_conjugate(system, gains), signal, self.config.solver)
        result = {
            'gains': gains.to_dict(),
            'signal': signal.to_dict(),
            'y_final': float(loop.output[-1]),
            'conjugate_discrepancy': discrepancy(loop, realized),
            'trace': self._write_trace(loop, e.id),
        }
        return result, {}

    def _step_commute(self, e: Experiment):
        a, b = e.objects['a'], e.objects['b']
        probes = e.probes or None
        verdict = numerical_commute_check(
            a, b,
            probes=probes,
            opts=self.config.solver,
            keep_traces=True,
            tau_pass=self.settings.tau_pass,
            tau_fail=self.settings.tau_fail,
        )
        traces = {
            name: {
                'ab': self._write_trace(ab, f"{e.id}-{name}-ab"),
                'ba': self._write_trace(ba, f"{e.id}-{name}-ba"),
            }
            for name, (ab, ba) in verdict.traces.items()
        }
        return verdict.to_dict(), traces

    def _step_structural_n1(self, e: Experiment):
        a, b = e.objects['a'], e.objects['b']
        result = structural_check_n1(a, b, self._grid(a.domain), self.settings.tau_const)
        return result.to_dict(), {}

    def _step_structural_n2(self, e: Experiment):
        a, b = e.objects['a'], e.objects['b']
        result = structural_check_n2(a, b, self._grid(a.domain), self.settings.tau_const)
        return result.to_dict(), {}

    def _step_theorem1(self, e: Experiment):
        system, gains = e.objects['system'], e.objects['gains']
        verdict = theorem1_check(system.order, gains, self._grid(system.domain), self.settings.tau_const)
        result = verdict.to_dict()
        result['gains'] = gains.to_dict()
        return result, {}

    def _step_theorem2(self, e: Experiment):
        domain = e.objects['system'].domain if 'system' in e.objects else self.settings.domain
        fit = theorem2_fit(
            e.objects['g1'],
            e.objects['g2'],
            self._grid(domain),
            self.settings.tau_const,
            relation=e.relation,
            eps_degenerate=self.settings.eps_degenerate,
        )
        return fit.to_dict(), {}

    def _step_conjugate(self, e: Experiment):
        system, gains = e.objects['system'], e.objects['gains']
        conjugate = feedback_conjugate(system, gains)
        result = {
            'base': system.coefficient_strings('a'),
            'gains': gains.to_dict(),
            'order': conjugate.order,
            'coefficients': conjugate.coefficient_strings('b'),
            'time_invariant': is_time_invariant(conjugate, self.settings.tau_const),
        }
        logger.info(f"  conjugate coefficients: {result['coefficients']}")
        return result, {}


def emit_plot_data(
    report: Union[Report, Path],
    experiment_id: str,
    out_dir: Path
) -> List[Path]:
    """
    Write `t,y_ab,y_ba,diff` CSVs for a commute or cascade experiment.

    Args:
        report: Report object or path to report.json
        experiment_id: Experiment to export
        out_dir: Destination; files go to <out_dir>/plots/

    Returns:
        Paths of the written files, one per probe signal

    Raises:
        PlotError: Unknown id, wrong experiment kind, or failed experiment
    """
    if not isinstance(report, Report):
        report = Report.load(report)
    entry = report.entry(experiment_id)
    if entry.kind not in TRACE_KINDS:
        raise PlotError(
            f"experiment '{experiment_id}' is of kind {entry.kind}; plot data needs {' or '.join(TRACE_KINDS)}"
        )
    if not entry.succeeded or not entry.traces:
        raise PlotError(f"experiment '{experiment_id}' has no traces ({entry.error or entry.outcome()})")

    root = report.root or Path(out_dir)
    written = []
    for label, pair in entry.traces.items():
        ab = read_trace(root / pair['ab'])
        ba = read_trace(root / pair['ba'])
        path = Path(out_dir) / plot_file(experiment_id, label)
        written.append(write_plot(ab, ba, path))
    logger.info(f"Plot data for {experiment_id}: {len(written)} file(s)")
    return written


def setup_logging(verbose: bool = False):
    """Configure logging."""
    level = logging.DEBUG if verbose else logging.INFO
    logging.basicConfig(
        level=level,
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        handlers=[
            logging.StreamHandler(sys.stdout)
        ]
    )
