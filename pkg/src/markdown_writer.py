"""Generate a compact markdown summary of a run report."""

from pathlib import Path
from typing import Any, List, Optional, Sequence, TYPE_CHECKING
import logging

if TYPE_CHECKING:
    from .processor import Report, ReportEntry

logger = logging.getLogger(__name__)

MAX_LINES = 400

ALIGN_MARKERS = {'l': '---', 'r': '---:', 'c': ':---:'}


def _fmt_float(value: Any) -> str:
    """Scientific notation for discrepancies and residuals."""
    if value is None:
        return "-"
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        return str(value)
    return f"{value:.3e}"


def _row(cells: Sequence[Any]) -> str:
    return "| " + " | ".join(str(c) for c in cells) + " |"


class MarkdownWriter:
    """Generate SUMMARY.md for a run."""

    def __init__(self, output_path: Path):
        """
        Initialize markdown writer.

        Args:
            output_path: Destination SUMMARY.md
        """
        self.output_path = Path(output_path)
        self.lines: List[str] = []

    def _add(self, *lines: str):
        self.lines.extend(lines or ("",))

    def _section(self, title: str):
        self._add(f"## {title}", "")

    def _add_table(self, headers: Sequence[str], rows: List[List[Any]], align: Optional[str] = None):
        """Pipe table; align is one of l/r/c per column, default left then right."""
        if not rows:
            self._add("*No data*", "")
            return
        align = align or 'l' + 'r' * (len(headers) - 1)
        self._add(_row(headers), _row(ALIGN_MARKERS[a] for a in align))
        self._add(*(_row(r) for r in rows))
        self._add()

    def generate(self, report: 'Report'):
        """
        Generate the full markdown summary.

        Args:
            report: Completed run report
        """
        self.lines = []
        self._add("# Commutativity Lab Summary", "")
        self._add(f"**Version:** {report.version}  ", f"**Config digest:** `{report.config_digest[:16]}`  ")
        if report.generated_at:
            self._add(f"**Generated:** {report.generated_at}")
        self._add()

        self._section("Experiments")
        self._add_table(
            ["Experiment", "Kind", "References", "Outcome"],
            [[e.id, e.kind, ", ".join(f"{k}={v}" for k, v in e.refs.items()), e.outcome()]
             for e in report.entries],
            'llll',
        )

        ok = [e for e in report.entries if e.succeeded]
        self._verdicts([e for e in ok if e.kind == 'commute'])
        self._constants([e for e in ok if e.kind in ('structural-n1', 'structural-n2', 'theorem2')])
        self._conjugates([e for e in ok if e.kind == 'conjugate'])
        self._failures(report.failures)

        self._write()

    def _verdicts(self, entries: List['ReportEntry']):
        if not entries:
            return
        self._section("Numerical Verdicts")
        rows = []
        for e in entries:
            base, refined = e.result.get('step_discrepancies', [None, None])
            rows.append([e.id, e.result.get('decision'), _fmt_float(base), _fmt_float(refined),
                         e.result.get('diagnostic') or ''])
        self._add_table(["Experiment", "Decision", "D (h)", "D (refined)", "Diagnostic"], rows, 'llrrl')

    def _constants(self, entries: List['ReportEntry']):
        if not entries:
            return
        self._section("Structural Constants")
        rows = []
        for e in entries:
            if e.kind == 'theorem2':
                constants = f"p={e.result['p']:.6g}, q={e.result['q']:.6g} ({e.result['relation']})"
                residual = max(e.result['alpha_residual'], e.result['beta_residual'])
            else:
                constants = ", ".join(f"{c:.6g}" for c in e.result['constants'])
                residual = max(e.result['residuals'])
            rows.append([e.id, constants, _fmt_float(residual), e.outcome()])
        self._add_table(["Experiment", "Constants", "Max residual", "Outcome"], rows, 'llrl')

    def _conjugates(self, entries: List['ReportEntry']):
        if not entries:
            return
        self._section("Realized Conjugates")
        for e in entries:
            coefficients = ", ".join(f"{k} = {v}" for k, v in e.result['coefficients'].items())
            self._add(f"- **{e.id}**: {coefficients}")
        self._add()

    def _failures(self, entries: List['ReportEntry']):
        if not entries:
            return
        self._section("Failures")
        self._add(*(f"- **{e.id}** ({e.kind}): {e.error}" for e in entries))
        self._add()

    def _write(self):
        lines = self.lines
        if len(lines) > MAX_LINES:
            logger.warning(f"Summary has {len(lines)} lines, keeping the first {MAX_LINES}")
            lines = lines[:MAX_LINES] + ["", "*[Truncated]*"]

        self.output_path.parent.mkdir(parents=True, exist_ok=True)
        self.output_path.write_text("\n".join(lines) + "\n")
        logger.info(f"Saved markdown summary ({len(self.lines)} lines) to {self.output_path}")
