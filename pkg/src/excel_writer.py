"""Excel output: a summary tab plus one tab per experiment kind."""

from pathlib import Path
from typing import Any, Dict, List, Sequence, TYPE_CHECKING
import logging
import math
import re

if TYPE_CHECKING:
    from .processor import Report, ReportEntry

logger = logging.getLogger(__name__)

SUMMARY_HEADERS = ["Experiment", "Kind", "References", "Status", "Outcome", "Error"]

HEADER_COLOR = '4472C4'
MAX_SHEET_NAME = 31
MAX_COLUMN_WIDTH = 60


def flatten(data: Dict[str, Any], prefix: str = '') -> Dict[str, Any]:
    """Flatten nested dicts to dotted keys; lists become comma-joined text."""
    flat: Dict[str, Any] = {}
    for key, value in data.items():
        name = f"{prefix}{key}"
        if isinstance(value, dict):
            flat.update(flatten(value, f"{name}."))
        elif isinstance(value, (list, tuple)):
            if value and all(isinstance(v, dict) for v in value):
                for i, item in enumerate(value):
                    flat.update(flatten(item, f"{name}[{i}]."))
            else:
                flat[name] = ", ".join(str(v) for v in value)
        else:
            flat[name] = value
    return flat


def _cell_value(value: Any) -> Any:
    # openpyxl cannot store non-finite floats
    if isinstance(value, float) and not math.isfinite(value):
        return str(value)
    return value


class ExcelWriter:
    """Create multi-tab Excel files from a run report."""

    def __init__(self, output_path: Path):
        """
        Initialize Excel writer.

        Args:
            output_path: Destination .xlsx file
        """
        self.output_path = Path(output_path)
        self.output_path.parent.mkdir(parents=True, exist_ok=True)

        try:
            from openpyxl import Workbook
            from openpyxl.styles import Alignment, Font, PatternFill
        except ImportError:
            raise RuntimeError("openpyxl is required for report.xlsx: pip install openpyxl")

        self.header_font = Font(bold=True, color='FFFFFF')
        self.header_fill = PatternFill(start_color=HEADER_COLOR, end_color=HEADER_COLOR, fill_type='solid')
        self.header_alignment = Alignment(horizontal='center', wrap_text=True)
        self.title_font = Font(bold=True, size=14)

        self.workbook = Workbook()
        self.workbook.remove(self.workbook.active)

    def _sheet(self, name: str):
        """Sheet for a title, created on first use; names are cut to Excel's limit."""
        title = re.sub(r'[\[\]:*?/\\]', '_', name)[:MAX_SHEET_NAME]
        if title in self.workbook.sheetnames:
            return self.workbook[title]
        return self.workbook.create_sheet(title=title)

    def _header_row(self, sheet, headers: Sequence[str], row: int = 1):
        for col, header in enumerate(headers, 1):
            cell = sheet.cell(row=row, column=col, value=header)
            cell.font = self.header_font
            cell.fill = self.header_fill
            cell.alignment = self.header_alignment
        sheet.freeze_panes = sheet.cell(row=row + 1, column=1)

    def _fit_columns(self, sheet, first_row: int = 1):
        """Width of each column from its longest value below first_row."""
        from openpyxl.utils import get_column_letter

        widths: Dict[int, int] = {}
        for row in sheet.iter_rows(min_row=first_row):
            for cell in row:
                if cell.value is not None:
                    widths[cell.column] = max(widths.get(cell.column, 0), len(str(cell.value)))
        for column, width in widths.items():
            sheet.column_dimensions[get_column_letter(column)].width = min(width + 2, MAX_COLUMN_WIDTH)

    def add_summary(self, report: 'Report', sheet_name: str = "Summary"):
        """
        Add the overview sheet: run metadata followed by one row per experiment.
        """
        sheet = self._sheet(sheet_name)

        sheet.cell(row=1, column=1, value="Commutativity Lab Report").font = self.title_font
        metadata = [
            ("Version:", report.version),
            ("Config digest:", report.config_digest),
            ("Generated:", report.generated_at or ''),
        ]
        for row, (label, value) in enumerate(metadata, 2):
            sheet.cell(row=row, column=1, value=label)
            sheet.cell(row=row, column=2, value=value)

        table_row = len(metadata) + 3
        self._header_row(sheet, SUMMARY_HEADERS, row=table_row)
        for row, entry in enumerate(report.entries, table_row + 1):
            refs = ", ".join(f"{k}={v}" for k, v in entry.refs.items())
            values = [entry.id, entry.kind, refs, entry.status, entry.outcome(), entry.error or '']
            for col, value in enumerate(values, 1):
                sheet.cell(row=row, column=col, value=value)

        self._fit_columns(sheet, first_row=table_row)
        logger.info(f"Added summary sheet ({len(report.entries)} experiments)")

    def add_experiments(self, kind: str, entries: List['ReportEntry']):
        """
        Add one sheet for all experiments of a kind, one row each.

        Columns are the union of the flattened result keys, in first-seen order.
        """
        sheet = self._sheet(kind)
        rows = [flatten({'id': e.id, 'status': e.status, **e.result}) for e in entries]
        headers = list(dict.fromkeys(key for row in rows for key in row))

        self._header_row(sheet, headers)
        for row_idx, row in enumerate(rows, 2):
            for col_idx, key in enumerate(headers, 1):
                sheet.cell(row=row_idx, column=col_idx, value=_cell_value(row.get(key)))

        self._fit_columns(sheet)
        logger.info(f"Added {len(rows)} rows to {kind}")

    def save(self):
        """Write the workbook and release it."""
        self.workbook.save(self.output_path)
        self.workbook.close()
        logger.info(f"Saved workbook to {self.output_path}")
