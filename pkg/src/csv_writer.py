"""CSV output for simulation traces and AB/BA plot data."""

from pathlib import Path
import logging

import pandas as pd

from .simulation import GridMismatch, Trace

logger = logging.getLogger(__name__)

# Full double precision
FLOAT_FORMAT = '%.17g'

TRACE_COLUMNS = ['t', 'x', 'y']
PLOT_COLUMNS = ['t', 'y_ab', 'y_ba', 'diff']


def _write(frame: pd.DataFrame, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT)
    logger.debug(f"Wrote {len(frame)} rows to {path}")
    return path


def write_trace(trace: Trace, path: Path) -> Path:
    """Write a trace as `t,x,y`, one row per grid point."""
    return _write(trace.to_frame()[TRACE_COLUMNS], path)


def read_trace(path: Path) -> pd.DataFrame:
    """Read a trace CSV written by write_trace."""
    frame = pd.read_csv(path, dtype=float)
    missing = [c for c in TRACE_COLUMNS if c not in frame.columns]
    if missing:
        raise ValueError(f"{path}: not a trace file, missing columns {missing}")
    return frame


def plot_frame(ab: pd.DataFrame, ba: pd.DataFrame) -> pd.DataFrame:
    """
    Combine AB and BA trace frames into `t,y_ab,y_ba,diff`.

    Raises:
        GridMismatch: The traces are sampled on different grids
    """
    if len(ab) != len(ba) or (ab['t'] - ba['t']).abs().max() > 1e-12:
        raise GridMismatch("AB and BA traces are on different grids")
    return pd.DataFrame({
        't': ab['t'],
        'y_ab': ab['y'],
        'y_ba': ba['y'],
        'diff': ab['y'] - ba['y'],
    })


def write_plot(ab: pd.DataFrame, ba: pd.DataFrame, path: Path) -> Path:
    """Write plot-ready AB/BA data."""
    return _write(plot_frame(ab, ba)[PLOT_COLUMNS], path)
