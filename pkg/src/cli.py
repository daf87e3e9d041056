"""Command-line interface.

Exit codes: 0 when every experiment executed (whatever the verdicts), 1 for
configuration errors, 2 for any other failure.
"""

from pathlib import Path
import logging
import sys

import click

from . import __version__
from .parsers.experiment_config import ConfigError, load_config
from .processor import ExperimentRunner, PlotError, Report, emit_plot_data, setup_logging

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_FAILURE = 2


@click.group()
@click.version_option(__version__, prog_name='ltv-lab')
def main():
    """LTV commutativity lab: feedback conjugates, cascades and commutativity checks."""


@main.command()
@click.option('--config', 'config_path', required=True, type=click.Path(path_type=Path),
              help='Experiment document (JSON, or YAML with the same schema)')
@click.option('--out', 'out_dir', required=True, type=click.Path(file_okay=False, path_type=Path),
              help='Output directory for report, traces and summaries')
@click.option('--step', type=float, default=None, help='Override the RK4 step h')
@click.option('--domain', nargs=2, type=float, default=None, metavar='T0 T1',
              help='Override every system domain')
@click.option('--jobs', type=int, default=1, show_default=True, help='Experiments run concurrently')
@click.option('-v', '--verbose', is_flag=True, help='Debug logging')
def run(config_path, out_dir, step, domain, jobs, verbose):
    """Run every experiment of a document and write the report."""
    setup_logging(verbose)
    try:
        config = load_config(config_path, step=step, domain=domain)
    except ConfigError as e:
        click.echo(f"Config error: {e}", err=True)
        sys.exit(EXIT_CONFIG)

    try:
        report = ExperimentRunner(config, out_dir, jobs=jobs).run()
    except Exception as e:
        logger.exception("Run failed")
        click.echo(f"Run failed: {type(e).__name__}: {e}", err=True)
        sys.exit(EXIT_FAILURE)

    for entry in report.entries:
        click.echo(f"{entry.id:<28} {entry.kind:<14} {entry.outcome()}")
    click.echo(f"Report written to {Path(out_dir) / 'report.json'}")
    sys.exit(EXIT_OK)


@main.command()
@click.option('--config', 'config_path', required=True, type=click.Path(path_type=Path),
              help='Experiment document to check')
@click.option('-v', '--verbose', is_flag=True, help='Debug logging')
def validate(config_path, verbose):
    """Parse and validate a document without running it."""
    setup_logging(verbose)
    try:
        config = load_config(config_path)
    except ConfigError as e:
        click.echo(f"Config error: {e}", err=True)
        sys.exit(EXIT_CONFIG)
    except Exception as e:
        click.echo(f"Validation failed: {type(e).__name__}: {e}", err=True)
        sys.exit(EXIT_FAILURE)

    click.echo(
        f"OK: {len(config.systems)} system(s), {len(config.gains)} gain pair(s), "
        f"{len(config.signals)} signal(s), {len(config.experiments)} experiment(s)"
    )
    sys.exit(EXIT_OK)


@main.command()
@click.option('--report', 'report_path', required=True, type=click.Path(path_type=Path),
              help='report.json from a previous run')
@click.option('--experiment', 'experiment_id', required=True, help='Experiment id')
@click.option('--out', 'out_dir', required=True, type=click.Path(file_okay=False, path_type=Path),
              help='Destination directory (files go to <out>/plots/)')
@click.option('-v', '--verbose', is_flag=True, help='Debug logging')
def plot(report_path, experiment_id, out_dir, verbose):
    """Emit t,y_ab,y_ba,diff CSVs for a commute or cascade experiment."""
    setup_logging(verbose)
    try:
        paths = emit_plot_data(Report.load(report_path), experiment_id, out_dir)
    except (PlotError, OSError, ValueError) as e:
        click.echo(f"Plot failed: {e}", err=True)
        sys.exit(EXIT_FAILURE)

    for path in paths:
        click.echo(str(path))
    sys.exit(EXIT_OK)


if __name__ == '__main__':
    main()
