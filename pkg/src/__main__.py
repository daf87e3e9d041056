"""Entry point for `python -m src`."""

from .cli import main

main(prog_name='ltv-lab')
