"""Entry point for ``python -m mtmct_tracker``."""

from mtmct_tracker.cli import main

main()
