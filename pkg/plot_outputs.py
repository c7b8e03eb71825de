#!/usr/bin/env python3
"""
Render PNG plots from the CSV files written by the quermass CLI.
Usage: python plot_outputs.py [--out ./out]
"""
import argparse
import logging
import sys

from quermass import config
from quermass.plots import render_plots

logging.basicConfig(
    level=logging.INFO,
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
)

logger = logging.getLogger(__name__)


def main():
    parser = argparse.ArgumentParser(description="Render plots from quermass CLI outputs")
    parser.add_argument(
        '--out',
        type=str,
        default=config.OUTPUT_DIR,
        help=f'Directory holding trace.csv / scan.csv (default: {config.OUTPUT_DIR})'
    )
    args = parser.parse_args()

    try:
        written = render_plots(args.out)
        logger.info(f"Rendered {len(written)} plots")
        return 0
    except Exception as e:
        logger.error(f"Plotting failed: {e}", exc_info=True)
        return 1


if __name__ == '__main__':
    sys.exit(main())
