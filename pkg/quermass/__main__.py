"""CLI entrypoint for the quermass toolkit."""
import argparse
import logging
import sys

from . import config
from .errors import ConfigError, ParameterDomainError, RootNotBracketedError
from .pipeline import COMMANDS, cmd_analyze_contours
from .run_config import load_run_config

logging.basicConfig(
    level=getattr(logging, config.LOG_LEVEL.upper(), logging.INFO),
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_DOMAIN = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="quermass",
        description="Quermass-interaction point process: sampling, scans, contours and expansion reports"
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        '--config',
        type=str,
        default=None,
        help='Run file with key = value settings'
    )
    common.add_argument(
        '--seed',
        type=int,
        default=None,
        help=f'Random seed (default: {config.DEFAULT_SEED})'
    )
    common.add_argument(
        '--out',
        type=str,
        default=None,
        help=f'Output directory (default: {config.OUTPUT_DIR})'
    )
    common.add_argument(
        '--threads',
        type=int,
        default=None,
        help=f'Worker processes (default: {config.DEFAULT_THREADS})'
    )

    subparsers = parser.add_subparsers(dest="command", required=True)
    subparsers.add_parser("sample", parents=[common], help="Run one chain and estimate the density")
    subparsers.add_parser("scan", parents=[common], help="Density-gap scan of both wired phases")
    contours = subparsers.add_parser("contours", parents=[common], help="Contour statistics of saved snapshots")
    contours.add_argument(
        '--snapshots',
        type=str,
        default=None,
        help='Snapshots Parquet file (default: <out>/snapshots.parquet)'
    )
    subparsers.add_parser("expand", parents=[common], help="Cluster-expansion report")
    subparsers.add_parser("check-constants", parents=[common], help="Peierls constants and minimal beta")
    return parser


def main(argv=None) -> int:
    """Main CLI entrypoint."""
    parser = build_parser()
    args = parser.parse_args(argv)

    try:
        if args.seed is not None and args.seed < 0:
            raise ConfigError("must be a non-negative integer", "--seed", None, "seed")
        run = load_run_config(args.config, seed=args.seed, out=args.out, threads=args.threads)
        config.ensure_directories(run.out)
        if args.command == "contours":
            cmd_analyze_contours(run, args.snapshots)
        else:
            COMMANDS[args.command](run)

        logger.info(f"Command '{args.command}' completed successfully!")
        return EXIT_OK

    except ConfigError as e:
        logger.error(f"Configuration error: {e}")
        return EXIT_CONFIG
    except (ParameterDomainError, RootNotBracketedError) as e:
        logger.error(f"Numerical domain error: {e}")
        return EXIT_DOMAIN
    except Exception as e:
        logger.error(f"Command '{args.command}' failed: {e}", exc_info=True)
        return EXIT_FAILURE


if __name__ == '__main__':
    sys.exit(main())
