"""
Command-line entry point
"""
import argparse
import logging
import sys
from typing import List, Optional

from gwcl import __version__
from gwcl.commands import register_commands
from gwcl.config import LOG_LEVEL, configure_logging
from gwcl.errors import GwclError

logger = logging.getLogger("gwcl.cli")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gwcl",
        description="Semi-supervised hyperspectral pixel classification with a graph-weighted contrastive loss",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  # Check a dataset and see the split sizes
  python run.py ingest --cube data/indian_pines/indian_pines_corrected --labels data/indian_pines/indian_pines_gt

  # Full reproduction with the built-in preset
  python run.py run-experiment --preset indian_pines --reps 10 --out output/ip

  # Ablations on the same data
  python run.py ablation --preset indian_pines --reps 3 --out output/ip_ablation
        """,
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--log-level", default=LOG_LEVEL, help="DEBUG, INFO, WARNING or ERROR")
    subparsers = parser.add_subparsers(dest="command", help="Command to run")
    register_commands(subparsers)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not args.command:
        parser.print_help()
        return 0

    configure_logging(args.log_level)
    try:
        return args.func(args) or 0
    except GwclError as e:
        print(f"\n[ERROR] {e}", file=sys.stderr)
        logger.debug("Failure details", exc_info=True)
        return 1
    except KeyboardInterrupt:
        print("\n[CANCELLED] Interrupted", file=sys.stderr)
        return 130


if __name__ == "__main__":
    sys.exit(main())
