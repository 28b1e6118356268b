# scr_cli.py - command-line entry point for the SCR optimizer

import argparse
import logging
import sys
from typing import List, Optional

from config_settings import DEFAULT_EPSILON, DEFAULT_JOBS, LOG_LEVEL, TOOL_VERSION
from constants import Algorithm

# Set up logging with unified format and colors
class ColoredFormatter(logging.Formatter):
    """Custom formatter to add colors to log levels"""

    # ANSI color codes
    COLORS = {
        'DEBUG': '\033[36m',    # Cyan
        'INFO': '\033[32m',     # Green
        'WARNING': '\033[33m',  # Yellow
        'ERROR': '\033[31m',    # Red
        'CRITICAL': '\033[35m', # Magenta
    }
    RESET = '\033[0m'

    def format(self, record):
        level_color = self.COLORS.get(record.levelname, self.RESET)
        record = logging.makeLogRecord(record.__dict__)
        record.levelname = f"{level_color}{record.levelname}{self.RESET}"
        return super().format(record)


LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'


def setup_logging(level: str = LOG_LEVEL):
    logging.basicConfig(level=getattr(logging, level.upper(), logging.INFO), format=LOG_FORMAT,
                        handlers=[logging.StreamHandler()])
    root_logger = logging.getLogger()
    for handler in root_logger.handlers:
        if sys.stderr.isatty():
            handler.setFormatter(ColoredFormatter(LOG_FORMAT))
    # Only warnings and errors from the plotting stack
    logging.getLogger('matplotlib').setLevel(logging.WARNING)


logger = logging.getLogger(__name__)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="scr",
        description="Service-cost ratio optimizer for LLM fine-tuning over mobile edge servers",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {TOOL_VERSION}")
    parser.add_argument("--log-level", default=LOG_LEVEL, help="DEBUG, INFO, WARNING or ERROR")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="draw a scenario from a config file")
    p.add_argument("config", nargs="?", default=None, help="scenario config JSON (default: src/config/default_scenario.json)")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--out", default=None, help="scenario file to write")

    algorithms = ", ".join(f"{a.value} ({a.description})" for a in Algorithm)
    p = sub.add_parser("solve", help="run one algorithm on a scenario")
    p.add_argument("scenario", help="scenario JSON written by generate")
    p.add_argument("--algorithm", default=Algorithm.DASHF.value, choices=[a.value for a in Algorithm],
                   help=algorithms)
    p.add_argument("--epsilon", type=float, default=DEFAULT_EPSILON, help="relative Dinkelbach stopping tolerance")
    p.add_argument("--out", default=None, help="output directory")

    p = sub.add_parser("compare", help="run DASHF and the four baselines on a scenario")
    p.add_argument("scenario")
    p.add_argument("--epsilon", type=float, default=DEFAULT_EPSILON)
    p.add_argument("--out", default=None, help="output directory")
    p.add_argument("--jobs", type=int, default=DEFAULT_JOBS, help="worker threads")

    p = sub.add_parser("sweep", help="run an experiment spec over bandwidths or weights")
    p.add_argument("spec", help="experiment JSON")
    p.add_argument("--seed", type=int, default=None, help="run a single seed instead of the spec's list")
    p.add_argument("--epsilon", type=float, default=None)
    p.add_argument("--out", default=None, help="output directory")
    p.add_argument("--jobs", type=int, default=DEFAULT_JOBS, help="worker threads")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging(args.log_level)

    # Imported after logging is configured so module-level messages are formatted
    import scr_commands

    logger.info(f"🚀 scr {TOOL_VERSION}: {args.command}")
    if args.command == "generate":
        return scr_commands.cmd_generate(args.config, seed=args.seed, out=args.out)
    if args.command == "solve":
        return scr_commands.cmd_solve(args.scenario, algorithm=args.algorithm, epsilon=args.epsilon, out=args.out)
    if args.command == "compare":
        return scr_commands.cmd_compare(args.scenario, epsilon=args.epsilon, out=args.out, jobs=args.jobs)
    return scr_commands.cmd_sweep(args.spec, out=args.out, jobs=args.jobs, seed=args.seed, epsilon=args.epsilon)


if __name__ == "__main__":
    sys.exit(main())
