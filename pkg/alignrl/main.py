"""
Command-line entry point.
"""
import sys
from typing import Optional, Sequence

from pydantic import ValidationError

from alignrl.cli import build_parser
from alignrl.core.exceptions import AlignRLError
from alignrl.core.logging import get_logger, set_run_id, setup_logging

logger = get_logger(__name__)

USAGE_EXIT = 2


def cli_main(argv: Optional[Sequence[str]] = None) -> int:
    """
    Run one subcommand and map failures to exit codes.

    Returns:
        int: 0 on success, 2 for usage errors, 3 for file and format errors,
        4 for numeric failures, 1 otherwise
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else USAGE_EXIT

    setup_logging(level=args.log_level, log_format=args.log_format)
    set_run_id()
    logger.info("Command started", command=args.command)

    try:
        code = args.handler(args)
    except AlignRLError as exc:
        logger.error("Command failed", command=args.command, error_code=exc.code, error=exc.message)
        sys.stderr.write(f"error: {exc.message}\n")
        return exc.exit_code
    except ValidationError as exc:
        logger.error("Invalid configuration", command=args.command, error=str(exc))
        sys.stderr.write(f"error: invalid configuration: {exc}\n")
        return USAGE_EXIT
    except Exception as exc:
        logger.exception("Unexpected error", command=args.command)
        sys.stderr.write(f"error: {exc}\n")
        return 1

    logger.info("Command finished", command=args.command)
    return code


def main() -> None:
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
