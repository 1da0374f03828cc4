import logging
import os
import sys

sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from resonantqoc import const
from resonantqoc.arguments import parse_args
from resonantqoc.errors import QOCError
from resonantqoc.ui.cli import run_pipeline
from resonantqoc.utility.utils import project_setup

logger = logging.getLogger(__name__)


def main(argv=None) -> int:
    """
    Parse the arguments, set up logging and seeding, and run one subcommand.

    Returns:
        int: The process exit code (0 ok, 2 config, 3 invariant, 4 controllability, 5 convergence).
    """
    try:
        args = parse_args(argv)
    except QOCError as e:
        print(f"Error: {e}", file=sys.stderr)
        return e.exit_code

    # Set up logging configuration
    logging.basicConfig(
        level=getattr(logging, args.log_level),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        handlers=[
            logging.StreamHandler(sys.stdout)  # Output to stdout
        ],
        force=True,
    )

    if not args.quiet:
        print(const.RESONANTQOC_LOGO)
    project_setup(args.seed)
    logger.info(f"Running {args.command}, writing to {args.out}")
    code = run_pipeline(args)
    logger.info("Done!" if code == const.EXIT_OK else f"Exit code {code}")
    return code


if __name__ == "__main__":
    sys.exit(main())
