import logging
import sys
from typing import Optional, Sequence

from app.cli.commands import run
from app.core.config import settings

# Configure logging; stdout is reserved for reports
logging.basicConfig(
    level=getattr(logging, settings.log_level.upper(), logging.INFO),
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
    stream=sys.stderr,
)


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Command-line entry point; returns the process exit code"""
    return run(argv)


if __name__ == "__main__":
    sys.exit(main())
