#!/usr/bin/env python3
"""
Run script for the stackmarket solver
"""
import sys

from stackmarket.core.config import settings
from stackmarket.main import main


def check_environment():
    """Check that the configured limits are usable"""
    problems = []
    if settings.STACKMARKET_JOBS < 1:
        problems.append("STACKMARKET_JOBS must be at least 1")
    if settings.PRICE_FLOOR <= 0:
        problems.append("PRICE_FLOOR must be positive")
    if settings.MILP_NODE_LIMIT < 1 or settings.LP_ITERATION_LIMIT < 1:
        problems.append("MILP_NODE_LIMIT and LP_ITERATION_LIMIT must be positive")

    if problems:
        for problem in problems:
            print(f"Configuration error: {problem}", file=sys.stderr)
        print("Check the environment or the .env file.", file=sys.stderr)
        return False
    return True


if __name__ == "__main__":
    if not check_environment():
        sys.exit(1)
    sys.exit(main())
