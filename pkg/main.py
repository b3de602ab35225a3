#!/usr/bin/env python3
"""
CSD Test Toolkit - conditional stochastic dominance tests from induced order statistics

Tests whether one outcome distribution dominates another conditionally on a
covariate value, with data-independent critical values, a rule-of-thumb
tuning parameter, a sharp RDD mode, and a Monte Carlo harness for size and
power studies.

Usage:
    python main.py test data.csv --alpha 0.1 --target 0.5
    python main.py cv --qy 70 --qx 70 --alpha 0.05
"""

import sys
from pathlib import Path

# Add src to path for imports
sys.path.insert(0, str(Path(__file__).parent / "src"))

from src.cli import dispatch


def main():
    """Main application entry point."""
    try:
        sys.exit(dispatch(sys.argv[1:]))
    except KeyboardInterrupt:
        sys.exit(130)


if __name__ == "__main__":
    main()
