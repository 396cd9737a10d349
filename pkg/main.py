#!/usr/bin/env python3
"""
KISS-GP / LOVE - Main Entry Point
Fast predictive variances and posterior sampling for structured kernel interpolation
"""

import os
import sys

# Add project root to Python path
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from config import config
from src.ui.cli import CLI, build_parser
from src.utils.logger import get_logger, setup_logger


def setup_environment():
    """Setup environment variables for better performance"""
    os.environ.setdefault('OMP_NUM_THREADS', config.omp_num_threads)
    os.environ.setdefault('MKL_NUM_THREADS', config.mkl_num_threads)


def main() -> int:
    """Main entry point"""
    setup_environment()

    args = build_parser().parse_args()

    setup_logger(level=args.log_level)
    logger = get_logger("Main")
    logger.info(f"Starting {args.command}")

    exit_code = CLI().run(args)
    logger.info(f"{args.command} finished with exit code {exit_code}")
    return exit_code


if __name__ == "__main__":
    sys.exit(main())
