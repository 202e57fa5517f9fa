"""
Utility functions for the plasticity-control toolkit.
This package provides logging, environment and file helpers used throughout the codebase.
"""

from .environment import get_log_level, get_output_digits, load_environment
from .io import read_csv, write_csv, write_json
from .logging import log_config_param, setup_logging

__all__ = [
  "get_log_level",
  "get_output_digits",
  "load_environment",
  "read_csv",
  "write_csv",
  "write_json",
  "log_config_param",
  "setup_logging",
]
