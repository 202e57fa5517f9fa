# Copyright 2025 CNOE
# SPDX-License-Identifier: Apache-2.0

"""Utility functions related to environment settings."""

import logging
import os

from dotenv import load_dotenv

from plasticity_control.constants import DEFAULT_OUTPUT_DIGITS, MIN_OUTPUT_DIGITS

logger = logging.getLogger("plasticity-control.utils.environment")


def load_environment() -> None:
  """Load a ``.env`` file from the working directory, if any."""
  load_dotenv()


def get_log_level() -> int:
  """Resolve ``PLASTICITY_LOG_LEVEL`` (name or number) to a logging level."""
  value = os.getenv("PLASTICITY_LOG_LEVEL", "WARNING").strip()
  if value.isdigit():
    return int(value)
  level = logging.getLevelName(value.upper())
  if isinstance(level, int):
    return level
  logger.warning(f"Unknown PLASTICITY_LOG_LEVEL={value!r}, using WARNING")
  return logging.WARNING


def get_output_digits() -> int:
  """Significant digits written to CSV files (never fewer than 12)."""
  value = os.getenv("PLASTICITY_OUTPUT_DIGITS")
  if not value:
    return DEFAULT_OUTPUT_DIGITS
  try:
    digits = int(value)
  except ValueError:
    logger.warning(f"Ignoring non-integer PLASTICITY_OUTPUT_DIGITS={value!r}")
    return DEFAULT_OUTPUT_DIGITS
  return max(digits, MIN_OUTPUT_DIGITS)
