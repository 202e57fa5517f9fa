# Copyright 2025 CNOE
# SPDX-License-Identifier: Apache-2.0

"""Logging utilities for plasticity-control.

One stream handler on the root logger, with the package loggers raised to
the requested level so solver progress can be switched on per run.
"""

import logging

PACKAGE_LOGGER = "plasticity-control"

_PACKAGE_LOGGERS = [
  PACKAGE_LOGGER,
  f"{PACKAGE_LOGGER}.config",
  f"{PACKAGE_LOGGER}.model",
  f"{PACKAGE_LOGGER}.forward",
  f"{PACKAGE_LOGGER}.adjoint",
  f"{PACKAGE_LOGGER}.control",
  f"{PACKAGE_LOGGER}.verify",
  f"{PACKAGE_LOGGER}.cli",
]


def setup_logging(level: int = logging.WARNING) -> logging.Logger:
  """
  Configure plasticity-control logging.

  Args:
      level: The minimum logging level to display (default: WARNING)

  Returns:
      The configured package logger
  """
  root_logger = logging.getLogger()
  root_logger.setLevel(level)

  # Remove existing handlers to prevent duplication
  for handler in root_logger.handlers[:]:
    root_logger.removeHandler(handler)

  handler = logging.StreamHandler()
  formatter = logging.Formatter("%(levelname)s - %(name)s - %(message)s")
  handler.setFormatter(formatter)
  root_logger.addHandler(handler)

  for logger_name in _PACKAGE_LOGGERS:
    logging.getLogger(logger_name).setLevel(level)

  return logging.getLogger(PACKAGE_LOGGER)


def log_config_param(
  logger: logging.Logger,
  section: str,
  param: str,
  value: object,
) -> None:
  """Logs a resolved configuration parameter.

  Args:
      logger: The logger to use
      section: The config section (grid, rates, bounds, ...)
      param: The parameter name
      value: The parameter value
  """
  display_value = "Not Provided" if value is None else value
  logger.info(f"{section} {param}: {display_value}")
