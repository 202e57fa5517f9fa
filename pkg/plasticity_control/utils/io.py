# Copyright 2025 CNOE
# SPDX-License-Identifier: Apache-2.0

"""I/O utility functions: byte-stable CSV and JSON writers."""

import json
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from plasticity_control.utils.environment import get_output_digits


def write_csv(path: str | Path, header: Sequence[str], columns: Sequence[np.ndarray]) -> Path:
  """Write equally long columns as CSV with a one-line header.

  Values are written with ``%.<digits>g`` so reruns produce identical bytes.
  """
  path = Path(path)
  path.parent.mkdir(parents=True, exist_ok=True)
  table = np.column_stack([np.asarray(c, dtype=float).ravel() for c in columns])
  fmt = f"%.{get_output_digits()}g"
  np.savetxt(path, table, delimiter=",", header=",".join(header), comments="", fmt=fmt)
  return path


def read_csv(path: str | Path, header: Sequence[str]) -> np.ndarray:
  """Read a CSV written by :func:`write_csv`, checking the header line."""
  path = Path(path)
  with path.open("r", encoding="utf-8") as handle:
    first = handle.readline().strip()
  expected = ",".join(header)
  if first != expected:
    raise ValueError(f"{path}: expected header {expected!r}, found {first!r}")
  table = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
  if table.shape[1] != len(header):
    raise ValueError(f"{path}: expected {len(header)} columns, found {table.shape[1]}")
  return table


def write_json(path: str | Path, payload: Any) -> Path:
  """Write *payload* as indented JSON with sorted keys."""
  path = Path(path)
  path.parent.mkdir(parents=True, exist_ok=True)
  with path.open("w", encoding="utf-8") as handle:
    json.dump(payload, handle, indent=2, sort_keys=True, ensure_ascii=False)
    handle.write("\n")
  return path
