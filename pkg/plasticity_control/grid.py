# Copyright 2025 CNOE
# SPDX-License-Identifier: Apache-2.0

"""
Characteristic lattice over (0, a†) × (0, T) × [0, 24).

Ages and times share one step so the transport derivative D = ∂t + ∂a is an
exact index shift (i, n) → (i+1, n+1). The biting-time axis is periodic and
sampled at cell centers; periodicity is carried by modular indexing only.

A node (i, n) with i < n_a and n < n_t labels the characteristic cell whose
lower-left corner it is. Quadratures run over those cells; the a = a† and
t = T nodes close the lattice and carry no weight.
"""

from __future__ import annotations

from pathlib import Path
from typing import Callable

import numpy as np
import pydantic
from pydantic import BaseModel, ConfigDict, model_validator

from plasticity_control.constants import MIN_AGE_CELLS, MIN_X_CELLS, X_PERIOD
from plasticity_control.exceptions import GridError
from plasticity_control.utils.io import read_csv, write_csv

FIELD_HEADER = ("a", "t", "x", "value")

# Relative slack when checking that t_max is a whole number of age steps.
_ALIGN_RTOL = 1e-9


class Grid(BaseModel):
  """Aligned (a, t) lattice plus periodic x cells."""

  model_config = ConfigDict(frozen=True)

  a_max: float = pydantic.Field(gt=0, description="age horizon a†")
  t_max: float = pydantic.Field(gt=0, description="time horizon T")
  n_a: int = pydantic.Field(ge=1, description="age cells")
  n_t: int = pydantic.Field(ge=1, description="time steps")
  n_x: int = pydantic.Field(ge=2, description="periodic x cells over [0, 24)")
  da: float
  dt: float
  dx: float

  @model_validator(mode="after")
  def _check_alignment(self) -> "Grid":
    if self.da != self.dt:
      raise ValueError("da and dt must be identical for characteristic alignment")
    return self

  @property
  def shape(self) -> tuple[int, int, int]:
    return (self.n_a + 1, self.n_t + 1, self.n_x)

  @property
  def ages(self) -> np.ndarray:
    return np.arange(self.n_a + 1) * self.da

  @property
  def times(self) -> np.ndarray:
    return np.arange(self.n_t + 1) * self.dt

  @property
  def centers(self) -> np.ndarray:
    return (np.arange(self.n_x) + 0.5) * self.dx

  @property
  def cell_weight(self) -> float:
    return self.da * self.dt * self.dx

  @property
  def control_cells(self) -> int:
    """Number of cells a control value actually acts on."""
    return self.n_a * self.n_t * self.n_x


def make_grid(a_max: float, t_max: float, n_a: int, n_x: int, *, min_x_cells: int = MIN_X_CELLS) -> Grid:
  """Build the characteristic lattice, deriving n_t = t_max / da.

  Raises:
      GridError: sizes out of range, or t_max not a whole number of age steps
  """
  if a_max <= 0 or t_max <= 0:
    raise GridError(f"a_max and t_max must be positive (got {a_max}, {t_max})")
  if n_a < MIN_AGE_CELLS:
    raise GridError(f"n_a must be at least {MIN_AGE_CELLS} (got {n_a})")
  if n_x < min_x_cells:
    raise GridError(f"n_x must be at least {min_x_cells} (got {n_x})")

  da = a_max / n_a
  ratio = t_max / da
  n_t = int(round(ratio))
  if n_t < 1 or abs(ratio - n_t) > _ALIGN_RTOL * max(1.0, ratio):
    raise GridError(
      f"t_max/da = {t_max}/{da:.12g} = {ratio:.12g} is not an integer; "
      "time steps cannot follow the characteristics"
    )
  return Grid(a_max=a_max, t_max=t_max, n_a=n_a, n_t=n_t, n_x=n_x, da=da, dt=da, dx=X_PERIOD / n_x)


def wrap_x(grid: Grid, k: int) -> int:
  """Periodic x index: k mod n_x in [0, n_x)."""
  return k % grid.n_x


class Field(BaseModel):
  """Scalar grid function indexed (age i, time n, x k)."""

  model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

  grid: Grid
  values: np.ndarray

  @model_validator(mode="after")
  def _check_values(self) -> "Field":
    if self.values.shape != self.grid.shape:
      raise ValueError(f"values shape {self.values.shape} does not match grid {self.grid.shape}")
    if not np.all(np.isfinite(self.values)):
      raise ValueError("field values must be finite")
    self.values.setflags(write=False)
    return self

  @classmethod
  def of(cls, grid: Grid, values: np.ndarray) -> "Field":
    return cls(grid=grid, values=np.array(values, dtype=float))

  @classmethod
  def zeros(cls, grid: Grid) -> "Field":
    return cls(grid=grid, values=np.zeros(grid.shape))

  @classmethod
  def full(cls, grid: Grid, value: float) -> "Field":
    return cls(grid=grid, values=np.full(grid.shape, float(value)))

  @classmethod
  def from_function(cls, grid: Grid, fn: Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]) -> "Field":
    a, t, x = np.meshgrid(grid.ages, grid.times, grid.centers, indexing="ij")
    return cls(grid=grid, values=np.broadcast_to(np.asarray(fn(a, t, x), dtype=float), grid.shape).copy())

  def at(self, i: int, n: int, k: int) -> float:
    return float(self.values[i, n, wrap_x(self.grid, k)])

  def cells(self) -> np.ndarray:
    """Values on the weighted cells (i < n_a, n < n_t)."""
    return self.values[: self.grid.n_a, : self.grid.n_t, :]

  def to_csv(self, path: str | Path) -> Path:
    a, t, x = np.meshgrid(self.grid.ages, self.grid.times, self.grid.centers, indexing="ij")
    return write_csv(path, FIELD_HEADER, [a, t, x, self.values])

  @classmethod
  def from_csv(cls, grid: Grid, path: str | Path) -> "Field":
    table = read_csv(path, FIELD_HEADER)
    expected = int(np.prod(grid.shape))
    if table.shape[0] != expected:
      raise GridError(f"{path}: {table.shape[0]} rows, grid needs {expected}")
    a, t, x = np.meshgrid(grid.ages, grid.times, grid.centers, indexing="ij")
    coords = np.column_stack([a.ravel(), t.ravel(), x.ravel()])
    if not np.allclose(table[:, :3], coords, rtol=1e-9, atol=1e-9):
      raise GridError(f"{path}: coordinates do not match the grid")
    return cls.of(grid, table[:, 3].reshape(grid.shape))
