# Copyright 2025 CNOE
# SPDX-License-Identifier: Apache-2.0

import json
from typing import Optional

import numpy as np
import pytest

from plasticity_control.grid import Field, Grid, make_grid
from plasticity_control.model import ControlBounds, FertilityPreset, MortalityPreset, ProblemData, VitalRates


def build_data(
  grid: Grid,
  *,
  m0: float = 0.0,
  b0: float = 0.0,
  p0: float | np.ndarray = 1.0,
  delta: float = 0.0,
  eta: float = 6.0,
  birth_wrap: bool = False,
  sigma1: float = -1.0,
  sigma2: float = 0.0,
  f: Optional[float] = None,
  mu: Optional[MortalityPreset] = None,
  beta: Optional[FertilityPreset] = None,
) -> ProblemData:
  rates = VitalRates(
    mu=mu or MortalityPreset(m0=m0),
    beta=beta or FertilityPreset(b0=b0),
    delta=delta,
    eta=eta,
    birth_wrap=birth_wrap,
  )
  p0_values = np.broadcast_to(np.asarray(p0, dtype=float), (grid.n_a + 1, grid.n_x)).copy()
  return ProblemData(
    grid=grid,
    rates=rates,
    p0=p0_values,
    bounds=ControlBounds.constant(grid, sigma1, sigma2),
    f=None if f is None else Field.full(grid, f),
  )


def build_switching_data(
  *,
  b0: float = 2.0,
  m0: float = 0.0,
  delta: float = 0.0,
  p0: float | np.ndarray = 1.0,
  sigma1: float = -1.0,
  sigma2: float = 0.0,
) -> ProblemData:
  """Twelve free control cells whose optimal choice is known in advance.

  On make_grid(4, 4, 4, 24) with wrapped births every node is pinned at u = -1
  except ages 0-1 at t = 0 (x cells 0-3) and ages 0-1 at the last step (x cells
  0-1). The early cells feed strong renewal, so q < -1 and the upper bound wins
  there; the late cells have no weighted future, so q > -1 and the lower bound
  wins. Holds for b0 >= 1.5, m0 <= 0.1, sigma1 in [-1, -0.5], sigma2 in [-0.1, 0].
  """
  grid = make_grid(4.0, 4.0, 4, 24)
  free = np.zeros(grid.shape, dtype=bool)
  free[:2, 0, :4] = True
  free[:2, grid.n_t - 1, :2] = True
  s1 = np.where(free, sigma1, -1.0)
  s2 = np.where(free, sigma2, -1.0)
  rates = VitalRates(mu=MortalityPreset(m0=m0), beta=FertilityPreset(b0=b0), delta=delta, birth_wrap=True)
  return ProblemData(
    grid=grid,
    rates=rates,
    p0=np.broadcast_to(np.asarray(p0, dtype=float), (grid.n_a + 1, grid.n_x)).copy(),
    bounds=ControlBounds(sigma1=Field.of(grid, s1), sigma2=Field.of(grid, s2)),
  )


@pytest.fixture
def make_data():
  return build_data


@pytest.fixture
def switching_data():
  return build_switching_data


@pytest.fixture
def small_grid() -> Grid:
  # da = dt = 0.25, n_t = 4
  return make_grid(2.0, 1.0, 8, 8)


@pytest.fixture
def fine_x_grid() -> Grid:
  # dx = 0.5 resolves the newborn kernel
  return make_grid(2.0, 1.0, 8, 48)


@pytest.fixture
def write_config(tmp_path):
  def _write(overrides: Optional[dict] = None, name: str = "config.json"):
    config = {
      "a_max": 2.0,
      "t_max": 1.0,
      "n_a": 8,
      "n_x": 8,
      "delta": 0.5,
      "eta": 6.0,
      "mu": {"type": "constant", "m0": 0.2},
      "beta": {"type": "constant", "b0": 0.3},
      "p0": {"type": "cosine", "mean": 1.0, "amplitude": 0.5, "mode": 1},
      "bounds": {"sigma1": -0.5, "sigma2": 0.0},
      "verify": {"trials": 4, "seed": 3},
    }
    config.update(overrides or {})
    path = tmp_path / name
    path.write_text(json.dumps(config), encoding="utf-8")
    return path

  return _write
