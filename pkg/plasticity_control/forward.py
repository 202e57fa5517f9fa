# Copyright 2025 CNOE
# SPDX-License-Identifier: Apache-2.0

"""
State solver for the age-structured plasticity system.

One time step (n → n+1) is a Lie splitting:

  1. transport-reaction along the characteristic (i, n) → (i+1, n+1) with the
     exact integrating factor exp(−(μ − u)·dt);
  2. implicit periodic diffusion (I − δ·dt·L) p = p½ on every age row i ≥ 1;
  3. the a = 0 row: newborns from the birth integral (renewal), or a prescribed b.

Every sub-step is a nonnegative, monotone operator, so positivity and the
comparison ordering survive floating point exactly.
"""

from __future__ import annotations

import logging
import math
from enum import Enum
from functools import lru_cache
from typing import Optional

import numpy as np
import pydantic
import scipy.linalg
from pydantic import BaseModel, ConfigDict

from plasticity_control.constants import DEFAULT_FP_MAX_ITER, DEFAULT_FP_TOL
from plasticity_control.exceptions import HypothesisError, NonConvergenceError, SolverDivergenceError
from plasticity_control.grid import Field, Grid
from plasticity_control.model import ProblemData, validate_params

logger = logging.getLogger("plasticity-control.forward")


class ForwardMode(str, Enum):
  renewal = "renewal"
  prescribed_b = "prescribed_b"
  fixed_point = "fixed_point"


class ForwardConfig(BaseModel):
  model_config = ConfigDict(frozen=True, extra="forbid")

  mode: ForwardMode = ForwardMode.renewal
  fp_tol: float = pydantic.Field(default=DEFAULT_FP_TOL, gt=0, description="L2 tolerance on the newborn boundary")
  fp_max_iter: int = pydantic.Field(default=DEFAULT_FP_MAX_ITER, ge=1)


class FixedPointResult(BaseModel):
  model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

  state: Field
  boundary: np.ndarray
  iterations: int
  residuals: list[float]
  contraction: Optional[float] = pydantic.Field(default=None, description="geometric mean of residual ratios")


class CirculantDiffusion:
  """Backward-Euler step for δ·∂xx on the periodic x cells.

  ``I − δ·dt·L`` is a strictly diagonally dominant M-matrix. Its LU factors
  have nonpositive off-diagonals, so each triangular solve only adds
  nonnegative terms: the step maps nonnegative rows to nonnegative rows and
  preserves order.
  """

  def __init__(self, grid: Grid, delta: float):
    self.grid = grid
    self.delta = float(delta)
    self.ratio = self.delta * grid.dt / grid.dx**2
    self._lu = None
    if self.delta > 0:
      column = np.zeros(grid.n_x)
      np.add.at(column, [0, 1, grid.n_x - 1], [1.0 + 2.0 * self.ratio, -self.ratio, -self.ratio])
      self.matrix = scipy.linalg.circulant(column)
      self._lu = scipy.linalg.lu_factor(self.matrix, check_finite=False)
    else:
      self.matrix = np.eye(grid.n_x)

  def eigenvalue(self, j: int | np.ndarray) -> float | np.ndarray:
    """Discrete eigenvalue 2(1 − cos(2πj/n_x))/dx² of −L."""
    return 2.0 * (1.0 - np.cos(2.0 * np.pi * np.asarray(j) / self.grid.n_x)) / self.grid.dx**2

  def damping(self, j: int | np.ndarray) -> float | np.ndarray:
    return 1.0 / (1.0 + self.delta * self.grid.dt * self.eigenvalue(j))

  def apply(self, rows: np.ndarray) -> np.ndarray:
    """Solve (I − δ·dt·L) y = row for each row of a (m, n_x) array."""
    if self._lu is None:
      return np.array(rows, dtype=float, copy=True)
    return scipy.linalg.lu_solve(self._lu, np.asarray(rows, dtype=float).T, check_finite=False).T


@lru_cache(maxsize=16)
def circulant_diffusion(grid: Grid, delta: float) -> CirculantDiffusion:
  return CirculantDiffusion(grid, delta)


def step_transport_reaction(
  p_slice: np.ndarray,
  mu_slice: np.ndarray,
  u_slice: np.ndarray,
  f_slice: np.ndarray,
  grid: Grid,
) -> np.ndarray:
  """Shift every age row one step along the characteristic.

  Row i+1 at time n+1 receives row i at time n damped by exp(−(μ − u)·dt),
  plus the source f·dt·exp(−(μ − u)·dt/2). μ, u and f are taken at the
  departure node. Row 0 of the result is left at zero for the newborns.
  """
  rate = mu_slice[:-1] - u_slice[:-1]
  out = np.zeros_like(p_slice, dtype=float)
  out[1:] = p_slice[:-1] * np.exp(-rate * grid.dt) + f_slice[:-1] * grid.dt * np.exp(-0.5 * rate * grid.dt)
  return out


def step_diffusion(p_slice: np.ndarray, delta: float, grid: Grid) -> np.ndarray:
  """Implicit periodic diffusion of every row of *p_slice* over one dt."""
  return circulant_diffusion(grid, float(delta)).apply(p_slice)


def birth_boundary(p_slice: np.ndarray, beta: np.ndarray, weights: np.ndarray, grid: Grid) -> np.ndarray:
  """Newborns b(k) = Σ_{i<n_a} β(a_i)·(Σ_l W[k,l] p(i,l))·da."""
  weighted = (beta[: grid.n_a, None] * p_slice[: grid.n_a]).sum(axis=0)
  return (weights @ weighted) * grid.da


def _lagged_slice(p: np.ndarray, n: int, current: np.ndarray) -> np.ndarray:
  # newborn cell from level n, older ages from the freshly computed level n+1
  composite = current.copy()
  composite[0] = p[0, n]
  return composite


def _check_finite(solver: str, values: np.ndarray, n: int) -> None:
  if not np.all(np.isfinite(values)):
    i, k = np.argwhere(~np.isfinite(values))[0]
    raise SolverDivergenceError(solver, (int(i), n, int(k)))


def _require_valid(data: ProblemData) -> None:
  report = validate_params(data)
  if not report.ok:
    raise HypothesisError(report)


def _march(data: ProblemData, u: np.ndarray, boundary: Optional[np.ndarray]) -> np.ndarray:
  grid = data.grid
  mu = data.mortality()
  f = data.source()
  beta = data.fertility()
  weights = data.weights
  diffusion = circulant_diffusion(grid, float(data.rates.delta))

  p = np.empty(grid.shape)
  p[:, 0, :] = data.p0
  for n in range(grid.n_t):
    current = step_transport_reaction(p[:, n], mu[:, n], u[:, n], f[:, n], grid)
    current[1:] = diffusion.apply(current[1:])
    if boundary is None:
      current[0] = birth_boundary(_lagged_slice(p, n, current), beta, weights, grid)
    else:
      current[0] = boundary[n + 1]
    _check_finite("forward", current, n + 1)
    p[:, n + 1] = current
  return p


def newborn_map(data: ProblemData, p: np.ndarray) -> np.ndarray:
  """Apply the birth integral to a whole state: the map b ↦ ℱ(b) once p = p_b."""
  grid = data.grid
  beta = data.fertility()
  b = np.empty((grid.n_t + 1, grid.n_x))
  b[0] = data.p0[0]
  for n in range(grid.n_t):
    b[n + 1] = birth_boundary(_lagged_slice(p, n, p[:, n + 1]), beta, data.weights, grid)
  return b


def boundary_norm(grid: Grid, b: np.ndarray) -> float:
  """Discrete L2((0,T)×(0,24)) norm over boundary rows n = 1..n_t."""
  return math.sqrt(float(np.sum(b[1:] ** 2)) * grid.dt * grid.dx)


def forward_solve_prescribed(data: ProblemData, u: Field, b: np.ndarray) -> Field:
  """Solve with p(0, t_n, x) = b[n] for n ≥ 1."""
  _require_valid(data)
  b = np.asarray(b, dtype=float)
  if b.shape != (data.grid.n_t + 1, data.grid.n_x):
    raise ValueError(f"boundary shape {b.shape} does not match {(data.grid.n_t + 1, data.grid.n_x)}")
  return Field.of(data.grid, _march(data, u.values, b))


def forward_solve_fixed_point(
  data: ProblemData,
  u: Field,
  cfg: ForwardConfig = ForwardConfig(mode=ForwardMode.fixed_point),
  b0: Optional[np.ndarray] = None,
) -> FixedPointResult:
  """Iterate b ← ℱ(b) until the boundary update falls below ``fp_tol``.

  Raises:
      NonConvergenceError: ``fp_max_iter`` reached, with the residual history
  """
  _require_valid(data)
  grid = data.grid
  b = np.zeros((grid.n_t + 1, grid.n_x)) if b0 is None else np.array(b0, dtype=float)
  b[0] = data.p0[0]
  residuals: list[float] = []
  for iteration in range(1, cfg.fp_max_iter + 1):
    p = _march(data, u.values, b)
    b_next = newborn_map(data, p)
    residual = boundary_norm(grid, b_next - b)
    residuals.append(residual)
    logger.debug(f"fixed point iteration {iteration}: residual {residual:.3e}")
    if residual < cfg.fp_tol:
      return FixedPointResult(
        state=Field.of(grid, p),
        boundary=b,
        iterations=iteration,
        residuals=residuals,
        contraction=_contraction(residuals),
      )
    b = b_next
  raise NonConvergenceError(cfg.fp_max_iter, residuals)


def _contraction(residuals: list[float]) -> Optional[float]:
  ratios = [b / a for a, b in zip(residuals, residuals[1:]) if a > 0 and b > 0]
  if not ratios:
    return None
  return float(np.exp(np.mean(np.log(ratios))))


def forward_solve(
  data: ProblemData,
  u: Field,
  cfg: ForwardConfig = ForwardConfig(),
  b: Optional[np.ndarray] = None,
) -> Field:
  """Solve the state system for control *u*.

  ``renewal`` closes the a = 0 row with the lagged birth integral,
  ``prescribed_b`` copies *b*, ``fixed_point`` iterates the newborn map.
  """
  if cfg.mode is ForwardMode.prescribed_b:
    if b is None:
      raise ValueError("prescribed_b mode needs a boundary array")
    return forward_solve_prescribed(data, u, b)
  if cfg.mode is ForwardMode.fixed_point:
    return forward_solve_fixed_point(data, u, cfg).state
  _require_valid(data)
  return Field.of(data.grid, _march(data, u.values, None))


def mass_by_time(p: Field) -> np.ndarray:
  """Σ_{i<n_a, k} p·da·dx for every time level."""
  grid = p.grid
  return p.values[: grid.n_a].sum(axis=(0, 2)) * grid.da * grid.dx


def boundary_of(p: Field) -> np.ndarray:
  """The a = 0 row, shape (n_t+1, n_x)."""
  return np.array(p.values[0])
