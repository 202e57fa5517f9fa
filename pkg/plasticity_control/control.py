# Copyright 2025 CNOE
# SPDX-License-Identifier: Apache-2.0

"""
Harvest objective and bang-bang optimal control.

Ψ(u) = Σ u·p^u·da·dt·dx over the weighted cells; the harvest is H = −Ψ.
The optimum switches between the bounds where the adjoint crosses −1:
u* = ς₁ where q > −1 and u* = ς₂ where q < −1.
"""

from __future__ import annotations

import itertools
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from typing import Optional

import numpy as np
import pydantic
from pydantic import BaseModel, ConfigDict

from plasticity_control.adjoint import AdjointConfig, adjoint_solve
from plasticity_control.constants import (
  DEFAULT_EPS_FD,
  DEFAULT_RELAXATION,
  DEFAULT_SWEEP_MAX_ITER,
  DEFAULT_SWITCH_BAND,
  DEFAULT_U_TOL,
  MAX_ENUMERATED_CELLS,
  MAX_LISTED_TIES,
  POSITIVITY_FLOOR,
  TIE_RTOL,
)
from plasticity_control.exceptions import EnumerationLimitError, InadmissibleDirectionError
from plasticity_control.forward import ForwardConfig, forward_solve
from plasticity_control.grid import Field, Grid
from plasticity_control.model import ControlBounds, FertilityPreset, MortalityPreset, ProblemData

logger = logging.getLogger("plasticity-control.control")


class SweepConfig(BaseModel):
  model_config = ConfigDict(frozen=True)

  relaxation: float = pydantic.Field(default=DEFAULT_RELAXATION, gt=0, le=1, description="damping ω of the control update")
  max_iter: int = pydantic.Field(default=DEFAULT_SWEEP_MAX_ITER, ge=1)
  u_tol: float = pydantic.Field(default=DEFAULT_U_TOL, gt=0, description="L2 tolerance on the control update")
  switch_band: float = pydantic.Field(default=DEFAULT_SWITCH_BAND, ge=0, description="dead band τ around q = -1")
  eps_fd: float = pydantic.Field(default=DEFAULT_EPS_FD, gt=0)


class SweepResult(BaseModel):
  model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

  u_star: Field
  p_star: Field
  q: Field
  objective_history: list[float]
  residual_history: list[float]
  converged: bool
  iterations: int
  psi_star: float

  @property
  def harvest(self) -> float:
    return -self.psi_star


class OracleResult(BaseModel):
  model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

  u_best: Field
  psi_best: float
  candidates: int
  tie_count: int
  ties: list[list[int]] = pydantic.Field(description="upper-bound choices (1 = ς₂) of controls tying the best")
  ties_truncated: bool = pydantic.Field(default=False, description="more ties than the listed ones")


class VariationalReport(BaseModel):
  fd_derivative: float
  adjoint_expression: float
  gap: float
  eps: float
  scale: float


def _cell_sum(grid: Grid, values: np.ndarray) -> float:
  return float(values[: grid.n_a, : grid.n_t].sum()) * grid.cell_weight


def objective(u: Field, p: Field, grid: Grid) -> float:
  """Ψ = Σ u·p·da·dt·dx over the weighted cells."""
  return _cell_sum(grid, u.values * p.values)


def control_norm(grid: Grid, values: np.ndarray) -> float:
  return math.sqrt(_cell_sum(grid, values**2))


def switching_rule(q: Field, bounds: ControlBounds, u_prev: Field, band: float) -> Field:
  """ς₁ where q > −1 + τ, ς₂ where q < −1 − τ, else the previous control clamped."""
  s1 = bounds.sigma1.values
  s2 = bounds.sigma2.values
  out = bounds.clamp(u_prev.values)
  out = np.where(q.values > -1.0 + band, s1, out)
  out = np.where(q.values < -1.0 - band, s2, out)
  return Field.of(q.grid, out)


def sweep(
  data: ProblemData,
  cfg: SweepConfig = SweepConfig(),
  forward_cfg: ForwardConfig = ForwardConfig(),
) -> SweepResult:
  """Forward-backward sweep with relaxed bang-bang updates, starting from ς₁.

  On convergence the switching-rule control of the last adjoint is returned
  as u*, with the state and adjoint recomputed for it. Hitting ``max_iter``
  is not an error: the last iterate is returned with ``converged=False``.
  """
  grid = data.grid
  bounds = data.bounds
  u = Field.of(grid, bounds.sigma1.values)
  objective_history: list[float] = []
  residual_history: list[float] = []
  converged = False
  target = u
  iteration = 0

  for iteration in range(1, cfg.max_iter + 1):
    p = forward_solve(data, u, forward_cfg)
    q = adjoint_solve(data, u)
    psi = objective(u, p, grid)
    target = switching_rule(q, bounds, u, cfg.switch_band)
    relaxed = bounds.clamp((1.0 - cfg.relaxation) * u.values + cfg.relaxation * target.values)
    residual = control_norm(grid, relaxed - u.values)
    objective_history.append(psi)
    residual_history.append(residual)
    logger.debug(f"sweep iteration {iteration}: psi={psi:.12g} residual={residual:.3e}")
    u = Field.of(grid, relaxed)
    if residual < cfg.u_tol:
      converged = True
      break

  u_star = target if converged else u
  p_star = forward_solve(data, u_star, forward_cfg)
  q_star = adjoint_solve(data, u_star)
  psi_star = objective(u_star, p_star, grid)
  logger.info(f"sweep {'converged' if converged else 'stopped'} after {iteration} iterations, psi*={psi_star:.12g}")
  return SweepResult(
    u_star=u_star,
    p_star=p_star,
    q=q_star,
    objective_history=objective_history,
    residual_history=residual_history,
    converged=converged,
    iterations=iteration,
    psi_star=psi_star,
  )


def _free_cells(data: ProblemData) -> np.ndarray:
  grid = data.grid
  s1 = data.bounds.sigma1.values
  s2 = data.bounds.sigma2.values
  mask = np.zeros(grid.shape, dtype=bool)
  mask[: grid.n_a, : grid.n_t] = True
  mask &= s1 < s2
  return np.flatnonzero(mask)


def brute_force_optimum(
  data: ProblemData,
  max_cells: int = MAX_ENUMERATED_CELLS,
  forward_cfg: ForwardConfig = ForwardConfig(),
  max_workers: Optional[int] = None,
  max_ties: int = MAX_LISTED_TIES,
) -> OracleResult:
  """Enumerate every pure bang-bang control on the cells where ς₁ < ς₂.

  The lexicographically first minimizer wins ties (choice 0 = ς₁ sorts first).
  The first *max_ties* tied controls are listed; ``ties_truncated`` flags the rest.

  Raises:
      EnumerationLimitError: more than *max_cells* free control cells
  """
  grid = data.grid
  free = _free_cells(data)
  if free.size > max_cells:
    raise EnumerationLimitError(f"{free.size} free control cells exceed the enumeration cap of {max_cells}")

  s1 = data.bounds.sigma1.values
  s2 = data.bounds.sigma2.values
  choices = list(itertools.product((0, 1), repeat=int(free.size)))

  def evaluate(choice: tuple[int, ...]) -> float:
    u = s1.copy()
    picked = free[np.asarray(choice, dtype=bool)] if choice else free[:0]
    u.flat[picked] = s2.flat[picked]
    control = Field.of(grid, u)
    return objective(control, forward_solve(data, control, forward_cfg), grid)

  if max_workers and max_workers > 1:
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
      values = list(pool.map(evaluate, choices))
  else:
    values = [evaluate(choice) for choice in choices]

  best = 0
  for index, value in enumerate(values):
    if value < values[best]:
      best = index
  psi_best = values[best]
  tol = TIE_RTOL * max(1.0, abs(psi_best))
  tie_indices = [i for i, value in enumerate(values) if value <= psi_best + tol]

  u_best = s1.copy()
  chosen = free[np.asarray(choices[best], dtype=bool)] if free.size else free
  u_best.flat[chosen] = s2.flat[chosen]
  logger.info(f"oracle: {len(choices)} candidates, psi_best={psi_best:.12g}, ties={len(tie_indices)}")
  return OracleResult(
    u_best=Field.of(grid, u_best),
    psi_best=psi_best,
    candidates=len(choices),
    tie_count=len(tie_indices),
    ties=[list(choices[i]) for i in tie_indices[:max_ties]],
    ties_truncated=len(tie_indices) > max_ties,
  )


def variational_check(
  data: ProblemData,
  u: Field,
  v: Field,
  eps: float,
  forward_cfg: ForwardConfig = ForwardConfig(),
) -> VariationalReport:
  """Compare the finite-difference derivative of Ψ along *v* with Σ v·p·(q+1).

  Raises:
      InadmissibleDirectionError: u + eps·v leaves [ς₁, ς₂], or v points out
          of the set where u sits on a bound
  """
  grid = data.grid
  s1 = data.bounds.sigma1.values
  s2 = data.bounds.sigma2.values
  moved = u.values + eps * v.values
  bad = ((u.values == s2) & (v.values > 0)) | ((u.values == s1) & (v.values < 0)) | (moved < s1) | (moved > s2)
  if np.any(bad):
    raise InadmissibleDirectionError([tuple(int(i) for i in node) for node in np.argwhere(bad)])

  p = forward_solve(data, u, forward_cfg)
  psi = objective(u, p, grid)
  moved_field = Field.of(grid, moved)
  psi_moved = objective(moved_field, forward_solve(data, moved_field, forward_cfg), grid)
  q = adjoint_solve(data, u, AdjointConfig())

  fd = (psi_moved - psi) / eps
  expression = _cell_sum(grid, v.values * p.values * (q.values + 1.0))
  scale = _cell_sum(grid, np.abs(v.values) * p.values)
  return VariationalReport(fd_derivative=fd, adjoint_expression=expression, gap=abs(fd - expression), eps=eps, scale=scale)


def supersolution_data(data: ProblemData) -> ProblemData:
  """Data of p̄: u = 0, μ = 0, β = max β, p0 = max p0 (dominates every p^u)."""
  rates = data.rates.model_copy(
    update={"mu": MortalityPreset(), "beta": FertilityPreset(b0=float(np.max(data.fertility())))}
  )
  p0 = np.full_like(data.p0, float(np.max(data.p0)))
  return data.with_updates(rates=rates, p0=p0, mu_table=None)


def objective_bounds(data: ProblemData, forward_cfg: ForwardConfig = ForwardConfig()) -> tuple[float, float]:
  """A-priori bracket Σ ς₁·p̄ ≤ Ψ(u) ≤ 0 for every admissible u."""
  bar = supersolution_data(data)
  p_bar = forward_solve(bar, Field.zeros(data.grid), forward_cfg)
  return objective(data.bounds.sigma1, p_bar, data.grid), 0.0


def degenerate_freedom(
  data: ProblemData,
  u: Field,
  seed: int = 0,
  draws: int = 5,
  floor: float = POSITIVITY_FLOOR,
  forward_cfg: ForwardConfig = ForwardConfig(),
) -> float:
  """Largest |ΔΨ| when u is redrawn inside the bounds where p^u ≤ floor."""
  grid = data.grid
  rng = np.random.default_rng(seed)
  p = forward_solve(data, u, forward_cfg)
  psi = objective(u, p, grid)
  region = p.values <= floor
  s1 = data.bounds.sigma1.values
  s2 = data.bounds.sigma2.values
  worst = 0.0
  for _ in range(draws):
    redrawn = np.where(region, s1 + rng.random(grid.shape) * (s2 - s1), u.values)
    control = Field.of(grid, redrawn)
    worst = max(worst, abs(objective(control, forward_solve(data, control, forward_cfg), grid) - psi))
  return worst
