# Copyright 2025 CNOE
# SPDX-License-Identifier: Apache-2.0

"""
Backward solver for the adjoint state q:

  Dq + δΔq − μq + β(a)∫K(x,s) q(0,t,s) ds = −u*q − u*
  q(a†, t, x) = 0,  q(a, T, x) = 0,  periodic in x.

Marching from level n+1 down to n along reversed characteristics, with
r = μ_i − u*(i,n):

  q½(i) = e^{−r·dt} q(i+1, n+1) + u*(i,n)·dt·exprel(−r·dt) + β_i·(W q(0, n+1))·dt
  q(·, n) = (I − δ·dt·L)^{-1} q½

The reaction/source part is exact for constant coefficients. The kernel term
uses the same window as the birth integral, untransposed, and is lagged to
the level already computed.
"""

from __future__ import annotations

import logging

import numpy as np
from pydantic import BaseModel, ConfigDict
from scipy.special import exprel

from plasticity_control.exceptions import SolverDivergenceError
from plasticity_control.forward import circulant_diffusion
from plasticity_control.grid import Field
from plasticity_control.model import ProblemData

logger = logging.getLogger("plasticity-control.adjoint")


class AdjointConfig(BaseModel):
  model_config = ConfigDict(frozen=True)

  lag_birth: bool = True
  tol_finite: bool = True


def adjoint_solve(data: ProblemData, u_star: Field, cfg: AdjointConfig = AdjointConfig()) -> Field:
  """Solve the adjoint system for the control *u_star*."""
  if not cfg.lag_birth:
    raise ValueError("only the lagged nonlocal source is implemented")
  grid = data.grid
  mu = data.mortality()
  beta = data.fertility()
  weights = data.weights
  u = u_star.values
  diffusion = circulant_diffusion(grid, float(data.rates.delta))
  dt = grid.dt
  ages = slice(0, grid.n_a)

  q = np.zeros(grid.shape)
  for n in range(grid.n_t - 1, -1, -1):
    rate = mu[ages, n] - u[ages, n]
    newborn = weights @ q[0, n + 1]
    half = (
      np.exp(-rate * dt) * q[1:, n + 1]
      + u[ages, n] * dt * exprel(-rate * dt)
      + beta[ages, None] * newborn[None, :] * dt
    )
    q[ages, n] = diffusion.apply(half)
    if cfg.tol_finite and not np.all(np.isfinite(q[:, n])):
      i, k = np.argwhere(~np.isfinite(q[:, n]))[0]
      raise SolverDivergenceError("adjoint", (int(i), n, int(k)))
  logger.debug(f"adjoint solved: min q = {q.min():.6g}, max q = {q.max():.6g}")
  return Field.of(grid, q)


def switching_indicator(q: Field) -> np.ndarray:
  """Sign of q + 1 at every node: +1 favours ς₁, −1 favours ς₂."""
  return np.sign(q.values + 1.0)
