# Copyright 2025 CNOE
# SPDX-License-Identifier: Apache-2.0

"""
Vital rates, the newborn adaptation kernel, control bounds and the checks
of the model hypotheses.

  J1  μ ≥ 0 with ∫μ = +∞ near a†   (handled through the truncation μ_N = min(μ, N))
  J2  β ≥ 0 and bounded
  J3  p0 ≥ 0
  U   ς₁ ≤ ς₂ ≤ 0

Validation reports name violated hypotheses by these labels.
"""

from __future__ import annotations

import logging
from functools import lru_cache
from typing import Any, Literal, Optional

import numpy as np
import pydantic
from pydantic import BaseModel, ConfigDict, model_validator

from plasticity_control.constants import X_PERIOD
from plasticity_control.exceptions import ConfigError
from plasticity_control.grid import Field, Grid

logger = logging.getLogger("plasticity-control.model")


def kernel_eval(x: float | np.ndarray, s: float | np.ndarray) -> float | np.ndarray:
  """K(x, s) = (x−s)² e^{−(x−s)²} for s in (0, 24), else 0."""
  x = np.asarray(x, dtype=float)
  s = np.asarray(s, dtype=float)
  r2 = (x - s) ** 2
  value = np.where((s > 0.0) & (s < X_PERIOD), r2 * np.exp(-r2), 0.0)
  return float(value) if value.ndim == 0 else value


def _displacement_kernel(d: np.ndarray) -> np.ndarray:
  r2 = d * d
  return r2 * np.exp(-r2)


def kernel_weights(grid: Grid, eta: float, wrap: bool = False) -> np.ndarray:
  """Midpoint weights W[k, l] with Σ_l W[k, l] g(s_l) ≈ ∫_{x_k−η}^{x_k+η} K(x_k, s) g(s) ds.

  Each s-cell contributes K(x_k, s_l) times the length of its overlap with
  the window. Without ``wrap`` the window is cut at 0 and 24 (K vanishes
  outside (0, 24)); with ``wrap`` it continues periodically.
  """
  if not (0.0 < eta <= X_PERIOD):
    raise ConfigError("eta", f"kernel half-width must lie in (0, 24], got {eta}")

  centers = grid.centers
  half = 0.5 * grid.dx
  d = centers[None, :] - centers[:, None]
  shifts = (-X_PERIOD, 0.0, X_PERIOD) if wrap else (0.0,)
  weights = np.zeros((grid.n_x, grid.n_x))
  for shift in shifts:
    ds = d + shift
    overlap = np.minimum(ds + half, eta) - np.maximum(ds - half, -eta)
    weights += _displacement_kernel(ds) * np.clip(overlap, 0.0, None)
  return weights


@lru_cache(maxsize=32)
def _cached_weights(grid: Grid, eta: float, wrap: bool) -> np.ndarray:
  weights = kernel_weights(grid, eta, wrap=wrap)
  weights.setflags(write=False)
  return weights


class MortalityPreset(BaseModel):
  """μ(a): constant m0, or blow-up m0 + c/(a† − a), truncated at N."""

  model_config = ConfigDict(frozen=True, extra="forbid")

  type: Literal["constant", "blowup"] = "constant"
  m0: float = 0.0
  c: float = 0.0
  N: Optional[float] = pydantic.Field(default=None, description="truncation level of μ")

  @model_validator(mode="after")
  def _blowup_needs_truncation(self) -> "MortalityPreset":
    if self.type == "blowup" and self.N is None:
      raise ValueError("the blowup mortality preset needs a truncation level N")
    return self

  def raw(self, ages: np.ndarray, a_max: float) -> np.ndarray:
    if self.type == "constant":
      return np.full_like(ages, self.m0, dtype=float)
    with np.errstate(divide="ignore"):
      return self.m0 + self.c / np.maximum(a_max - ages, 0.0)

  def truncated(self, ages: np.ndarray, a_max: float) -> np.ndarray:
    mu = self.raw(ages, a_max)
    if self.N is None:
      return mu
    return np.minimum(mu, self.N)


class FertilityPreset(BaseModel):
  """β(a): constant b0, or a smooth bump of height b0 supported on (a_lo, a_hi)."""

  model_config = ConfigDict(frozen=True, extra="forbid")

  type: Literal["constant", "bump"] = "constant"
  b0: float = 0.0
  a_lo: float = 0.0
  a_hi: float = 1.0

  @model_validator(mode="after")
  def _check_support(self) -> "FertilityPreset":
    if self.type == "bump" and not self.a_hi > self.a_lo:
      raise ValueError("bump support needs a_hi > a_lo")
    return self

  def __call__(self, ages: np.ndarray) -> np.ndarray:
    if self.type == "constant":
      return np.full_like(ages, self.b0, dtype=float)
    s = (2.0 * ages - self.a_lo - self.a_hi) / (self.a_hi - self.a_lo)
    inside = np.abs(s) < 1.0
    out = np.zeros_like(ages, dtype=float)
    out[inside] = self.b0 * np.exp(1.0 - 1.0 / (1.0 - s[inside] ** 2))
    return out


class VitalRates(BaseModel):
  model_config = ConfigDict(frozen=True)

  mu: MortalityPreset = MortalityPreset()
  beta: FertilityPreset = FertilityPreset()
  delta: float = pydantic.Field(default=0.0, description="diffusion coefficient in x")
  eta: float = pydantic.Field(default=6.0, description="kernel half-width (hours)")
  birth_wrap: bool = pydantic.Field(default=False, description="wrap the newborn window across midnight")


class ControlBounds(BaseModel):
  """Admissible set U = {ς₁ ≤ u ≤ ς₂}."""

  model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

  sigma1: Field
  sigma2: Field

  @classmethod
  def constant(cls, grid: Grid, sigma1: float, sigma2: float) -> "ControlBounds":
    return cls(sigma1=Field.full(grid, sigma1), sigma2=Field.full(grid, sigma2))

  def contains(self, u: np.ndarray) -> bool:
    return bool(np.all(u >= self.sigma1.values) and np.all(u <= self.sigma2.values))

  def clamp(self, u: np.ndarray) -> np.ndarray:
    return np.clip(u, self.sigma1.values, self.sigma2.values)


class ProblemData(BaseModel):
  """Everything a forward, adjoint or sweep run needs besides the control."""

  model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

  grid: Grid
  rates: VitalRates
  p0: np.ndarray = pydantic.Field(description="initial datum p0(a_i, x_k), shape (n_a+1, n_x)")
  bounds: ControlBounds
  f: Optional[Field] = None
  mu_table: Optional[Field] = pydantic.Field(default=None, description="tabulated μ(a,t,x) overriding the preset")

  @model_validator(mode="after")
  def _check_shapes(self) -> "ProblemData":
    expected = (self.grid.n_a + 1, self.grid.n_x)
    if self.p0.shape != expected:
      raise ValueError(f"p0 shape {self.p0.shape} does not match {expected}")
    self.p0.setflags(write=False)
    for name, fld in (("f", self.f), ("mu_table", self.mu_table), ("bounds.sigma1", self.bounds.sigma1)):
      if fld is not None and fld.grid != self.grid:
        raise ValueError(f"{name} lives on a different grid")
    return self

  def with_updates(self, **changes: Any) -> "ProblemData":
    return self.model_copy(update=changes)

  @property
  def weights(self) -> np.ndarray:
    return _cached_weights(self.grid, self.rates.eta, self.rates.birth_wrap)

  def mortality(self) -> np.ndarray:
    """Truncated μ on every node, shape (n_a+1, n_t+1, n_x)."""
    if self.mu_table is not None:
      return self.mu_table.values
    mu = self.rates.mu.truncated(self.grid.ages, self.grid.a_max)
    return np.broadcast_to(mu[:, None, None], self.grid.shape)

  def fertility(self) -> np.ndarray:
    return self.rates.beta(self.grid.ages)

  def source(self) -> np.ndarray:
    if self.f is None:
      return np.zeros(self.grid.shape)
    return self.f.values


class Violation(BaseModel):
  hypothesis: str
  key: str
  message: str
  node: Optional[tuple[int, ...]] = None


class ValidationReport(BaseModel):
  violations: list[Violation] = []
  notes: list[str] = []

  @property
  def ok(self) -> bool:
    return not self.violations

  def names(self) -> list[str]:
    return [v.hypothesis for v in self.violations]


def _first_node(mask: np.ndarray) -> tuple[int, ...]:
  return tuple(int(i) for i in np.argwhere(mask)[0])


def validate_params(data: ProblemData) -> ValidationReport:
  """Check the vital-rate hypotheses, the sign of f and the admissible set; never raises."""
  report = ValidationReport()
  grid = data.grid
  rates = data.rates

  def flag(hypothesis: str, key: str, message: str, mask: np.ndarray | None = None) -> None:
    node = _first_node(mask) if mask is not None else None
    report.violations.append(Violation(hypothesis=hypothesis, key=key, message=message, node=node))

  mu = data.mortality()
  if np.any(~np.isfinite(mu)):
    flag("J1", "mu", "mortality is not finite after truncation", ~np.isfinite(mu))
  elif np.any(mu < 0):
    flag("J1", "mu", "mortality must be nonnegative", mu < 0)

  if data.mu_table is None:
    if rates.mu.type == "constant":
      report.notes.append("constant mortality does not make the integral of mu diverge; the age horizon a† closes the lattice")
    else:
      raw = rates.mu.raw(grid.ages, grid.a_max)
      active = raw > rates.mu.N
      if np.any(active):
        first_age = float(grid.ages[np.argmax(active)])
        report.notes.append(f"truncation mu_N = min(mu, {rates.mu.N:g}) is active for a >= {first_age:.6g}")

  beta = data.fertility()
  if np.any(~np.isfinite(beta)):
    flag("J2", "beta", "fertility must be bounded", ~np.isfinite(beta))
  elif np.any(beta < 0):
    flag("J2", "beta", "fertility must be nonnegative", beta < 0)

  if np.any(~np.isfinite(data.p0)) or np.any(data.p0 < 0):
    flag("J3", "p0", "initial datum must be finite and nonnegative", ~(np.isfinite(data.p0) & (data.p0 >= 0)))

  if data.f is not None and np.any(data.f.values < 0):
    flag("source", "f", "source term must be nonnegative", data.f.values < 0)

  s1 = data.bounds.sigma1.values
  s2 = data.bounds.sigma2.values
  if np.any(s2 > 0):
    flag("U", "bounds.sigma2", "upper control bound must be <= 0", s2 > 0)
  if np.any(s1 > s2):
    flag("U", "bounds.sigma1", "lower control bound exceeds the upper bound", s1 > s2)

  if rates.delta < 0:
    flag("diffusion", "delta", f"diffusion coefficient must be >= 0, got {rates.delta}")
  if not (0.0 < rates.eta <= X_PERIOD):
    flag("kernel", "eta", f"kernel half-width must lie in (0, 24], got {rates.eta}")

  for violation in report.violations:
    logger.debug(f"validation: {violation.hypothesis} at {violation.key}: {violation.message}")
  return report
