# Copyright 2025 CNOE
# SPDX-License-Identifier: Apache-2.0

"""
JSON run configuration.

The config file is the single source of model truth; CLI flags only select
behaviour. Validation failures are reported with the dotted JSON path of the
offending key, e.g. ``bounds.sigma2``.
"""

from __future__ import annotations

import hashlib
import json
import logging
from pathlib import Path
from typing import Literal, Optional, Union

import numpy as np
import pydantic
from pydantic import BaseModel, ConfigDict, ValidationError

from plasticity_control.constants import (
  DEFAULT_EPS_FD,
  DEFAULT_RELAXATION,
  DEFAULT_SWEEP_MAX_ITER,
  DEFAULT_SWITCH_BAND,
  DEFAULT_U_TOL,
  X_PERIOD,
)
from plasticity_control.control import SweepConfig
from plasticity_control.exceptions import ConfigError
from plasticity_control.forward import ForwardConfig
from plasticity_control.grid import Field, Grid, make_grid
from plasticity_control.model import ControlBounds, FertilityPreset, MortalityPreset, ProblemData, VitalRates
from plasticity_control.utils.io import read_csv
from plasticity_control.utils.logging import log_config_param

logger = logging.getLogger("plasticity-control.config")

P0_HEADER = ("a", "x", "value")

# SweepConfig field names that differ from the config keys.
_SWEEP_KEYS = {"relaxation": "omega"}


class InitialDatum(BaseModel):
  """p0(a, x): constant, a cosine profile in x, or a CSV table over (a_i, x_k)."""

  model_config = ConfigDict(extra="forbid")

  type: Literal["constant", "cosine", "csv"] = "constant"
  value: float = 1.0
  mean: float = 1.0
  amplitude: float = 0.0
  mode: int = pydantic.Field(default=1, ge=0, description="Fourier mode of the cosine profile")
  path: Optional[str] = None

  def build(self, grid: Grid, base_dir: Path) -> np.ndarray:
    shape = (grid.n_a + 1, grid.n_x)
    if self.type == "constant":
      return np.full(shape, self.value)
    if self.type == "cosine":
      profile = self.mean + self.amplitude * np.cos(2.0 * np.pi * self.mode * grid.centers / X_PERIOD)
      return np.broadcast_to(profile, shape).copy()
    if self.path is None:
      raise ConfigError("p0.path", "a csv initial datum needs a path")
    table = read_csv(base_dir / self.path, P0_HEADER)
    if table.shape[0] != shape[0] * shape[1]:
      raise ConfigError("p0.path", f"{table.shape[0]} rows, grid needs {shape[0] * shape[1]}")
    return table[:, 2].reshape(shape)


class SourceTerm(BaseModel):
  model_config = ConfigDict(extra="forbid")

  type: Literal["zero", "constant", "csv"] = "zero"
  value: float = 0.0
  path: Optional[str] = None

  def build(self, grid: Grid, base_dir: Path) -> Optional[Field]:
    if self.type == "zero":
      return None
    if self.type == "constant":
      return Field.full(grid, self.value)
    if self.path is None:
      raise ConfigError("f.path", "a csv source needs a path")
    return Field.from_csv(grid, base_dir / self.path)


class BoundsSection(BaseModel):
  """ς₁ and ς₂, each a number or the path of a Field CSV."""

  model_config = ConfigDict(extra="forbid")

  sigma1: Union[float, str] = -1.0
  sigma2: Union[float, str] = 0.0

  def build(self, grid: Grid, base_dir: Path) -> ControlBounds:
    def one(value: Union[float, str]) -> Field:
      if isinstance(value, str):
        return Field.from_csv(grid, base_dir / value)
      return Field.full(grid, value)

    return ControlBounds(sigma1=one(self.sigma1), sigma2=one(self.sigma2))


class SweepSection(BaseModel):
  model_config = ConfigDict(extra="forbid")

  omega: float = DEFAULT_RELAXATION
  max_iter: int = DEFAULT_SWEEP_MAX_ITER
  u_tol: float = DEFAULT_U_TOL
  switch_band: float = DEFAULT_SWITCH_BAND
  eps_fd: float = DEFAULT_EPS_FD

  def to_config(self) -> SweepConfig:
    return SweepConfig(
      relaxation=self.omega,
      max_iter=self.max_iter,
      u_tol=self.u_tol,
      switch_band=self.switch_band,
      eps_fd=self.eps_fd,
    )


class VerifySection(BaseModel):
  model_config = ConfigDict(extra="forbid")

  trials: int = pydantic.Field(default=20, ge=1, description="randomized trials per suite")
  seed: int = 0


class RunConfig(BaseModel):
  """Resolved run configuration."""

  model_config = ConfigDict(extra="forbid")

  a_max: float = pydantic.Field(description="age horizon a†")
  t_max: float = pydantic.Field(description="time horizon T")
  n_a: int = pydantic.Field(description="age cells; da = dt = a_max / n_a")
  n_x: int = pydantic.Field(description="periodic x cells over [0, 24)")
  delta: float = pydantic.Field(default=0.0, description="diffusion coefficient")
  eta: float = pydantic.Field(default=6.0, description="kernel half-width in hours")
  birth_wrap: bool = False
  mu: MortalityPreset = MortalityPreset()
  beta: FertilityPreset = FertilityPreset()
  p0: InitialDatum = InitialDatum()
  f: SourceTerm = SourceTerm()
  bounds: BoundsSection = BoundsSection()
  forward: ForwardConfig = ForwardConfig()
  sweep: SweepSection = SweepSection()
  verify: VerifySection = VerifySection()

  def sweep_config(self) -> SweepConfig:
    try:
      return self.sweep.to_config()
    except ValidationError as exc:
      raise _config_error(exc, prefix="sweep") from exc


def _config_error(exc: ValidationError, prefix: str = "") -> ConfigError:
  error = exc.errors()[0]
  loc = [str(part) for part in error["loc"] if not isinstance(part, int)]
  # union members show up as extra path parts
  loc = [part for part in loc if part not in ("float", "str")]
  if prefix:
    loc = [prefix, *(_SWEEP_KEYS.get(part, part) for part in loc)]
  return ConfigError(".".join(loc) or "<root>", error["msg"])


def parse_config(raw: dict) -> RunConfig:
  try:
    return RunConfig.model_validate(raw)
  except ValidationError as exc:
    raise _config_error(exc) from exc


def load_config(path: str | Path) -> RunConfig:
  """Read and validate a JSON config.

  Raises:
      ConfigError: unreadable file, malformed JSON or an invalid key
  """
  path = Path(path)
  try:
    raw = json.loads(path.read_text(encoding="utf-8"))
  except OSError as exc:
    raise ConfigError("<file>", f"cannot read {path}: {exc}") from exc
  except json.JSONDecodeError as exc:
    raise ConfigError("<root>", f"malformed JSON at line {exc.lineno}: {exc.msg}") from exc
  if not isinstance(raw, dict):
    raise ConfigError("<root>", "config must be a JSON object")
  return parse_config(raw)


def config_hash(config: RunConfig) -> str:
  """SHA-256 of the canonical JSON form of the resolved config."""
  canonical = json.dumps(config.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
  return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def build_problem(config: RunConfig, base_dir: str | Path = ".") -> ProblemData:
  """Grid, rates, initial datum, bounds and source from a validated config.

  Raises:
      GridError: the lattice cannot be aligned
      ConfigError: a CSV input does not fit the grid
  """
  base_dir = Path(base_dir)
  grid = make_grid(config.a_max, config.t_max, config.n_a, config.n_x)
  for param in ("a_max", "t_max", "n_a", "n_x"):
    log_config_param(logger, "grid", param, getattr(config, param))
  log_config_param(logger, "grid", "n_t", grid.n_t)
  rates = VitalRates(mu=config.mu, beta=config.beta, delta=config.delta, eta=config.eta, birth_wrap=config.birth_wrap)
  for param in ("delta", "eta", "birth_wrap"):
    log_config_param(logger, "rates", param, getattr(rates, param))

  try:
    bounds = config.bounds.build(grid, base_dir)
  except (ValueError, OSError) as exc:
    raise ConfigError("bounds", str(exc)) from exc
  try:
    f = config.f.build(grid, base_dir)
  except (ValueError, OSError) as exc:
    raise ConfigError("f", str(exc)) from exc
  try:
    p0 = config.p0.build(grid, base_dir)
  except (ValueError, OSError) as exc:
    raise ConfigError("p0", str(exc)) from exc
  return ProblemData(grid=grid, rates=rates, p0=p0, bounds=bounds, f=f)


def config_schema() -> dict:
  return RunConfig.model_json_schema()
