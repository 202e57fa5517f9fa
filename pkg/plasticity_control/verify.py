# Copyright 2025 CNOE
# SPDX-License-Identifier: Apache-2.0

"""
Executable property suites: comparison ordering, energy and integral
inequality bounds, the periodic eigenbasis of the diffusion step, and the
supersolution bracket.

Comparison-type suites use zero tolerance. Every sub-step of the forward
scheme is a nonnegative monotone map, so any violation is a bug.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from typing import Iterable, Optional, Sequence

import numpy as np
import pydantic
import scipy.linalg
from pydantic import BaseModel
from scipy.stats import qmc

from plasticity_control.constants import EIGEN_MIN_X_CELLS, ENERGY_SLACK, GRONWALL_RTOL, X_PERIOD
from plasticity_control.control import supersolution_data
from plasticity_control.exceptions import ConfigError, GridError, GronwallPremiseError, OrderingError
from plasticity_control.forward import circulant_diffusion, forward_solve, forward_solve_prescribed
from plasticity_control.grid import Field, Grid
from plasticity_control.model import FertilityPreset, MortalityPreset, ProblemData

logger = logging.getLogger("plasticity-control.verify")

SUITES = ("comparison", "energy", "gronwall", "eigen", "boundary", "truncation", "supersolution", "folding")

# Damping factors and eigenvalues are compared to rounding.
_EIGEN_RTOL = 1e-9


class PropertyReport(BaseModel):
  name: str
  passed: bool
  worst_violation: float
  tolerance: float = 0.0
  location: Optional[tuple[int, ...]] = None
  details: str = ""
  seed: Optional[int] = None
  metrics: dict[str, float] = pydantic.Field(default_factory=dict)


def _node(index: np.ndarray) -> tuple[int, ...]:
  return tuple(int(i) for i in index)


def _first_disorder(lower: np.ndarray, upper: np.ndarray) -> Optional[tuple[int, ...]]:
  bad = lower > upper
  if not np.any(bad):
    return None
  return _node(np.argwhere(bad)[0])


def _ordering_worst(p1: np.ndarray, p2: np.ndarray) -> tuple[float, Optional[tuple[int, ...]]]:
  """max(p1 − p2, −p1) with its node; 0 and None when ordered."""
  gap = np.maximum(p1 - p2, -p1)
  worst = float(gap.max())
  if worst <= 0.0:
    return 0.0, None
  return worst, _node(np.unravel_index(int(np.argmax(gap)), gap.shape))


def _check_pair(d1: ProblemData, d2: ProblemData) -> None:
  if d1.grid != d2.grid:
    raise OrderingError("grid", ())
  checks = (
    ("mu", d2.mortality(), d1.mortality()),
    ("f", d1.source(), d2.source()),
    ("beta", d1.fertility(), d2.fertility()),
    ("p0", d1.p0, d2.p0),
  )
  for quantity, lower, upper in checks:
    node = _first_disorder(np.asarray(lower), np.asarray(upper))
    if node is not None:
      raise OrderingError(quantity, node)


def comparison_suite(pairs: Sequence[tuple[ProblemData, ProblemData]], u: Field, name: str = "comparison") -> PropertyReport:
  """Check 0 ≤ p₁ ≤ p₂ node-wise for every ordered pair.

  Raises:
      OrderingError: a pair is not ordered (μ₁ ≥ μ₂, f₁ ≤ f₂, β₁ ≤ β₂, p0₁ ≤ p0₂)
  """
  for d1, d2 in pairs:
    _check_pair(d1, d2)

  worst = 0.0
  location = None
  for d1, d2 in pairs:
    p1 = forward_solve(d1, u).values
    p2 = forward_solve(d2, u).values
    gap, node = _ordering_worst(p1, p2)
    if gap > worst:
      worst, location = gap, node
  logger.info(f"{name}: {len(pairs)} pairs, worst violation {worst:.3e}")
  return PropertyReport(
    name=name,
    passed=worst <= 0.0,
    worst_violation=worst,
    location=location,
    details=f"{len(pairs)} ordered pairs",
  )


def folding_suite(data: ProblemData, u: Field) -> PropertyReport:
  """Control u versus mortality μ − u with no control: the states must be bit-identical."""
  folded = data.with_updates(mu_table=Field.of(data.grid, data.mortality() - u.values))
  p_control = forward_solve(data, u).values
  p_folded = forward_solve(folded, Field.zeros(data.grid)).values
  diff = np.abs(p_control - p_folded)
  worst = float(diff.max())
  location = _node(np.unravel_index(int(np.argmax(diff)), diff.shape)) if worst > 0 else None
  return PropertyReport(
    name="folding",
    passed=worst == 0.0,
    worst_violation=worst,
    location=location,
    details="u as control vs. mu - u as mortality",
  )


def boundary_comparison_suite(data: ProblemData, b1: np.ndarray, b2: np.ndarray, u: Optional[Field] = None) -> PropertyReport:
  """Prescribed newborns 0 ≤ b₁ ≤ b₂ give 0 ≤ p_{b₁} ≤ p_{b₂}.

  Raises:
      OrderingError: the boundaries are negative or not ordered
  """
  b1 = np.asarray(b1, dtype=float)
  b2 = np.asarray(b2, dtype=float)
  node = _first_disorder(np.zeros_like(b1), b1) or _first_disorder(b1, b2)
  if node is not None:
    raise OrderingError("b", node)
  u = Field.zeros(data.grid) if u is None else u
  p1 = forward_solve_prescribed(data, u, b1).values
  p2 = forward_solve_prescribed(data, u, b2).values
  worst, location = _ordering_worst(p1, p2)
  return PropertyReport(name="boundary", passed=worst <= 0.0, worst_violation=worst, location=location)


def truncation_suite(data: ProblemData, levels: Sequence[float], u: Optional[Field] = None) -> PropertyReport:
  """Raising the truncation level N of a blow-up mortality lowers the state node-wise."""
  preset = data.rates.mu
  if preset.type != "blowup":
    raise ConfigError("mu", "the truncation suite needs the blowup mortality preset")
  levels = sorted(float(level) for level in levels)
  variants = [
    data.with_updates(rates=data.rates.model_copy(update={"mu": preset.model_copy(update={"N": level})}), mu_table=None)
    for level in levels
  ]
  # higher N means larger mortality, so the higher-N run is the lower state
  pairs = [(variants[j + 1], variants[j]) for j in range(len(variants) - 1)]
  report = comparison_suite(pairs, Field.zeros(data.grid) if u is None else u, name="truncation")
  return report.model_copy(update={"details": f"N levels {levels}"})


def supersolution_suite(data: ProblemData, u: Field) -> PropertyReport:
  """0 ≤ p^u ≤ p̄, the state for u = 0, μ = 0, β = max β, p0 = max p0."""
  p = forward_solve(data, u).values
  p_bar = forward_solve(supersolution_data(data), Field.zeros(data.grid)).values
  worst, location = _ordering_worst(p, p_bar)
  return PropertyReport(name="supersolution", passed=worst <= 0.0, worst_violation=worst, location=location)


def _cell_norm2(grid: Grid, values: np.ndarray) -> float:
  return float(np.sum(values[: grid.n_a, : grid.n_t] ** 2)) * grid.cell_weight


def energy_bound_suite(data: ProblemData, b: np.ndarray, slack: float = ENERGY_SLACK) -> PropertyReport:
  """‖p‖² ≤ slack·e^T·(‖p0‖² + ‖b‖² + ‖f − μp‖²) for the prescribed-boundary state with u = 0.

  Norms: cells with da·dt·dx for p and f − μp, da·dx for p0, dt·dx for the
  boundary rows n = 1..n_t.
  """
  grid = data.grid
  b = np.asarray(b, dtype=float)
  p = forward_solve_prescribed(data, Field.zeros(grid), b).values
  lhs = _cell_norm2(grid, p)
  p0_norm = float(np.sum(data.p0[: grid.n_a] ** 2)) * grid.da * grid.dx
  b_norm = float(np.sum(b[1:] ** 2)) * grid.dt * grid.dx
  source_norm = _cell_norm2(grid, data.source() - data.mortality() * p)
  rhs = math.exp(grid.t_max) * (p0_norm + b_norm + source_norm)
  ratio = lhs / rhs if rhs > 0 else (0.0 if lhs == 0 else math.inf)
  return PropertyReport(
    name="energy",
    passed=ratio <= slack,
    worst_violation=max(ratio - slack, 0.0),
    tolerance=slack,
    details=f"||p||^2 = {lhs:.6g}, e^T(...) = {rhs:.6g}",
    metrics={"ratio": ratio, "lhs": lhs, "rhs": rhs},
  )


def gronwall_check(x: Sequence[float], psi: Sequence[float], M: float, dt: float) -> PropertyReport:
  """Discrete integral inequality: x_n ≤ M + Σ_{m<n} ψ_m x_m dt implies x_n ≤ M·exp(Σ_{m<n} ψ_m dt).

  Raises:
      GronwallPremiseError: the premise fails at some n
  """
  x = np.asarray(x, dtype=float)
  psi = np.asarray(psi, dtype=float)
  if np.any(psi < 0):
    raise ValueError("psi must be nonnegative")
  weighted = np.concatenate([[0.0], np.cumsum(psi[: len(x) - 1] * x[: len(x) - 1] * dt)])
  premise = M + weighted
  for n in range(len(x)):
    if x[n] > premise[n] * (1.0 + GRONWALL_RTOL) + GRONWALL_RTOL * abs(M):
      raise GronwallPremiseError(n, float(x[n]), float(premise[n]))

  exponent = np.concatenate([[0.0], np.cumsum(psi[: len(x) - 1] * dt)])
  bound = M * np.exp(exponent) * (1.0 + GRONWALL_RTOL)
  excess = x - bound
  worst = float(max(excess.max(), 0.0))
  location = (int(np.argmax(excess)),) if worst > 0 else None
  return PropertyReport(
    name="gronwall",
    passed=worst <= 0.0,
    worst_violation=worst,
    tolerance=GRONWALL_RTOL,
    location=location,
    details=f"{len(x)} samples, M = {M:.6g}",
  )


def gronwall_solver_check(data: ProblemData) -> PropertyReport:
  """Instrumented run: x_n = ‖p(·, t_n, ·)‖² with f = 0, b = 0, u = ς₂ and ψ = 2·max(ς₂ − μ, 0)."""
  grid = data.grid
  quiet = data.with_updates(f=None)
  u = data.bounds.sigma2
  p = forward_solve_prescribed(quiet, u, np.zeros((grid.n_t + 1, grid.n_x))).values
  x = np.sum(p[: grid.n_a] ** 2, axis=(0, 2)) * grid.da * grid.dx
  growth = np.maximum(u.values - quiet.mortality(), 0.0)[: grid.n_a]
  psi = 2.0 * growth.max(axis=(0, 2))
  return gronwall_check(x, psi, float(x[0]), grid.dt)


def eigen_oracle(grid: Grid, delta: float = 1.0) -> PropertyReport:
  """Implicit diffusion damps mode j by exactly 1/(1 + δ·dt·λ_j^h).

  Also compares the dense spectrum of −L with 2(1 − cos(2πj/n_x))/dx² and
  reports the gap between λ₁^h and the continuum (π/12)².

  Raises:
      GridError: fewer than 8 x cells
  """
  if grid.n_x < EIGEN_MIN_X_CELLS:
    raise GridError(f"eigen oracle needs n_x >= {EIGEN_MIN_X_CELLS} (got {grid.n_x})")
  diffusion = circulant_diffusion(grid, float(delta))
  n_x = grid.n_x
  k = np.arange(n_x)
  modes = np.arange(n_x // 2 + 1)

  worst = 0.0
  location = None
  for j in modes:
    expected = float(diffusion.damping(j))
    for mode in (np.cos(2.0 * np.pi * j * k / n_x), np.sin(2.0 * np.pi * j * k / n_x)):
      if not np.any(np.abs(mode) > 1e-12):
        continue
      damped = diffusion.apply(mode[None, :])[0]
      err = float(np.max(np.abs(damped - expected * mode)))
      if err > worst:
        worst, location = err, (int(j),)

  column = np.zeros(n_x)
  np.add.at(column, [0, 1, n_x - 1], [2.0, -1.0, -1.0])
  dense = scipy.linalg.eigvalsh(scipy.linalg.circulant(column) / grid.dx**2)
  analytic = np.sort(diffusion.eigenvalue(k))
  scale = max(float(analytic.max()), 1.0)
  spectrum_err = float(np.max(np.abs(np.sort(dense) - analytic))) / scale

  continuum = (2.0 * np.pi / X_PERIOD) ** 2
  continuum_err = abs(float(diffusion.eigenvalue(1)) - continuum) / continuum
  violation = max(worst, spectrum_err)
  return PropertyReport(
    name="eigen",
    passed=violation <= _EIGEN_RTOL,
    worst_violation=violation,
    tolerance=_EIGEN_RTOL,
    location=location,
    details=f"n_x = {n_x}, delta = {delta:g}; lambda_1^h vs (pi/12)^2 relative error {continuum_err:.3e}",
    metrics={"damping_error": worst, "spectrum_error": spectrum_err, "continuum_error": continuum_err},
  )


def _draws(trials: int, dims: int, seed: int) -> np.ndarray:
  return qmc.LatinHypercube(d=dims, seed=seed).random(n=trials)


def randomized_comparison(base: ProblemData, trials: int, seed: int, u: Optional[Field] = None) -> PropertyReport:
  """Latin-hypercube ordered pairs around *base*: μ in [0, 1], β in [0, 0.5], p0 scale in [0, 2], f in [0, 1]."""
  grid = base.grid
  pairs = []
  for row in _draws(trials, 8, seed):
    lo, hi = np.minimum(row[:4], row[4:]), np.maximum(row[:4], row[4:])
    pairs.append((_sample(base, m0=hi[0], b0=0.5 * lo[1], p0=2.0 * lo[2], f=lo[3]),
                  _sample(base, m0=lo[0], b0=0.5 * hi[1], p0=2.0 * hi[2], f=hi[3])))
  report = comparison_suite(pairs, Field.zeros(grid) if u is None else u)
  logger.info(f"randomized comparison: seed={seed}, trials={trials}")
  return report.model_copy(update={"seed": seed, "details": f"{trials} latin-hypercube ordered pairs"})


def _sample(base: ProblemData, m0: float, b0: float, p0: float, f: float) -> ProblemData:
  rates = base.rates.model_copy(update={"mu": MortalityPreset(m0=float(m0)), "beta": FertilityPreset(b0=float(b0))})
  profile = 1.0 + 0.5 * np.cos(2.0 * np.pi * base.grid.centers / X_PERIOD)
  return base.with_updates(
    rates=rates,
    p0=np.broadcast_to(p0 * profile, base.p0.shape).copy(),
    f=Field.full(base.grid, float(f)),
    mu_table=None,
  )


def randomized_energy(base: ProblemData, trials: int, seed: int) -> PropertyReport:
  """Energy bound over Latin-hypercube draws of μ, p0, b and f levels."""
  grid = base.grid
  worst_ratio = 0.0
  reports = []
  rng = np.random.default_rng(seed)
  for row in _draws(trials, 4, seed):
    data = _sample(base, m0=row[0], b0=0.0, p0=2.0 * row[1], f=row[3])
    b = row[2] * rng.random((grid.n_t + 1, grid.n_x))
    report = energy_bound_suite(data, b)
    reports.append(report)
    worst_ratio = max(worst_ratio, report.metrics["ratio"])
  passed = all(r.passed for r in reports)
  logger.info(f"randomized energy: seed={seed}, trials={trials}, worst ratio {worst_ratio:.4f}")
  return PropertyReport(
    name="energy",
    passed=passed,
    worst_violation=max(worst_ratio - ENERGY_SLACK, 0.0),
    tolerance=ENERGY_SLACK,
    details=f"{trials} randomized prescribed-boundary runs",
    seed=seed,
    metrics={"worst_ratio": worst_ratio},
  )


def _suite(name: str, data: ProblemData, seed: int, trials: int) -> PropertyReport:
  grid = data.grid
  if name == "comparison":
    return randomized_comparison(data, trials, seed)
  if name == "energy":
    return randomized_energy(data, trials, seed)
  if name == "gronwall":
    return gronwall_solver_check(data)
  if name == "eigen":
    return eigen_oracle(grid, data.rates.delta if data.rates.delta > 0 else 1.0)
  if name == "boundary":
    rng = np.random.default_rng(seed)
    b2 = rng.random((grid.n_t + 1, grid.n_x))
    report = boundary_comparison_suite(data, 0.5 * b2, b2)
    return report.model_copy(update={"seed": seed})
  if name == "truncation":
    preset = data.rates.mu
    if preset.type != "blowup":
      preset = MortalityPreset(type="blowup", m0=preset.m0, c=1.0, N=10.0)
    base = data.with_updates(rates=data.rates.model_copy(update={"mu": preset}), mu_table=None)
    return truncation_suite(base, [preset.N, 2.0 * preset.N, 4.0 * preset.N])
  if name == "supersolution":
    return supersolution_suite(data, data.bounds.sigma1)
  if name == "folding":
    return folding_suite(data, data.bounds.sigma1)
  raise ValueError(f"unknown suite {name!r}")


def run_suites(
  names: Iterable[str],
  data: ProblemData,
  seed: int = 0,
  trials: int = 20,
  max_workers: Optional[int] = None,
) -> list[PropertyReport]:
  """Run the named suites (``all`` expands to every suite), in parallel when asked."""
  selected: list[str] = []
  for name in names:
    for expanded in (SUITES if name == "all" else (name,)):
      if expanded not in SUITES:
        raise ValueError(f"unknown suite {expanded!r}")
      if expanded not in selected:
        selected.append(expanded)

  def one(name: str) -> PropertyReport:
    return _suite(name, data, seed, trials)

  if max_workers and max_workers > 1:
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
      return list(pool.map(one, selected))
  return [one(name) for name in selected]
