# Copyright 2025 CNOE
# SPDX-License-Identifier: Apache-2.0

"""
Desk-scale acceptance runs. Each entry of ``acceptance_dataset.yaml`` names a
check below and carries its thresholds; ``python -m`` on this file reruns all
of them and rewrites the README table.
"""

import argparse
import math
import time
from datetime import datetime
from pathlib import Path

import numpy as np
import pytest
import yaml
from tabulate import tabulate

from plasticity_control.adjoint import adjoint_solve
from plasticity_control.constants import X_PERIOD
from plasticity_control.control import brute_force_optimum, degenerate_freedom, objective, sweep, switching_rule, variational_check
from plasticity_control.forward import CirculantDiffusion, ForwardConfig, ForwardMode, forward_solve, forward_solve_fixed_point
from plasticity_control.grid import Field, make_grid
from plasticity_control.model import ControlBounds, FertilityPreset, MortalityPreset, ProblemData, VitalRates
from plasticity_control.verify import randomized_comparison, randomized_energy

HERE = Path(__file__).parent
DATASET = HERE / "acceptance_dataset.yaml"


def read_yaml(file_path):
  with open(file_path, "r", encoding="utf-8") as file:
    return yaml.safe_load(file)


def format_results(results):
  output = "# Acceptance Results\n\n"
  passed = sum(1 for result in results if result["score"])
  total = len(results)
  output += f"## Passed: {passed}/{total}\n\n"
  return output


def problem(grid, *, m0=0.0, b0=0.0, p0=1.0, delta=0.0, sigma1=-1.0, sigma2=0.0):
  rates = VitalRates(mu=MortalityPreset(m0=m0), beta=FertilityPreset(b0=b0), delta=delta)
  return ProblemData(
    grid=grid,
    rates=rates,
    p0=np.broadcast_to(np.asarray(p0, dtype=float), (grid.n_a + 1, grid.n_x)).copy(),
    bounds=ControlBounds.constant(grid, sigma1, sigma2),
  )


def switching_problem(*, b0, m0=0.0, delta=0.0, p0=1.0, sigma1=-1.0, sigma2=0.0):
  """Twelve free cells: ages 0-1 at t = 0 (x 0-3) favour the upper bound, ages 0-1
  at the last step (x 0-1) the lower one. Every other node is pinned at u = -1."""
  grid = make_grid(4.0, 4.0, 4, 24)
  free = np.zeros(grid.shape, dtype=bool)
  free[:2, 0, :4] = True
  free[:2, grid.n_t - 1, :2] = True
  rates = VitalRates(mu=MortalityPreset(m0=m0), beta=FertilityPreset(b0=b0), delta=delta, birth_wrap=True)
  bounds = ControlBounds(
    sigma1=Field.of(grid, np.where(free, sigma1, -1.0)),
    sigma2=Field.of(grid, np.where(free, sigma2, -1.0)),
  )
  p0 = np.broadcast_to(np.asarray(p0, dtype=float), (grid.n_a + 1, grid.n_x)).copy()
  return ProblemData(grid=grid, rates=rates, p0=p0, bounds=bounds)


def early_cells(data):
  free = data.bounds.sigma1.values < data.bounds.sigma2.values
  free[:, 1:] = False
  return free


def check_comparison(th):
  grid = make_grid(2.0, 1.0, 40, 32)
  base = problem(grid, m0=0.2, b0=0.3, delta=0.5)
  report = randomized_comparison(base, trials=th["trials"], seed=th["seed"], u=base.bounds.sigma1)
  return report.passed and report.worst_violation <= th["worst_violation"], {"worst_violation": report.worst_violation}


def check_transport(th):
  grid = make_grid(2.0, 1.0, 20, 8)
  p = forward_solve(problem(grid, m0=0.1), Field.zeros(grid)).values
  older = p[grid.n_t :, grid.n_t]
  rel = float(np.max(np.abs(older / math.exp(-0.1) - 1.0)))
  return rel < th["rel_error"], {"rel_error": rel}


def _cosine_run(n_a, n_x):
  grid = make_grid(2.0, 1.0, n_a, n_x)
  mode = np.cos(2.0 * np.pi * grid.centers / X_PERIOD)
  p = forward_solve(problem(grid, delta=1.0, p0=1.0 + mode), Field.zeros(grid)).values
  row = p[grid.n_t, grid.n_t]
  exact = 1.0 + math.exp(-((math.pi / 12.0) ** 2)) * mode
  l2 = float(np.linalg.norm(row - exact) / np.linalg.norm(exact))
  amplitude = float(2.0 / n_x * np.sum((row - row.mean()) * mode))
  semi_discrete = math.exp(-float(CirculantDiffusion(grid, 1.0).eigenvalue(1)) * grid.t_max)
  return l2, abs(amplitude - semi_discrete)


def check_diffusion(th):
  l2, coarse = _cosine_run(128, 64)
  _, fine = _cosine_run(256, 128)
  ratio = coarse / fine
  target = th["halving_ratio"]
  ok = l2 < th["l2_error"] and abs(ratio - target) <= th["halving_slack"] * target
  return ok, {"l2_error": l2, "halving_ratio": ratio}


def check_fixed_point(th):
  grid = make_grid(2.0, 1.0, 10, 48)
  data = problem(grid, m0=0.3, b0=0.2, delta=0.5)
  u = Field.full(grid, -0.2)
  renewal = forward_solve(data, u).values
  result = forward_solve_fixed_point(data, u, ForwardConfig(mode=ForwardMode.fixed_point))
  rel = float(np.linalg.norm(result.state.values - renewal) / np.linalg.norm(renewal))
  decreasing = all(later <= earlier for earlier, later in zip(result.residuals, result.residuals[1:]))
  return rel < th["rel_l2"] and decreasing, {"rel_l2": rel, "iterations": result.iterations}


def check_energy(th):
  grid = make_grid(2.0, 1.0, 8, 16)
  report = randomized_energy(problem(grid, delta=0.5), trials=th["trials"], seed=th["seed"])
  return report.passed, {"worst_ratio": report.metrics.get("worst_ratio", float("nan"))}


def check_adjoint(th):
  grid = make_grid(2.0, 1.0, 20, 8)
  q = adjoint_solve(problem(grid), Field.full(grid, -0.5)).values
  a, t, _ = np.meshgrid(grid.ages, grid.times, grid.centers, indexing="ij")
  exact = np.exp(-0.5 * np.minimum(grid.a_max - a, grid.t_max - t)) - 1.0
  err = float(np.max(np.abs(q - exact)))
  return err < th["dt_multiple"] * grid.dt, {"max_error": err}


def check_variational(th):
  # no-switch instance: the O(eps + dt) constant of the derivative gap
  grid = make_grid(2.0, 2.0, 20, 16)
  data = problem(grid, m0=0.2, b0=0.1, delta=0.5, sigma1=-0.5)
  result = sweep(data)
  rng = np.random.default_rng(7)
  ok = result.converged
  worst_constant = 0.0
  for _ in range(th["directions"]):
    v = admissible_direction(data, result.u_star, rng)
    report = variational_check(data, result.u_star, v, th["eps"])
    ok = ok and report.fd_derivative >= -th["sign_rtol"] * report.scale
    worst_constant = max(worst_constant, report.gap / ((report.eps + grid.dt) * report.scale))

  # switching instance: u* sits on both bounds and q < -1 on the early cells
  switching = switching_problem(b0=1.8, m0=0.05, delta=0.5, sigma1=-0.8, sigma2=-0.05)
  optimum = sweep(switching)
  below = int(np.sum(optimum.q.values[early_cells(switching)] < -1.0))
  ok = ok and optimum.converged and below == int(early_cells(switching).sum())
  for _ in range(th["directions"]):
    report = variational_check(switching, optimum.u_star, admissible_direction(switching, optimum.u_star, rng), th["eps"])
    ok = ok and report.fd_derivative >= -th["sign_rtol"] * report.scale and report.adjoint_expression >= 0.0
  ok = ok and worst_constant <= th["gap_constant"]
  return ok, {"observed_constant": worst_constant, "nodes_below_minus_one": below}


def admissible_direction(data, u, rng):
  s1 = data.bounds.sigma1.values
  s2 = data.bounds.sigma2.values
  target = s1 + rng.random(s1.shape) * (s2 - s1)
  return Field.of(data.grid, target - u.values)


def check_oracle(th):
  rng = np.random.default_rng(2024)
  ok = True
  worst_gap = 0.0
  upper_cells = 0
  for _ in range(th["instances"]):
    data = switching_problem(
      b0=rng.uniform(1.5, 2.5),
      m0=rng.uniform(0.0, 0.1),
      delta=rng.uniform(0.0, 1.0),
      p0=rng.uniform(0.5, 2.0, size=(5, 24)),
      sigma1=rng.uniform(-1.0, -0.5),
      sigma2=rng.uniform(-0.1, 0.0),
    )
    result = sweep(data)
    best = brute_force_optimum(data)
    gap = abs(result.psi_star - best.psi_best) / max(abs(best.psi_best), 1e-300)
    worst_gap = max(worst_gap, gap)
    s2 = data.bounds.sigma2.values
    free = data.bounds.sigma1.values < s2
    upper = free & (best.u_best.values == s2)
    upper_cells += int(upper.sum())
    rule = switching_rule(result.q, data.bounds, result.u_star, 0.0).values
    decisive = (np.abs(result.q.values + 1.0) > th["switch_band"]) & (result.p_star.values > th["state_floor"])
    ok = ok and result.converged and gap <= th["rel_gap"]
    ok = ok and bool(np.array_equal(upper, early_cells(data)))
    ok = ok and bool(np.array_equal(result.u_star.values[decisive], rule[decisive]))
  return ok, {"worst_rel_gap": worst_gap, "upper_bound_cells": upper_cells}


def check_degenerate(th):
  grid = make_grid(2.0, 1.0, 8, 8)
  data = problem(grid, m0=0.2, p0=0.0, delta=0.5)
  change = degenerate_freedom(data, data.bounds.sigma1, seed=3)
  psi = objective(data.bounds.sigma2, forward_solve(data, data.bounds.sigma2), grid)
  return change < th["max_change"] and psi == 0.0, {"max_change": change}


CHECKS = {
  "comparison": check_comparison,
  "transport": check_transport,
  "diffusion": check_diffusion,
  "fixed_point": check_fixed_point,
  "energy": check_energy,
  "adjoint": check_adjoint,
  "variational": check_variational,
  "oracle": check_oracle,
  "degenerate": check_degenerate,
}


def run_case(test_id, case):
  started = time.perf_counter()
  score, observed = CHECKS[test_id](case["thresholds"])
  elapsed = time.perf_counter() - started
  return {
    "test_id": test_id,
    "score": bool(score),
    "observed": observed,
    "runtime_s": round(elapsed, 3),
    "target_s": case["thresholds"].get("runtime_s"),
    "note": case["metadata"]["comments"].strip(),
  }


def _params():
  tests = read_yaml(DATASET)["tests"]
  return [
    pytest.param(test_id, case, id=test_id, marks=[pytest.mark.slow] if case.get("slow") else [])
    for test_id, case in tests.items()
  ]


@pytest.mark.parametrize("test_id, case", _params())
def test_acceptance(test_id, case):
  result = run_case(test_id, case)
  assert result["score"], result["observed"]


def eval_acceptance(test_ids=None):
  tests = read_yaml(DATASET)["tests"]
  if test_ids:
    wanted = set(test_ids.split(","))
    tests = {k: v for k, v in tests.items() if k in wanted}

  results = []
  for test_id, case in tests.items():
    print("#" * 80)
    print(f"Test ID: {test_id}")
    results.append(run_case(test_id, case))
    print(f"Score: {results[-1]['score']}  Observed: {results[-1]['observed']}")

  headers = ["Test ID", "Score", "Observed", "Runtime (s)", "Target (s)", "Notes"]
  table = [
    [result["test_id"], result["score"], result["observed"], result["runtime_s"], result["target_s"], result["note"]]
    for result in results
  ]
  current_time = datetime.now().strftime("%Y-%m-%d %H:%M:%S")
  with open(HERE / "README.md", "w", encoding="utf-8") as readme_file:
    readme_file.write(f"## Evaluation Date: {current_time}\n\n")
    readme_file.write(format_results(results))
    readme_file.write("\n\n")
    readme_file.write(tabulate(table, headers=headers, tablefmt="github"))
  print(format_results(results))
  print(tabulate(table, headers=headers, tablefmt="github"))


if __name__ == "__main__":
  parser = argparse.ArgumentParser(description="Run the acceptance checks.")
  parser.add_argument("--test_ids", type=str, help="Comma-separated list of test IDs to run.")
  args = parser.parse_args()
  eval_acceptance(test_ids=args.test_ids)
