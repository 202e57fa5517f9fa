# Copyright 2025 CNOE
# SPDX-License-Identifier: Apache-2.0

"""
Command line entry point: simulate, adjoint, optimize, oracle and verify.

Every run writes ``manifest.json`` into ``--out`` before any output file.
Exit codes: 0 success, 1 invalid input, 2 solver failure or sweep not
converged, 3 failed property suite.
"""

from __future__ import annotations

import json
import logging
import sys
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Optional, Sequence

import click
import numpy as np
from pydantic import BaseModel, ConfigDict
from rich.console import Console
from rich.markup import escape
from tabulate import tabulate

from plasticity_control import __version__
from plasticity_control.adjoint import adjoint_solve, switching_indicator
from plasticity_control.config import RunConfig, build_problem, config_hash, config_schema, load_config
from plasticity_control.constants import MAX_ENUMERATED_CELLS
from plasticity_control.control import brute_force_optimum, objective, objective_bounds, sweep
from plasticity_control.exceptions import (
  ConfigError,
  EnumerationLimitError,
  GridError,
  GronwallPremiseError,
  HypothesisError,
  InadmissibleDirectionError,
  NonConvergenceError,
  OrderingError,
  SolverDivergenceError,
)
from plasticity_control.forward import (
  ForwardMode,
  boundary_of,
  forward_solve,
  forward_solve_fixed_point,
  forward_solve_prescribed,
  mass_by_time,
)
from plasticity_control.grid import Field
from plasticity_control.model import ProblemData, validate_params
from plasticity_control.utils.environment import get_log_level, load_environment
from plasticity_control.utils.io import read_csv, write_csv, write_json
from plasticity_control.utils.logging import setup_logging
from plasticity_control.verify import SUITES, run_suites

logger = logging.getLogger("plasticity-control.cli")
console = Console()

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_SOLVER = 2
EXIT_PROPERTY = 3

BOUNDARY_HEADER = ("t", "x", "value")
HISTORY_HEADER = ("iter", "psi", "residual")

_INVALID_INPUT = (
  ConfigError,
  GridError,
  HypothesisError,
  OrderingError,
  GronwallPremiseError,
  EnumerationLimitError,
  InadmissibleDirectionError,
)
_SOLVER_FAILURE = (SolverDivergenceError, NonConvergenceError)


class RunManifest(BaseModel):
  config_hash: str
  command: list[str]
  tool_version: str
  started_at: str
  seed: Optional[int] = None


class RunContext(BaseModel):
  model_config = ConfigDict(arbitrary_types_allowed=True)

  config: RunConfig
  data: ProblemData
  out: Path


def _prepare(command: str, config_path: str, out: str, seed: Optional[int] = None) -> RunContext:
  config = load_config(config_path)
  data = build_problem(config, base_dir=Path(config_path).parent)
  report = validate_params(data)
  for note in report.notes:
    logger.info(f"note: {note}")
  if not report.ok:
    raise HypothesisError(report)

  out_dir = Path(out)
  ctx = click.get_current_context()
  argv = (ctx.obj or {}).get("argv", [command])
  manifest = RunManifest(
    config_hash=config_hash(config),
    command=list(argv),
    tool_version=__version__,
    started_at=datetime.now(timezone.utc).isoformat(),
    seed=seed,
  )
  write_json(out_dir / "manifest.json", manifest.model_dump())
  logger.info(f"{command}: config {manifest.config_hash[:12]}, output in {out_dir}")
  return RunContext(config=config, data=data, out=out_dir)


def _control(data: ProblemData, choice: str) -> Field:
  """Resolve ``zero``, ``lower``, ``upper`` or ``csv:<path>``.

  ``sigma1``/``sigma2`` and a bare path are accepted as aliases.
  """
  if choice == "zero":
    return Field.zeros(data.grid)
  if choice in ("lower", "sigma1"):
    return data.bounds.sigma1
  if choice in ("upper", "sigma2"):
    return data.bounds.sigma2
  path = choice.removeprefix("csv:")
  if not path:
    raise ConfigError("control", "csv: needs a path")
  try:
    u = Field.from_csv(data.grid, path)
  except (ValueError, OSError) as exc:
    raise ConfigError("control", str(exc)) from exc
  if not data.bounds.contains(u.values):
    raise ConfigError("control", f"{choice} leaves the admissible set")
  return u


def _write_boundary(path: Path, data: ProblemData, b: np.ndarray) -> Path:
  t, x = np.meshgrid(data.grid.times, data.grid.centers, indexing="ij")
  return write_csv(path, BOUNDARY_HEADER, [t, x, b])


def _read_boundary(data: ProblemData, path: str) -> np.ndarray:
  try:
    table = read_csv(path, BOUNDARY_HEADER)
  except (ValueError, OSError) as exc:
    raise ConfigError("boundary", str(exc)) from exc
  shape = (data.grid.n_t + 1, data.grid.n_x)
  if table.shape[0] != shape[0] * shape[1]:
    raise ConfigError("boundary", f"{path}: {table.shape[0]} rows, grid needs {shape[0] * shape[1]}")
  return table[:, 2].reshape(shape)


control_option = click.option(
  "--control",
  default="zero",
  show_default=True,
  help="zero, lower, upper or csv:<path> of a Field CSV",
)

# CLI spellings of the forward modes; the underscore forms of the config stay valid.
MODE_NAMES = {
  "renewal": ForwardMode.renewal,
  "fixed-point": ForwardMode.fixed_point,
  "prescribed-b": ForwardMode.prescribed_b,
  **{mode.value: mode for mode in ForwardMode},
}


def _print_schema(ctx: click.Context, param: click.Parameter, value: bool) -> None:
  if not value or ctx.resilient_parsing:
    return
  click.echo(json.dumps(config_schema(), indent=2, sort_keys=True))
  ctx.exit(0)


@click.group()
@click.version_option(__version__, prog_name="plasticity-control")
@click.option(
  "--print-config-schema",
  is_flag=True,
  expose_value=False,
  is_eager=True,
  callback=_print_schema,
  help="Print the JSON schema of the run config and exit.",
)
def cli() -> None:
  """Age-structured plasticity model: solvers, optimal harvest and property checks."""


@cli.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", required=True, type=click.Path(file_okay=False))
@click.option("--mode", type=click.Choice(list(MODE_NAMES)), default=None, help="override forward.mode")
@click.option("--boundary", type=click.Path(exists=True, dir_okay=False), default=None, help="t,x,value CSV for prescribed-b")
@control_option
def simulate(config_path: str, out: str, mode: Optional[str], boundary: Optional[str], control: str) -> int:
  """Forward solve; writes state.csv, boundary.csv and summary.json."""
  job = _prepare("simulate", config_path, out)
  data = job.data
  cfg = job.config.forward if mode is None else job.config.forward.model_copy(update={"mode": MODE_NAMES[mode]})
  u = _control(data, control)
  summary: dict[str, Any] = {"mode": cfg.mode.value, "fp_iterations": None}

  if cfg.mode is ForwardMode.prescribed_b:
    if boundary is None:
      raise click.UsageError("--boundary is required in prescribed-b mode")
    p = forward_solve_prescribed(data, u, _read_boundary(data, boundary))
  elif cfg.mode is ForwardMode.fixed_point:
    result = forward_solve_fixed_point(data, u, cfg)
    p = result.state
    summary.update(fp_iterations=result.iterations, fp_residuals=result.residuals, contraction=result.contraction)
  else:
    p = forward_solve(data, u, cfg)

  p.to_csv(job.out / "state.csv")
  _write_boundary(job.out / "boundary.csv", data, boundary_of(p))
  mass = mass_by_time(p)
  summary.update(psi=objective(u, p, data.grid), mass_by_time=[float(m) for m in mass], min_value=float(p.values.min()))
  write_json(job.out / "summary.json", summary)
  console.print(f"[bold]simulate[/bold] {cfg.mode.value}: mass {mass[0]:.6g} -> {mass[-1]:.6g}")
  return EXIT_OK


@cli.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", required=True, type=click.Path(file_okay=False))
@control_option
def adjoint(config_path: str, out: str, control: str) -> int:
  """Adjoint solve for a control; writes adjoint.csv and switching.csv."""
  job = _prepare("adjoint", config_path, out)
  u = _control(job.data, control)
  q = adjoint_solve(job.data, u)
  q.to_csv(job.out / "adjoint.csv")
  Field.of(job.data.grid, switching_indicator(q)).to_csv(job.out / "switching.csv")
  console.print(f"[bold]adjoint[/bold]: q in [{q.values.min():.6g}, {q.values.max():.6g}]")
  return EXIT_OK


@cli.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", required=True, type=click.Path(file_okay=False))
@click.option("--omega", type=float, default=None, help="override sweep.omega")
@click.option("--tol", type=float, default=None, help="override sweep.u_tol")
@click.option("--max-iter", type=int, default=None, help="override sweep.max_iter")
def optimize(config_path: str, out: str, omega: Optional[float], tol: Optional[float], max_iter: Optional[int]) -> int:
  """Forward-backward sweep for the optimal harvest."""
  job = _prepare("optimize", config_path, out)
  overrides = {key: value for key, value in (("omega", omega), ("u_tol", tol), ("max_iter", max_iter)) if value is not None}
  section = job.config.sweep.model_copy(update=overrides)
  cfg = job.config.model_copy(update={"sweep": section}).sweep_config()

  result = sweep(job.data, cfg, job.config.forward)
  result.u_star.to_csv(job.out / "u_star.csv")
  result.p_star.to_csv(job.out / "p_star.csv")
  result.q.to_csv(job.out / "q.csv")
  iterations = np.arange(1, len(result.objective_history) + 1)
  write_csv(job.out / "history.csv", HISTORY_HEADER, [iterations, result.objective_history, result.residual_history])
  lower, upper = objective_bounds(job.data, job.config.forward)
  write_json(
    job.out / "summary.json",
    {
      "converged": result.converged,
      "iterations": result.iterations,
      "psi_star": result.psi_star,
      "harvest": result.harvest,
      "psi_bounds": [lower, upper],
    },
  )
  status = "converged" if result.converged else "[red]not converged[/red]"
  console.print(f"[bold]optimize[/bold] {status} after {result.iterations} iterations: harvest {result.harvest:.12g}")
  return EXIT_OK if result.converged else EXIT_SOLVER


@cli.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", required=True, type=click.Path(file_okay=False))
@click.option("--max-cells", type=int, default=MAX_ENUMERATED_CELLS, show_default=True)
@click.option("--workers", type=int, default=1, show_default=True, help="threads for the enumeration")
def oracle(config_path: str, out: str, max_cells: int, workers: int) -> int:
  """Brute-force bang-bang optimum, compared with the sweep."""
  job = _prepare("oracle", config_path, out)
  best = brute_force_optimum(job.data, max_cells=max_cells, forward_cfg=job.config.forward, max_workers=workers)
  result = sweep(job.data, job.config.sweep_config(), job.config.forward)
  gap = abs(result.psi_star - best.psi_best)
  write_json(
    job.out / "oracle.json",
    {
      "psi_best": best.psi_best,
      "psi_sweep": result.psi_star,
      "agreement_gap": gap,
      "sweep_converged": result.converged,
      "candidates": best.candidates,
      "tie_count": best.tie_count,
      "ties": best.ties,
      "ties_truncated": best.ties_truncated,
    },
  )
  best.u_best.to_csv(job.out / "u_best.csv")
  console.print(f"[bold]oracle[/bold]: {best.candidates} candidates, psi_best {best.psi_best:.12g}, gap {gap:.3e}")
  return EXIT_OK


@cli.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", required=True, type=click.Path(file_okay=False))
@click.option("--suite", type=click.Choice([*SUITES, "all"]), default="all", show_default=True)
@click.option("--seed", type=int, default=None, help="override verify.seed")
@click.option("--trials", type=int, default=None, help="override verify.trials")
@click.option("--workers", type=int, default=1, show_default=True, help="suites run in parallel")
def verify(config_path: str, out: str, suite: str, seed: Optional[int], trials: Optional[int], workers: int) -> int:
  """Property suites; exit 3 when any fails."""
  config = load_config(config_path)
  seed = config.verify.seed if seed is None else seed
  trials = config.verify.trials if trials is None else trials
  job = _prepare("verify", config_path, out, seed=seed)
  reports = run_suites([suite], job.data, seed=seed, trials=trials, max_workers=workers)
  write_json(job.out / "report.json", [report.model_dump(mode="json") for report in reports])
  rows = [[r.name, "PASS" if r.passed else "FAIL", f"{r.worst_violation:.3e}", r.location, r.details] for r in reports]
  console.print(tabulate(rows, headers=["suite", "status", "worst", "location", "details"], tablefmt="github"))
  return EXIT_OK if all(r.passed for r in reports) else EXIT_PROPERTY


def run(argv: Optional[Sequence[str]] = None) -> int:
  """Run the CLI on *argv* and return the process exit status."""
  load_environment()
  setup_logging(get_log_level())
  args = list(sys.argv[1:] if argv is None else argv)
  try:
    rv = cli.main(args=args, prog_name="plasticity-control", standalone_mode=False, obj={"argv": args})
  except click.ClickException as exc:
    exc.show()
    return EXIT_INVALID
  except click.Abort:
    return EXIT_INVALID
  except _INVALID_INPUT as exc:
    console.print(f"[red]error[/red] ({type(exc).__name__}): {escape(str(exc))}")
    return EXIT_INVALID
  except _SOLVER_FAILURE as exc:
    console.print(f"[red]solver failure[/red] ({type(exc).__name__}): {escape(str(exc))}")
    return EXIT_SOLVER
  return rv if isinstance(rv, int) else EXIT_OK


def main() -> None:
  sys.exit(run())
