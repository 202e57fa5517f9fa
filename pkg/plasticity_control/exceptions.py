# Copyright 2025 CNOE
# SPDX-License-Identifier: Apache-2.0

from typing import Any, Sequence


class PlasticityControlError(Exception):
  """Base class for every failure raised by the toolkit."""

  pass


class GridError(PlasticityControlError):
  """Raised when a grid cannot be aligned with the characteristics."""

  pass


class ConfigError(PlasticityControlError):
  """Raised when a config key is missing, malformed or out of range."""

  def __init__(self, key: str, message: str):
    super().__init__(f"{key}: {message}")
    self.key = key


class HypothesisError(PlasticityControlError):
  """Raised when problem data violates the model hypotheses."""

  def __init__(self, report: Any):
    first = report.violations[0]
    super().__init__(f"{first.key}: {first.hypothesis} violated ({first.message})")
    self.report = report


class SolverDivergenceError(PlasticityControlError):
  """Raised when a solver produces NaN or Inf."""

  def __init__(self, solver: str, node: tuple[int, ...]):
    super().__init__(f"{solver}: non-finite value at node (i, n, k) = {node}")
    self.node = node


class NonConvergenceError(PlasticityControlError):
  """Raised when the newborn fixed-point iteration hits its cap."""

  def __init__(self, iterations: int, residuals: Sequence[float]):
    last = residuals[-1] if residuals else float("nan")
    super().__init__(f"fixed point not reached after {iterations} iterations (last residual {last:.3e})")
    self.iterations = iterations
    self.residuals = list(residuals)


class InadmissibleDirectionError(PlasticityControlError):
  """Raised when u + eps*v leaves the admissible set."""

  def __init__(self, nodes: Sequence[tuple[int, ...]]):
    shown = ", ".join(str(n) for n in nodes[:5])
    more = f" (+{len(nodes) - 5} more)" if len(nodes) > 5 else ""
    super().__init__(f"direction is not admissible at nodes {shown}{more}")
    self.nodes = list(nodes)


class OrderingError(PlasticityControlError):
  """Raised when comparison inputs are not ordered node-wise."""

  def __init__(self, quantity: str, node: tuple[int, ...]):
    super().__init__(f"{quantity} is not ordered at node {node}")
    self.quantity = quantity
    self.node = node


class GronwallPremiseError(PlasticityControlError):
  """Raised when the integral inequality premise fails."""

  def __init__(self, index: int, lhs: float, rhs: float):
    super().__init__(f"premise fails at n={index}: x={lhs:.6g} > {rhs:.6g}")
    self.index = index


class EnumerationLimitError(PlasticityControlError):
  """Raised when the brute-force oracle would enumerate too many controls."""

  pass
