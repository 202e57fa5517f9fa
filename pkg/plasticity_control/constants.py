# Copyright 2025 CNOE
# SPDX-License-Identifier: Apache-2.0

"""
Constants and default values for the solvers.

This module centralizes the numerical defaults used across the package,
providing a single source of truth for tolerances and caps.
"""

#
# Domain
#
X_PERIOD = 24.0
MIN_AGE_CELLS = 2
MIN_X_CELLS = 4
EIGEN_MIN_X_CELLS = 8

#
# Forward solver
#
DEFAULT_FP_TOL = 1e-12
DEFAULT_FP_MAX_ITER = 200

#
# Sweep
#
DEFAULT_RELAXATION = 0.5
DEFAULT_SWEEP_MAX_ITER = 100
DEFAULT_U_TOL = 1e-10
DEFAULT_SWITCH_BAND = 1e-8
DEFAULT_EPS_FD = 1e-4

#
# Oracle
#
MAX_ENUMERATED_CELLS = 20
TIE_RTOL = 1e-12
MAX_LISTED_TIES = 64

#
# Verification
#
ENERGY_SLACK = 2.0
GRONWALL_RTOL = 1e-9
POSITIVITY_FLOOR = 1e-12

#
# Output
#
MIN_OUTPUT_DIGITS = 12
DEFAULT_OUTPUT_DIGITS = 17
