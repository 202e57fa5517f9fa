# Copyright 2025 CNOE
# SPDX-License-Identifier: Apache-2.0

"""Mosquito plasticity harvest-control toolkit."""

__version__ = "0.1.0"
