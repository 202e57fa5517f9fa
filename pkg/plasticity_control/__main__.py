# Copyright 2025 CNOE
# SPDX-License-Identifier: Apache-2.0

from plasticity_control.cli import main

if __name__ == "__main__":
  main()
