"""Finite-difference solver for space-time nonlocal diffusion in one dimension.

The time derivative is of Caputo type and discretised with the L1 scheme;
the spatial operator is a symmetric weighted sum of second differences
(fractional Laplacian powers, or the plain discrete Laplacian).
"""

from __future__ import annotations

__version__ = "0.1.0"

import os as _os

import numba as _numba

# The bundled TBB is often too old and only triggers a warning; try OpenMP first.
if "NUMBA_THREADING_LAYER" not in _os.environ and "NUMBA_THREADING_LAYER_PRIORITY" not in _os.environ:
    _numba.config.THREADING_LAYER_PRIORITY = ["omp", "tbb", "workqueue"]
