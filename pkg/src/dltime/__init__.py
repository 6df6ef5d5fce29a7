"""Derivatives of local time for two-parameter Gaussian fields."""
import os

# the TBB layer shipped with some numba builds is too old; OpenMP is always present
if "NUMBA_THREADING_LAYER" not in os.environ:
    import numba

    numba.config.THREADING_LAYER = "omp"

__version__ = "0.1.0"
