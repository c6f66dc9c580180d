"""Boundary-feedback stabilization of a continuum ensemble of transport PDEs.

The package solves the kernel equations of a backstepping boundary controller
for a family of coupled first-order hyperbolic PDEs indexed by a continuous
ensemble parameter, assembles the scalar feedback law, simulates the open and
closed loop, and verifies decay and transform identities numerically.
"""

import os

# Pin BLAS/OpenMP pools to a single thread before numpy is first imported so
# that vector reductions have a fixed summation order and all outputs are
# bit-reproducible regardless of the ambient thread configuration.
# ENSEMBLE_BACKSTEP_THREADS caps worker parallelism; the numerical kernels are
# vectorized single-threaded, so any cap >= 1 leaves behavior unchanged.
for _var in (
    "OMP_NUM_THREADS",
    "OPENBLAS_NUM_THREADS",
    "MKL_NUM_THREADS",
    "NUMEXPR_NUM_THREADS",
):
    os.environ[_var] = "1"
del _var

__version__ = "0.1.0"

from . import characteristics, errors, grid, kernelsolve, model, simulator, volterra  # noqa: E402
from . import cli  # noqa: E402  (after the numerics modules it builds on)

__all__ = [
    "characteristics",
    "cli",
    "errors",
    "grid",
    "kernelsolve",
    "model",
    "simulator",
    "volterra",
    "__version__",
]
