"""Numerical laboratory for one-frequency quasiperiodic Schrodinger
operators and their dual finite-range symplectic cocycles."""

__version__ = "0.1.0"

from .arithmetic import Frequency, cf_expand, beta_estimate, make_liouville
from .cocycles import TrigPolynomial, CocycleSpec, lyapunov_spectrum

__all__ = [
    "Frequency", "cf_expand", "beta_estimate", "make_liouville",
    "TrigPolynomial", "CocycleSpec", "lyapunov_spectrum", "__version__",
]
