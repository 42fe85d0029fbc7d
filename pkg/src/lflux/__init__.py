"""Scale-by-scale energy budgets of incompressible flow on the periodic box."""

__version__ = "0.1.0"

from .spectral import Grid, SpectralField  # noqa: E402
from .solver import NumericalError, SolverConfig, run  # noqa: E402

__all__ = ["Grid", "NumericalError", "SolverConfig", "SpectralField", "run", "__version__"]
