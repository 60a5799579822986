"""Limiting vortex density in a type-II superconductor with a pinning inclusion.

Modules
-------
geometry    domain description, staircase grid, pinning field
elliptic    5-point operator assembly, CG and projected SOR solvers
fields      London-type fields, Green columns, limiting energy
obstacle    obstacle problem, dual, critical ratios, sweeps
radial      power-series and shooting solutions of the radial problem
finite_eps  positive zero-field minimizer, boundary layer and Green kernel
"""

from .errors import (ConfigError, ConvergenceError, DegenerateParameterError, GeometryError,
                     MesovortexError, NumericError, ParameterError, ResolutionError)
from .geometry import DomainSpec, Grid2D, build_grid, pinning_field

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "ConvergenceError", "DegenerateParameterError", "GeometryError",
    "MesovortexError", "NumericError", "ParameterError", "ResolutionError",
    "DomainSpec", "Grid2D", "build_grid", "pinning_field", "__version__",
]
