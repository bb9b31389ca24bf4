"""fracdecay: numerical verification of fractional Schrodinger operators
with slowly decaying repulsive potentials.

The package builds P = p0(D) + V(x) on a periodic grid and measures, at desk
scale, the quantitative spectral claims around such operators: forbidden-region
(Agmon-type) smallness of spectrally localized states, uniform weighted
resolvent bounds at low and high frequency, semiclassical commutator
positivity and scaling, absence of eigenvalues under a virial condition,
exotic symbol-class membership of the inverse, and fast local time decay of
the propagator.
"""

__version__ = "0.1.0"

from .grid import Grid, GridFunction, make_grid, weighted_norm, indicator_mask
from .model import ModelSpec, SymbolSpec, PotentialSpec, p0_eval, validate_symbol, validate_potential
from .operators import OperatorHandle, DilationHandle
from .solvers import SolveConfig, SpectralData, solve_shifted, eig_small, propagate
from .funcalc import BumpFunction, hs_apply, check_weighted_resolvent
from .experiments import ExperimentContext

__all__ = [
    "Grid", "GridFunction", "make_grid", "weighted_norm", "indicator_mask",
    "ModelSpec", "SymbolSpec", "PotentialSpec", "p0_eval",
    "validate_symbol", "validate_potential",
    "OperatorHandle", "DilationHandle",
    "SolveConfig", "SpectralData", "solve_shifted", "eig_small", "propagate",
    "BumpFunction", "hs_apply", "check_weighted_resolvent",
    "ExperimentContext",
    "__version__",
]
