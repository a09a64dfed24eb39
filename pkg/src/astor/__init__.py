"""Numerical solver for time-dependent families of embedded tori.

Computes torus embedding families for exponentially decaying time-dependent
perturbations of Hamiltonians (and torus vector fields) whose unperturbed
part carries an arbitrary torus dynamic, and verifies the numerically
checkable consequences: invariance residuals, decay rates, flow conjugacy
and the Lagrangian property of the embedded tori.
"""

__version__ = "0.1.0"

from .errors import (AstorError, ConfigError, CoverageError, DivergenceError,
                     ExtensionError, FoldError, InadmissibleRateError,
                     IntegrityError, ResolutionError, UnsupportedInputError)
from .grids import QGrid, TimeGrid, TimeGridFunction, partial_derivative
from .norms import NormSpec, holder_norm, weighted_norm, weighted_norm_profile
from .trig import TrigMat, TrigPoly, TrigTerm, TrigVec

__all__ = [
    "AstorError", "ConfigError", "CoverageError", "DivergenceError",
    "ExtensionError", "FoldError", "InadmissibleRateError", "IntegrityError",
    "ResolutionError", "UnsupportedInputError",
    "QGrid", "TimeGrid", "TimeGridFunction", "partial_derivative",
    "NormSpec", "holder_norm", "weighted_norm", "weighted_norm_profile",
    "TrigMat", "TrigPoly", "TrigTerm", "TrigVec",
]
