"""Hybridizable discontinuous Galerkin solver for incompressible three-phase
flow in porous media (wetting, light oil and heavy oil phases)."""

from .config import __version__
from .driver import Scenario, Simulator
from .errors import ConfigurationError, HDGError, SolverError

__all__ = ["ConfigurationError", "HDGError", "Scenario", "Simulator", "SolverError", "__version__"]
