"""Estimate interaction kernels of 1-D mean-field equations from solution data
and characterize their identifiability through data-adaptive integral operators."""
from .backend import BACKEND
from .grid import InvalidInputError, SpaceGrid, SpaceTimeField, TimeGrid
from .interaction import InteractionKernel

__version__ = "0.1.0"

__all__ = ["BACKEND", "InvalidInputError", "InteractionKernel", "SpaceGrid",
           "SpaceTimeField", "TimeGrid", "__version__"]
