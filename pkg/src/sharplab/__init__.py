"""Numerical laboratory for sharp vector-valued maximal and multiplier inequalities on the torus."""

__version__ = "0.1.0"

from .grid_core import (  # noqa: E402
    ConfigurationError,
    ConstructionError,
    DyadicCube,
    Grid,
    GridFunction,
    ParameterError,
    ResolutionError,
    SharplabError,
    lp_norm,
)

__all__ = [
    "__version__",
    "Grid",
    "GridFunction",
    "DyadicCube",
    "lp_norm",
    "SharplabError",
    "ConfigurationError",
    "ResolutionError",
    "ParameterError",
    "ConstructionError",
]
