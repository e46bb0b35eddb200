"""Adaptive simplex-based surrogates for functions with kinks.

The package builds piecewise-polynomial interpolants over a Delaunay
triangulation of the unit box, refines where a local error estimate is
largest, and keeps polynomial stencils from crossing discontinuity-of-slope
boundaries when the oracle supplies region labels.
"""
from __future__ import annotations

from .adaptive import BuildConfig, SurrogateModel, build, evaluate_model
from .convergence import fit_slope, l1_error, ladder, run_convergence
from .errors import (
    BudgetExhausted,
    DegeneratePoint,
    DegenerateSimplex,
    InfeasibleNetwork,
    InsufficientPoints,
    InvalidModelFile,
    InvalidNetworkFile,
    MoreThanTwoRegions,
    PlacementFailure,
    PointLocationFailure,
    PredicateFailure,
    SimplexUQError,
    SingularSystem,
    SolveFailure,
)
from .geometry import Triangulation, sample_in_simplex, simplex_volume, unit_box_corners
from .io import load_model, save_model
from .stats import QuadratureSpec, cdf, expectation, halton_sequence, moments, variance
from .testbed import GasNetwork, GasOracle, make_test_oracle, parse_network_file, toy_network

__version__ = "0.1.0"

__all__ = [
    "BudgetExhausted",
    "BuildConfig",
    "DegeneratePoint",
    "DegenerateSimplex",
    "GasNetwork",
    "GasOracle",
    "InfeasibleNetwork",
    "InsufficientPoints",
    "InvalidModelFile",
    "InvalidNetworkFile",
    "MoreThanTwoRegions",
    "PlacementFailure",
    "PointLocationFailure",
    "PredicateFailure",
    "QuadratureSpec",
    "SimplexUQError",
    "SingularSystem",
    "SolveFailure",
    "SurrogateModel",
    "Triangulation",
    "build",
    "cdf",
    "evaluate_model",
    "expectation",
    "fit_slope",
    "halton_sequence",
    "l1_error",
    "ladder",
    "load_model",
    "make_test_oracle",
    "moments",
    "parse_network_file",
    "run_convergence",
    "sample_in_simplex",
    "save_model",
    "simplex_volume",
    "toy_network",
    "unit_box_corners",
    "variance",
    "__version__",
]
