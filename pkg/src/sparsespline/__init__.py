"""Sparse equation discovery with B-spline state interpolation and physics-informed training."""

from .baseline import BaselineResult, sindy_baseline
from .bspline import KnotVector, SplineCurve, build_knots, sparse_basis
from .data import DataSource, Dataset, add_noise, load_csv, save_csv, subsample
from .errors import (DataError, IntegrationError, InvalidArgument, LibrarySyntaxError,
                     TrainingError)
from .library import (CandidateLibrary, double_pendulum_library, emps_library,
                      parse_library_spec, polynomial_library)
from .model import DiscoveredModel, score_against_reference
from .objective import Hyperparams, LossBreakdown
from .pipeline import DiscoveryResult, discover
from .stridge import SparseSolution, stridge

__version__ = "0.1.0"

__all__ = [
    "BaselineResult", "CandidateLibrary", "DataError", "DataSource", "Dataset",
    "DiscoveredModel", "DiscoveryResult", "Hyperparams", "IntegrationError", "InvalidArgument",
    "KnotVector", "LibrarySyntaxError", "LossBreakdown", "SparseSolution", "SplineCurve",
    "TrainingError", "add_noise", "build_knots", "discover", "double_pendulum_library",
    "emps_library", "load_csv", "parse_library_spec", "polynomial_library", "save_csv",
    "score_against_reference", "sindy_baseline", "sparse_basis", "stridge", "subsample",
]
