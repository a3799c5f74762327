"""Numerical toolkit for absolutely continuous invariant measures of
multidimensional maps with a neutral fixed point.

Induced first-return maps, escape-time tails, Ulam transfer operators and
density extension, quasi-Hölder norms, backward-orbit asymptotics and
assumption audits, with a compiled core for the hot loops.
"""

from .errors import AcimError, NumericalFailure, ValidationError
from .example_maps import ExampleSpec, build_example, example1, example2, example4, fold_map, neutral_1d
from .kernels import BACKEND
from .map_model import PiecewiseMap, ToleranceConfig, local_inverse

__version__ = "0.1.0"

__all__ = [
    "AcimError",
    "BACKEND",
    "ExampleSpec",
    "NumericalFailure",
    "PiecewiseMap",
    "ToleranceConfig",
    "ValidationError",
    "build_example",
    "example1",
    "example2",
    "example4",
    "fold_map",
    "local_inverse",
    "neutral_1d",
]
