"""Affine hypersurfaces congruent to their centre map.

Submodules
----------
jets
    Truncated multivariate Taylor arithmetic.
blaschke
    Pointwise Blaschke structure from jets.
families
    Constants and explicit constructions of the quasi-umbilical families.
verify
    Residual checks and the verification suite.
cli
    Command-line interface.
"""

from .blaschke import BlaschkeData, eigen_split, extract
from .errors import CaffineError, ExtractionError, InvalidInput
from .families import FamilyParams, FamilySurface, calibrate_constants, resolve_params
from .verify import CheckReport, Tolerances, run_suite

__all__ = [
    "BlaschkeData",
    "CaffineError",
    "CheckReport",
    "ExtractionError",
    "FamilyParams",
    "FamilySurface",
    "InvalidInput",
    "Tolerances",
    "calibrate_constants",
    "eigen_split",
    "extract",
    "resolve_params",
    "run_suite",
]
