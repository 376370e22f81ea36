"""Unfitted cut-cell LDG solver for the 2D time-harmonic Maxwell interface problem."""

from .errors import (
    ConfigError,
    CutMaxwellError,
    DegenerateGeometryError,
    DegenerateRegionError,
    ImproperCutError,
    InconsistentTopologyError,
    MergeFailureError,
    QuadratureWeightError,
    ResidualTooLargeError,
    SingularMassError,
    SingularMatrixError,
)
from .levelset import (
    CircleLevelSet,
    ElementClass,
    GenericLevelSet,
    classify_cell,
    growth_factor,
    line_level_set,
    penalty_amplification,
)

__version__ = "0.1.0"
