"""Exception types shared across the package."""


class CutMaxwellError(Exception):
    """Base class for all package errors."""


class DegenerateGeometryError(CutMaxwellError):
    """The level set vanishes identically on an edge (tangential contact)."""


class ImproperCutError(CutMaxwellError):
    """An element is crossed improperly; local refinement is required."""

    def __init__(self, cell, message=None):
        self.cell = cell
        super().__init__(message or f"improper interface crossing in cell {cell}")


class InconsistentTopologyError(CutMaxwellError):
    """Cut topology is self-contradictory (e.g. a side with no vertex)."""


class MergeFailureError(CutMaxwellError):
    """A small cut cell could not be merged into a large macro-element."""


class DegenerateRegionError(CutMaxwellError):
    """A cut sub-region is vanishingly small; merging failed upstream."""


class QuadratureWeightError(CutMaxwellError):
    """A curved-piece rule kept nonpositive weights after bisection."""


class SingularMassError(CutMaxwellError):
    """A local mass block could not be factorized."""


class SingularMatrixError(CutMaxwellError):
    """The global system is singular (k at/near a discrete eigenvalue)."""


class ResidualTooLargeError(CutMaxwellError):
    """Direct solve finished but the verified residual is above tolerance."""

    def __init__(self, residual, tol):
        self.residual = residual
        self.tol = tol
        super().__init__(f"relative residual {residual:.3e} exceeds {tol:.1e}")


class ConfigError(CutMaxwellError):
    """Invalid run configuration."""
