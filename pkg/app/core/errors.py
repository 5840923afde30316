"""Exception hierarchy for the lab.

Everything derives from ``ValueError`` so callers validating inputs the usual
way keep working; the subclasses let the harness tell failures apart.
"""


class LabError(ValueError):
    """Base class for domain errors raised by the calculus."""


class InvalidMeasureError(LabError):
    pass


class ArityMismatchError(LabError):
    pass


class MomentInfiniteError(LabError):
    pass


class UnsupportedCatalogError(LabError):
    pass


class DimensionMismatchError(LabError):
    pass


class InvalidTupleError(LabError):
    pass


class SingularResolventError(LabError):
    pass


class NotDiagonalizableError(LabError):
    pass


class CommutationError(LabError):
    pass


class SpectrumError(LabError):
    """Spectrum is complex or leaves (-inf, 0] where a real shift is needed."""


class BranchCutError(LabError):
    """Argument lies on (-inf, 0] or in a spectrum."""


class ScenarioError(LabError):
    """Scenario config could not be parsed or references an unknown id."""
