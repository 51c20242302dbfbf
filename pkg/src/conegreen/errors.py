"""Exception hierarchy shared by all modules."""


class ConeGreenError(Exception):
    """Base class for all library errors."""


class ModelError(ConeGreenError, ValueError):
    """A walk model, cone or measure violates one of its invariants."""


class DomainError(ConeGreenError, ValueError):
    """An argument lies outside the region where an operation is defined."""


class ConvergenceError(ConeGreenError, RuntimeError):
    """An iterative procedure did not reach its tolerance."""


class TruncationError(ConvergenceError):
    """A truncated computation is too coarse for the requested quantity.

    Usually fixed by enlarging the lattice window.
    """


class UnstableStudyError(ConeGreenError, RuntimeError):
    """A ray study has not settled enough to support a verdict."""
