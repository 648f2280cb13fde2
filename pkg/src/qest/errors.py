"""Exception hierarchy shared by every qest module."""


class QestError(Exception):
    """Base class for all errors raised by qest."""


class DimensionError(QestError, ValueError):
    """Matrix shapes do not fit the requested operation."""


class NotHermitianError(QestError, ValueError):
    pass


class NotPositiveError(QestError, ValueError):
    """A matrix declared positive (semi-)definite has a negative eigenvalue."""


class NotProjectorError(QestError, ValueError):
    pass


class ValidationError(QestError):
    """A structural invariant (trace preservation, Choi marginals, POVM
    completeness, ...) failed beyond its tolerance."""


class SupportConditionError(QestError):
    """The SLD does not exist: the derivative leaks outside the support."""


class DegenerateError(QestError, ValueError):
    """A Fisher information is undefined at the requested point."""


class ParameterError(QestError, ValueError):
    """A parameter lies outside its admissible range."""


class ConditionCError(QestError):
    """The range of the Choi matrix does not contain the range of its derivative."""
