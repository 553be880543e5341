"""Exception hierarchy used across qplab."""


class QplabError(Exception):
    """Base class for all qplab errors."""


class DomainError(QplabError, ValueError):
    """Input outside the mathematical domain of an operation."""


class ShapeError(QplabError, ValueError):
    """Incompatible array dimensions."""


class InsufficientDataError(QplabError, ValueError):
    pass


class SizeError(QplabError, OverflowError):
    """Requested object would exceed the supported size.

    ``largest_safe`` carries the largest parameter value that still works,
    when one is known.
    """

    def __init__(self, msg, largest_safe=None):
        super().__init__(msg)
        self.largest_safe = largest_safe


class CFIndexError(QplabError, IndexError):
    pass


class ConvergenceError(QplabError, RuntimeError):
    def __init__(self, msg, last_delta=None):
        super().__init__(msg)
        self.last_delta = last_delta


class NumericalQualityError(QplabError, RuntimeError):
    """A computed quantity failed an internal consistency check."""


class ConditioningError(NumericalQualityError):
    def __init__(self, msg, cond=None):
        super().__init__(msg)
        self.cond = cond


class DataQualityError(NumericalQualityError):
    pass


class RegimeError(QplabError, ValueError):
    """Operation called outside the parameter regime where it applies."""
