"""Exception hierarchy shared by all modules.

The CLI maps these onto exit codes: domain and assumption errors exit
with 2, numerical failures with 3.
"""


class QSDError(Exception):
    """Base class for all package errors."""


class DomainError(QSDError, ValueError):
    """An input lies outside the domain of the operation."""


class AssumptionViolated(DomainError):
    """A hypothesis required by a bound does not hold.

    ``condition`` names the violated inequality, e.g. ``"||H|| < nu/2"``.
    """

    def __init__(self, message, condition=None):
        super().__init__(message)
        self.condition = condition


class NumericalError(QSDError, ArithmeticError):
    """Quadrature, integration or iteration failed to reach its tolerance."""


class BracketError(DomainError):
    """The supplied bracket does not enclose a root."""


class PartialSpectrumError(NumericalError):
    """Fewer eigenvalues were found than requested.

    The eigenvalues located so far are kept in ``found``.
    """

    def __init__(self, message, found=()):
        super().__init__(message)
        self.found = list(found)


class ConditioningError(DomainError):
    """Conditioning on an event of probability (or empirical mass) zero."""

    def __init__(self, message, survival=0.0):
        super().__init__(message)
        self.survival = survival


class DegenerateChainError(DomainError):
    """Survival probability hit zero inside the requested horizon."""


class GenerationError(NumericalError):
    """A random test instance could not be generated within the retry budget."""
