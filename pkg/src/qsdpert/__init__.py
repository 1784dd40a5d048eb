"""Perturbation bounds, eigenvalue shooting and Monte Carlo for quasi-stationary
distributions of killed Markov processes."""

__version__ = "0.1.0"

from .errors import (  # noqa: F401
    AssumptionViolated,
    BracketError,
    ConditioningError,
    DegenerateChainError,
    DomainError,
    GenerationError,
    NumericalError,
    PartialSpectrumError,
    QSDError,
)
