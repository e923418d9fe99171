"""Exception types shared across the package.

The CLI maps these onto exit codes: InputError -> 1, convergence
warnings -> 2, NumericalError -> 3.
"""


class InputError(ValueError):
    """Malformed or inconsistent user input (bad CSV, dimension mismatch)."""


class NumericalError(RuntimeError):
    """A numerical routine failed in a way that invalidates the result."""


class UnsupportedConfigurationError(RuntimeError):
    """A statistically valid request the implementation does not cover."""


class FitConvergenceWarning(UserWarning):
    """Optimization hit an iteration cap; the best iterate is returned."""


class DegenerateInputWarning(UserWarning):
    """Input is degenerate (empty classes, isolated nodes); a convention applies."""
