"""Exception types shared across the package."""


class DomainError(ValueError):
    """Argument outside the domain of a formula."""


class DegenerateSpectrumError(DomainError):
    """Covariance eigenvalues are too close for the distinct-eigenvalue formulas."""

    def __init__(self, message, pair=None):
        super().__init__(message)
        self.pair = pair


class PrecisionExhaustedError(ArithmeticError):
    """Two successive working precisions failed to agree below the cap."""

    def __init__(self, message, max_digits=None):
        super().__init__(message)
        self.max_digits = max_digits


class ChainFailure(RuntimeError):
    """A Monte Carlo chain or sample produced a non-finite or collapsed value."""
