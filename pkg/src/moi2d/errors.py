"""Exception types shared across the package."""


class DomainError(ValueError):
    """Input lies outside the domain where a closed-form solution exists."""


class UnsolvableCorrelationError(DomainError):
    """Correlation is not of the form rho = -cos(pi/k) for integer k >= 2."""


class ConsistencyError(RuntimeError):
    """A numerical self-check failed (closure, cancellation, probability range)."""


class WeightOverflowError(DomainError):
    """An image weight exponent is too large to represent as a float."""

    def __init__(self, index, exponent):
        self.index = index
        self.exponent = exponent
        super().__init__(
            f"image weight exponent {exponent:.6g} at image j={index} overflows float64; "
            "reduce the drift or move the start point closer to the boundaries"
        )
