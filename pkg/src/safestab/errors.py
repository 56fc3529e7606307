"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the set on which a quantity is defined."""


class ContinuityError(ValueError):
    """Appended history data would leave a hole in the stored window."""


class ContractError(ValueError):
    """Shapes or required callables do not match what an operation needs."""


class TransversalityError(ArithmeticError):
    """The input direction is (numerically) tangent to the sliding surface.

    Raised when ``G = H g`` has norm below the transversality floor, i.e. the
    sliding-surface design requirement ``G != 0`` fails at the current history.
    """


class UnsupportedSurfaceError(NotImplementedError):
    """The requested surface construction is not available for this surface type."""
