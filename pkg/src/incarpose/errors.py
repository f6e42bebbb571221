"""Exception types shared across the package."""


class InvalidArgumentError(ValueError):
    pass


class DomainError(ValueError):
    """Input lies outside the mathematical domain of the operation (e.g. not in SO(3))."""


class DegenerateInputError(ValueError):
    """Input is numerically degenerate: zero norm, rank deficiency."""


class ShapeError(ValueError):
    pass


class UndefinedDirectionError(ValueError):
    """A translation direction is requested for a (near) zero vector."""


class EmptyOverlapError(ValueError):
    pass


class StaleTapeError(RuntimeError):
    """backward() was called on a graph that has already been consumed."""


class DegenerateOutputError(DegenerateInputError):
    """A raw network output cannot be mapped to a rotation (zero quaternion, rank-deficient matrix)."""
