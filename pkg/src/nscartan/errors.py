"""Exception hierarchy; CLI exit codes hang off these classes."""


class NscartanError(Exception):
    """Base class for package errors."""

    exit_code = 1


class HypothesisError(NscartanError):
    """An arithmetic hypothesis (Cartan-Heegner, precondition) is violated."""

    exit_code = 2


class PrecisionError(NscartanError):
    """Numerics too coarse: ambiguous rank, non-convergence, tiny imaginary part."""

    exit_code = 3


class RecognitionError(NscartanError):
    """A numeric value could not be certified as an exact algebraic quantity."""

    exit_code = 4


class NoSolutionError(NscartanError):
    """An exact equation has no solution (bad cocycle, non-member, ...)."""

    exit_code = 2


class InsufficientCoefficientsError(PrecisionError):
    """q-expansion truncation too short for the requested evaluation."""

    exit_code = 3

    def __init__(self, needed: int, available: int):
        super().__init__(
            f"evaluation needs coefficients up to n = {needed}, only {available} available"
        )
        self.needed = needed
        self.available = available
