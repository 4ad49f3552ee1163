"""Exception types raised across the package."""


class MulticoreGapError(Exception):
    """Base class for all package errors."""


class ConfigError(MulticoreGapError, ValueError):
    pass


class InvalidCoreCount(MulticoreGapError, ValueError):
    pass


class DegenerateCore(MulticoreGapError, ValueError):
    """A two-qubit intracore gate was requested on a single-qubit core."""


class CapExceeded(MulticoreGapError, ValueError):
    pass


class IndexOutOfRange(MulticoreGapError, IndexError):
    pass


class EqualQubits(MulticoreGapError, ValueError):
    pass


class LengthMismatch(MulticoreGapError, ValueError):
    pass


class NotNormalized(MulticoreGapError, ValueError):
    pass


class TooFewSamples(MulticoreGapError, ValueError):
    pass


class OutOfRange(MulticoreGapError, ValueError):
    pass


class NotUnitary(MulticoreGapError, ValueError):
    pass


class NoConvergence(MulticoreGapError, RuntimeError):
    pass


class SpectrumAnomaly(MulticoreGapError, RuntimeError):
    """An eigenvalue of a stochastic operator lies outside the unit disk."""


class NoSubleadingEigenvalue(MulticoreGapError, ValueError):
    """Every eigenvalue of the operator sits on the unit circle."""


class TooFewPoints(MulticoreGapError, ValueError):
    pass


class NonpositiveEigenvalue(MulticoreGapError, ValueError):
    pass


class BoundaryPoint(MulticoreGapError, ValueError):
    pass


class NoOverlap(MulticoreGapError, ValueError):
    pass
