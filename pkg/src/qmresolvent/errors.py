"""Exception types raised by the library."""


class QMError(Exception):
    """Base class for all library errors."""


class NotQuasiMetric(QMError):
    """Some d(i,j) > 0 while d(i,k) + d(k,j) = 0, so no finite constant exists."""

    def __init__(self, witness, message=None):
        self.witness = tuple(int(v) for v in witness)
        super().__init__(message or f"no finite quasi-metric constant; failing triple {self.witness}")


class NotPtolemy(QMError):
    def __init__(self, witness, message=None):
        self.witness = tuple(int(v) for v in witness)
        super().__init__(message or f"st > 0 with max(ac, bd) = 0 at quadruple {self.witness}")


class InfiniteAtReference(QMError):
    def __init__(self, index, reference):
        self.index = int(index)
        self.reference = int(reference)
        super().__init__(f"K({self.index}, {self.reference}) is infinite; refusing to build modifier")


class Unbounded(QMError):
    """The space has infinite d-diameter."""


class NoConvergence(QMError):
    def __init__(self, message, rayleigh=None, residual=None):
        self.rayleigh = rayleigh
        self.residual = residual
        super().__init__(message)


class KernelOverflow(QMError, OverflowError):
    """An iterated kernel left the floating-point range (divergent regime)."""


class SingularSolve(QMError):
    def __init__(self, message, condition=None):
        self.condition = condition
        super().__init__(message)


class DivergentSeries(QMError):
    """Raised where an operation needs ||T|| < 1 and it does not hold."""


class InvalidNorm(QMError, ValueError):
    pass


class DuplicatePoints(QMError, ValueError):
    pass


class BoundaryPoint(QMError, ValueError):
    pass


class EmptyMeasure(QMError, ValueError):
    pass


class ParseError(QMError, ValueError):
    def __init__(self, line, message):
        self.line = line
        super().__init__(f"line {line}: {message}")
