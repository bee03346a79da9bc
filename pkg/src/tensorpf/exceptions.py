"""Exception hierarchy shared by the library and the command line."""


class TensorPFError(Exception):
    """Base class for every error raised by tensorpf."""


class DimensionError(TensorPFError, ValueError):
    """Operand shapes do not match the tensor or map they are used with."""


class NegativeCoefficientError(TensorPFError, ValueError):
    """A tensor entry or monomial coefficient is negative."""


class DegreeError(TensorPFError, ValueError):
    """An exponent ``delta_i`` is smaller than the degree of ``P_i``."""


class VanishingSliceError(TensorPFError, ValueError):
    """Some slice of the tensor is identically zero.

    The offending slot (0-based) and index are stored in ``slot`` and
    ``index``.
    """

    def __init__(self, slot, index):
        self.slot = slot
        self.index = index
        super().__init__(
            f"slice {index} of slot {slot} is identically zero; "
            "every coordinate of the map would vanish there"
        )


class NotPrimitive(TensorPFError):
    """The di-graph of the map is not weakly primitive.

    ``cyclicity`` holds the gcd of circuit lengths (``None`` when the graph
    is not even strongly connected).
    """

    def __init__(self, message, cyclicity=None, strongly_connected=False):
        self.cyclicity = cyclicity
        self.strongly_connected = strongly_connected
        super().__init__(message)


class NonMonotoneMap(TensorPFError):
    """The power algorithm was asked to run on a non-monotone map."""


class MaxIterExceeded(TensorPFError):
    """The iteration did not reach the tolerance.

    ``solution`` carries the last iterate together with its Collatz-Wielandt
    bracket so callers can still inspect it.
    """

    def __init__(self, message, solution=None):
        self.solution = solution
        super().__init__(message)


class ProblemFileError(TensorPFError, ValueError):
    """A problem or candidate file could not be parsed or validated."""
