"""Exception taxonomy shared across the toolkit.

Every contract violation raises a subclass of :class:`CondkitError`, so callers
(and the CLI) can distinguish data/contract failures from ordinary usage
mistakes with a single except clause.
"""


class CondkitError(Exception):
    """Base class for all toolkit contract errors."""


# --- tensor file I/O ---------------------------------------------------------

class NpyFormatError(CondkitError):
    """A file violates the accepted NPY v1.0 subset."""


class MagicMismatch(NpyFormatError):
    """Missing or wrong magic/version prefix."""


class UnsupportedDtype(NpyFormatError):
    """descr is not little-endian float32/float64."""


class FortranOrderUnsupported(NpyFormatError):
    """fortran_order is true; only C order is accepted."""


class TruncatedPayload(NpyFormatError):
    """Payload byte count does not equal product(shape) * itemsize."""


class NonFiniteValue(CondkitError):
    """A report contains NaN or infinity."""


class IoFailure(CondkitError):
    """Underlying OS-level read/write failure."""


# --- metrics -----------------------------------------------------------------

class ZeroNormRow(CondkitError):
    """A row of the embedding matrix has zero norm."""

    def __init__(self, row: int):
        super().__init__(f"row {row} has zero norm")
        self.row = row


class TooSmall(CondkitError):
    """Not enough rows for the requested statistic."""


class AllZeroVector(CondkitError):
    """Participation ratio is undefined for the zero vector."""


class OutOfRange(CondkitError):
    """A scalar argument is outside its documented range."""


class NonPositiveTau(CondkitError):
    """Magnitude thresholds must be > 0."""


class BadEdges(CondkitError):
    """Histogram edges must be strictly ascending, length >= 2."""


# --- pruning -----------------------------------------------------------------

class BadConfig(CondkitError):
    """Inconsistent prune/schedule configuration."""


class KTooLarge(CondkitError):
    """Top-k count exceeds the vector dimension."""


# --- adaln -------------------------------------------------------------------

class OddDim(CondkitError):
    """Sinusoidal embedding width must be even and >= 2."""


class LengthMismatch(CondkitError):
    """Vectors being combined have different lengths."""


class ShapeMismatch(CondkitError):
    """Matrix/vector shapes are inconsistent."""


class WidthMismatch(CondkitError):
    """Hidden vector and modulation parameters disagree on width."""


# --- toy model ---------------------------------------------------------------

class BadClassCount(CondkitError):
    """Dataset needs at least 2 classes."""


class BadSchedule(CondkitError):
    """Invalid diffusion schedule endpoints or length."""


class BadTimestep(CondkitError):
    """Timestep outside 1..T."""


class NonFiniteLoss(CondkitError):
    """Training diverged; the partial trace is attached."""

    def __init__(self, step: int, trace):
        super().__init__(f"non-finite loss at step {step}")
        self.step = step
        self.trace = trace


# --- sampling / evaluation ---------------------------------------------------

class UntrainedParams(CondkitError):
    """Model parameters look untrained (all residual gates still zero)."""


class EmptyClass(CondkitError):
    """A class has fewer than 2 samples; mixture statistics undefined."""


class CountMismatch(CondkitError):
    """Evaluations being compared used different sample counts."""


# --- sparse kernels ----------------------------------------------------------

class DimMismatch(CondkitError):
    """Sparse vector dimension does not match the matrix."""


class BadParams(CondkitError):
    """Benchmark parameters outside their documented ranges."""
