"""Exception types shared across the package.

Everything derives from :class:`PolyError` so callers can catch the whole
family; most subclasses also inherit a fitting builtin (ValueError or
IndexError) so they behave naturally in generic code. Plain I/O failures
are raised as builtin OSError.
"""


class PolyError(Exception):
    """Base class for all polymp errors."""


# geometry
class GeometryError(PolyError, ValueError):
    pass


class NonPositiveFactor(GeometryError):
    """Scale factor was zero or negative."""


class DegenerateShear(GeometryError):
    """Shear angle at or beyond 90 degrees."""


class ZeroExtent(GeometryError):
    """Polygon bounding box is a single point; cannot normalize."""


class ExteriorCollapsed(GeometryError):
    """Simplification reduced the exterior ring below 3 vertices."""


class RingTooShort(GeometryError):
    """A ring was given with fewer than 3 distinct vertices."""


class ParseError(PolyError, ValueError):
    """Malformed WKT or GeoJSON input; carries a position when known."""

    def __init__(self, message, pos=None):
        if pos is not None:
            message = f"{message} (at position {pos})"
        super().__init__(message)
        self.pos = pos


class UnsupportedGeometry(ParseError):
    """Feature geometry is not a simple Polygon."""


class MissingLabel(ParseError):
    """Feature lacks the configured label property."""


# graph
class InvalidGraph(PolyError, ValueError):
    pass


class InvalidPermutation(InvalidGraph):
    """Permutation is not a bijection on node indices."""


class TooManyVertices(InvalidGraph):
    """Graph does not fit the requested padded sequence length."""


# tensor engine
class TensorError(PolyError):
    pass


class ShapeMismatch(TensorError, ValueError):
    pass


class IndexOutOfRange(TensorError, IndexError):
    pass


class NotScalar(TensorError, ValueError):
    """backward() called on a non-scalar tensor."""


class TapeConsumed(TensorError, RuntimeError):
    """backward() called twice on the same computation."""


# models
class EmptyGraph(PolyError, ValueError):
    """Model forward received an empty batch or a graph with no nodes."""


class IncompatibleCheckpoint(PolyError, ValueError):
    """Checkpoint shapes or label space do not match the requested use."""


# training
class MissingGradient(PolyError, RuntimeError):
    """Optimizer step requested before gradients were populated."""


class EmptyDataset(PolyError, ValueError):
    pass


class LabelOutOfRange(PolyError, ValueError):
    pass


class IncompatibleBackbone(PolyError, ValueError):
    """Pretrained feature layers do not fit the fine-tune target."""


# dataset
class InvalidRatio(PolyError, ValueError):
    """Transformation ratio outside the supported set."""


class CorruptRecord(PolyError, ValueError):
    """Dataset file line failed to parse or validate; carries line number."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


# cli / experiments
class SampleNotFound(PolyError, KeyError):
    pass


class GradCheckFailed(PolyError, RuntimeError):
    """Finite-difference check exceeded tolerance; carries the worst tensor."""

    def __init__(self, message, worst_name=None, worst_err=None):
        super().__init__(message)
        self.worst_name = worst_name
        self.worst_err = worst_err
