"""Exception and warning types shared across the toolkit."""


class PansharpError(Exception):
    """Base class for data errors raised by the library."""


class FormatError(PansharpError, ValueError):
    """A binary file is malformed. ``offset`` is the byte where parsing failed."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class BadMagic(FormatError):
    pass


class UnsupportedVersion(FormatError):
    pass


class TruncatedPayload(FormatError):
    pass


class IoFailure(PansharpError, OSError):
    pass


class UnrepresentableSample(PansharpError, ValueError):
    """Sample values cannot be stored losslessly in the requested file dtype."""


class FactorTooSmall(PansharpError, ValueError):
    pass


class NotDivisible(PansharpError, ValueError):
    pass


class DimensionMismatch(PansharpError, ValueError):
    pass


class DegenerateBand(PansharpError, ValueError):
    pass


class DegenerateHighPass(DegenerateBand):
    pass


class DegenerateBlock(DegenerateBand):
    pass


class DegenerateVariance(DegenerateBand):
    pass


class ZeroMeanBand(PansharpError, ValueError):
    pass


class NotFourBands(PansharpError, ValueError):
    pass


class OutOfRange(PansharpError, ValueError):
    pass


class PatchTooLarge(PansharpError, ValueError):
    pass


class ShapeMismatch(PansharpError, ValueError):
    pass


class DegenerateBatch(PansharpError, ValueError):
    pass


class NoTape(PansharpError, RuntimeError):
    pass


class NonFiniteLoss(PansharpError, FloatingPointError):
    def __init__(self, message: str, step: int | None = None):
        if step is not None:
            message = f"{message} at step {step}"
        super().__init__(message)
        self.step = step


class WeightShapeMismatch(PansharpError, ValueError):
    pass


class VariantMismatch(PansharpError, ValueError):
    pass


class DegenerateDenominatorWarning(RuntimeWarning):
    """Some fusion denominators were floored at epsilon; carries the pixel count."""

    def __init__(self, method: str, count: int):
        super().__init__(f"{method}: {count} denominator value(s) floored at epsilon")
        self.method = method
        self.count = count
