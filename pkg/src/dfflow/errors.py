"""Exception taxonomy shared across the toolkit.

Every error raised by dfflow derives from DfflowError so callers (and the
CLI) can catch one type. Subclasses mirror the failure modes of each stage.
"""


class DfflowError(Exception):
    """Base class for all dfflow errors."""


# --- media decoding -------------------------------------------------------

class MalformedHeader(DfflowError):
    pass


class TruncatedFrame(DfflowError):
    pass


class UnsupportedColorspace(DfflowError):
    pass


class DecodeError(DfflowError):
    pass


class DimensionMismatch(DfflowError):
    pass


class EmptyInput(DfflowError):
    pass


class NotEnoughFrames(DfflowError):
    pass


# --- ROI handling ---------------------------------------------------------

class RoiParseError(DfflowError):
    pass


class DuplicateIndex(DfflowError):
    pass


class AbsentBox(DfflowError):
    pass


# --- optical flow ---------------------------------------------------------

class DegenerateFrame(DfflowError):
    pass


class BadMagic(DfflowError):
    pass


class TruncatedFile(DfflowError):
    pass


# --- neural core ----------------------------------------------------------

class ShapeMismatch(DfflowError):
    pass


class OddDimension(DfflowError):
    pass


class InvalidDistribution(DfflowError):
    pass


# --- model / training -----------------------------------------------------

class InvalidConfig(DfflowError):
    pass


class EmptyDataset(DfflowError):
    pass


# --- metrics --------------------------------------------------------------

class LengthMismatch(DfflowError):
    pass


class SingleClass(DfflowError):
    pass


# --- experiment harness ---------------------------------------------------

class ManifestParseError(DfflowError):
    pass


class BadLabel(DfflowError):
    pass


class TooFewSamples(DfflowError):
    pass


class EmptyResults(DfflowError):
    pass


class StageError(DfflowError):
    """Wraps a failure with the pipeline stage it occurred in."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"[{stage}] {cause}")
        self.stage = stage
        self.cause = cause


# --- synthetic data -------------------------------------------------------

class InvalidSpec(DfflowError):
    pass
