"""Exception hierarchy shared across the package."""


class SegthermError(Exception):
    """Base class for all package-specific errors."""


class ShapeError(SegthermError):
    """Tensor dimensions do not satisfy an operation's contract."""


class SequenceTooShort(SegthermError):
    """Sequence too short for the requested sampling/segmentation config."""

    def __init__(self, message, scale=None):
        super().__init__(message)
        self.scale = scale


class InvalidKernel(SegthermError):
    """Segment convolution kernel size must be odd."""


class CheckFailed(SegthermError):
    """Gradient check could not be completed (non-finite loss)."""


class FormatError(SegthermError):
    """Binary file is corrupt, truncated, or carries a bad magic."""


class UnsupportedVersion(FormatError):
    """Binary file has a format version this build cannot read."""


class AlphabetError(SegthermError):
    """Sequence contains a letter outside the 20 canonical amino acids."""


class ParseError(SegthermError):
    """Malformed dataset row; carries the 1-based line number."""

    def __init__(self, message, line=None):
        super().__init__(message)
        self.line = line


class DuplicateError(SegthermError):
    """Duplicate accession in a dataset or manifest."""


class MissingInput(SegthermError):
    """A required embedding or file is absent; names the accession."""

    def __init__(self, accession):
        super().__init__(f"missing input for accession {accession!r}")
        self.accession = accession


class MissingVariant(SegthermError):
    """Variant provider cannot supply an embedding for (position, letter)."""

    def __init__(self, position, letter):
        super().__init__(f"no variant embedding for position {position}, letter {letter!r}")
        self.position = position
        self.letter = letter


class ConfigMismatch(SegthermError):
    """Checkpoint tensors do not match the requested model configuration."""


class StepRejected(SegthermError):
    """Optimizer step rejected because a gradient was non-finite."""


class UndefinedMetric(SegthermError):
    """Correlation undefined (constant input vector)."""
