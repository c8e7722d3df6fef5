"""Exception types shared across the toolkit."""


class SyntaxProbeError(Exception):
    """Base class for all toolkit errors."""


class DataError(SyntaxProbeError):
    """Malformed or inconsistent input data (CLI exit code 2)."""


class TreebankParseError(DataError):
    """Structural error in a CoNLL-U input, reported with its line number."""

    def __init__(self, message: str, line_no: int | None = None):
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)
        self.line_no = line_no


class FeatureFormatError(DataError):
    """A feature file does not conform to the binary interchange format."""


class ManifestError(DataError):
    """A feature manifest is missing, unreadable, or inconsistent."""


class TrainingDivergedError(SyntaxProbeError):
    """Non-finite values appeared during optimization (CLI exit code 3)."""
