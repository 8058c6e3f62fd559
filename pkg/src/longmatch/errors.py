"""Exception hierarchy shared across the package.

``InputError`` subclasses signal bad user input (malformed files, invalid
labels, missing content) and map to CLI exit code 2; everything else under
``LongmatchError`` is an internal failure and maps to exit code 1.
"""


class LongmatchError(Exception):
    """Base class for all package-specific errors."""


class InputError(LongmatchError):
    """Invalid user-supplied input (files, labels, configuration)."""


class EmptyDocument(InputError):
    """Raised when a document has no non-whitespace content."""


class ParseError(InputError):
    """A dataset line could not be parsed.

    Carries the 1-based line number of the offending record.
    """

    def __init__(self, line_no: int, reason: str):
        self.line_no = line_no
        self.reason = reason
        super().__init__(f"line {line_no}: {reason}")


class LabelError(InputError):
    """A dataset label is outside {0, 1}."""

    def __init__(self, line_no: int, label):
        self.line_no = line_no
        self.label = label
        super().__init__(f"line {line_no}: label must be 0 or 1, got {label!r}")


class NotStochastic(LongmatchError):
    """A nonzero matrix column does not sum to 1 within tolerance."""

    def __init__(self, col: int, total: float):
        self.col = col
        self.total = total
        super().__init__(f"column {col} sums to {total!r}, expected 1")


class NegativeEntry(LongmatchError):
    """A transition matrix entry is negative."""

    def __init__(self, row: int, col: int, value: float):
        self.row = row
        self.col = col
        self.value = value
        super().__init__(f"negative entry {value!r} at ({row}, {col})")


class SequenceTooShort(InputError):
    """max_len cannot hold [CLS], one token and two [SEP] markers."""


class NonFinite(LongmatchError):
    """A forward or backward pass produced NaN or infinite values."""


class DivergedAt(LongmatchError):
    """Training loss became NaN at the given optimizer step."""

    def __init__(self, step: int):
        self.step = step
        super().__init__(f"training diverged at step {step}")


class CheckpointError(InputError):
    """A checkpoint file is missing, truncated or malformed."""
