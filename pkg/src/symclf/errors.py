"""Exception types shared across the package.

Grouped by the layer that raises them; all inherit from SymclfError so a
caller (e.g. the CLI) can map failures to exit codes in one place.
"""


class SymclfError(Exception):
    """Base class for all package-specific errors."""


# --- expression layer ---------------------------------------------------

class PrefixSequenceError(SymclfError):
    """A preorder token sequence does not encode exactly one tree."""


class IncompleteSequence(PrefixSequenceError):
    """Token arities leave open child slots at the end of the sequence."""


class OverfullSequence(PrefixSequenceError):
    """Tokens remain after the tree has closed."""


class UnknownToken(SymclfError):
    """Token name not present in the library (or missing a complexity)."""


class FeatureIndexOutOfRange(SymclfError):
    """A feature token refers to a column the data set does not have."""


# --- grammar / policy layer ----------------------------------------------

class DeadEnd(SymclfError):
    """Constraint mask left no admissible token (inconsistent min/max config)."""


class ZeroProbability(SymclfError):
    """A sequence contains a token that was masked out at its step."""


# --- classification layer -------------------------------------------------

class LengthMismatch(SymclfError):
    """Prediction and truth vectors differ in length."""


class EmptyDataset(SymclfError):
    """Metric requested over zero rows."""


# --- trainer / pareto layer ------------------------------------------------

class EmptyBatch(SymclfError):
    """Quantile of an empty reward vector."""


class EmptyArchive(SymclfError):
    """Pareto front requested over an empty candidate archive."""


class EmptyFront(SymclfError):
    """Elbow selection over an empty front."""


class ConfigInvalid(SymclfError):
    """A run configuration violates its invariants."""


class DataInvalid(SymclfError):
    """Data unusable for the requested operation (e.g. single-class train split)."""


# --- rules layer ------------------------------------------------------------

class OutOfRange(SymclfError):
    """Argument outside its documented domain (e.g. threshold not in (0,1))."""


class NotReducible(SymclfError):
    """A rule-extraction case does not simplify within the supported fragment."""


# --- data layer --------------------------------------------------------------

class SchemaMismatch(SymclfError):
    """CSV header does not contain the expected columns."""


class CsvParseError(SymclfError):
    """A CSV row failed validation; carries the 1-based row number."""

    def __init__(self, row: int, message: str):
        super().__init__(f"row {row}: {message}")
        self.row = row


class SingleClass(SymclfError):
    """An operation that needs both classes saw only one."""
