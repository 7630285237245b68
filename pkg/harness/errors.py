"""Exception hierarchy for the PromptGate simulator."""
from typing import Optional


class PromptGateError(Exception):
    """Root of every error raised by the harness."""


# ----------------------------------------------------------------------
# Embeddings and datasets
# ----------------------------------------------------------------------

class ZeroNormError(PromptGateError, ValueError):
    """A vector too close to zero to be normalized."""


class InvalidSpecError(PromptGateError, ValueError):
    """Synthetic benchmark spec violates its invariants."""


class ParseError(PromptGateError, ValueError):
    """Malformed row in an embedding import file."""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class DimensionMismatchError(ParseError):
    """Row width disagrees with the dimension declared by the header."""


class DuplicateSampleIdError(PromptGateError, ValueError):
    """Two samples share a sample_id."""


# ----------------------------------------------------------------------
# Prompt engine and task model
# ----------------------------------------------------------------------

class InvalidShapeError(PromptGateError, ValueError):
    pass


class ShapeMismatchError(PromptGateError, ValueError):
    pass


class NonPositiveTemperatureError(PromptGateError, ValueError):
    pass


class EmptyBatchError(PromptGateError, ValueError):
    pass


class InvalidLabelError(PromptGateError, ValueError):
    """Prompt label outside the slots 0..C (C is the OOD slot)."""


class InvalidClassError(PromptGateError, ValueError):
    """Probe label outside the ID classes 0..C-1."""


class UntrainedModelError(PromptGateError, RuntimeError):
    """A probe was used for acquisition before it was ever fit."""


class ZeroWeightSumError(PromptGateError, ValueError):
    pass


# ----------------------------------------------------------------------
# Gate, metrics
# ----------------------------------------------------------------------

class MissingBankError(PromptGateError, ValueError):
    pass


class EmptyQuerySetError(PromptGateError, ValueError):
    pass


class ZeroDenominatorError(PromptGateError, ValueError):
    pass


class EmptyPoolError(PromptGateError, ValueError):
    pass


class NoLabelsError(PromptGateError, ValueError):
    pass


class MissingStratumError(PromptGateError, ValueError):
    """Test set lacks the ID or OOD samples a metric needs."""


# ----------------------------------------------------------------------
# Configuration, wire format, orchestration
# ----------------------------------------------------------------------

class SchemaError(PromptGateError, ValueError):
    """Config key unknown, missing or ill-typed."""

    def __init__(self, message: str, key_path: str = "", line: Optional[int] = None):
        self.key_path = key_path
        self.line = line
        where = key_path or "<root>"
        if line is not None:
            where += f" (line {line})"
        super().__init__(f"{where}: {message}")


class WireFormatError(PromptGateError, ValueError):
    pass


class ExperimentError(PromptGateError, RuntimeError):
    pass
