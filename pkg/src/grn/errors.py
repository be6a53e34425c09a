"""Error taxonomy shared across the package."""


class GrnError(Exception):
    """Base class for all package errors."""


class ContractError(GrnError, ValueError):
    """An operation was called with arguments violating its contract."""


class DataError(GrnError, ValueError):
    """Input data (labels, files, masks) is malformed or out of range."""


class ConfigError(GrnError, ValueError):
    """A configuration value is invalid or inconsistent."""


class NumericError(GrnError, ArithmeticError):
    """Non-finite values where finite ones are required."""


class CheckError(GrnError, RuntimeError):
    """A verification procedure could not be carried out."""


class StageError(GrnError, RuntimeError):
    """A pipeline stage failed; carries the stage name."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage
