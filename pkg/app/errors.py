"""Exception types raised across the package.

Each failure kind named by a module gets its own class; all of them derive
from :class:`VGSError` and from the closest builtin so callers may catch
either.
"""
from typing import Iterable, List, Optional


class VGSError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(VGSError, ValueError):
    def __init__(self, field: str, message: str) -> None:
        self.field = field
        super().__init__(f"{field}: {message}")


class DimensionError(VGSError, ValueError):
    pass


class NumericError(VGSError, ArithmeticError):
    pass


class TokenIndexError(VGSError, IndexError):
    pass


class ContractError(VGSError, RuntimeError):
    pass


class LengthError(VGSError, ValueError):
    pass


class DataError(VGSError, ValueError):
    pass


class CompatibilityError(VGSError, ValueError):
    def __init__(self, fields: Iterable[str], message: str = "incompatible checkpoint") -> None:
        self.fields: List[str] = list(fields)
        super().__init__(f"{message}: {', '.join(self.fields)}")


class ChecksumError(VGSError, ValueError):
    pass


class FormatError(VGSError, ValueError):
    pass


class GrammarError(VGSError, ValueError):
    pass


class VocabularyError(VGSError, KeyError):
    def __str__(self) -> str:  # KeyError quotes its argument otherwise
        return str(self.args[0]) if self.args else ""


class ProtocolError(VGSError, ValueError):
    pass


class TrainingError(VGSError, RuntimeError):
    def __init__(self, step: int, message: str) -> None:
        self.step = step
        super().__init__(f"step {step}: {message}")


class ReportError(VGSError, ValueError):
    def __init__(self, missing: Iterable[str], message: Optional[str] = None) -> None:
        self.missing: List[str] = list(missing)
        super().__init__(message or f"missing runs: {', '.join(self.missing)}")
