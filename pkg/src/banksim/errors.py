from __future__ import annotations

from typing import Optional, Sequence, Tuple


class BanksimError(Exception):
    pass


class DomainError(BanksimError, ValueError):
    """The state is outside the region where the closed-form banking model holds."""

    def __init__(self, message: str, index: Optional[int] = None) -> None:
        if index is not None:
            message = f"record {index}: {message}"
        super().__init__(message)
        self.index = index


class ParseError(BanksimError, ValueError):
    def __init__(self, message: str, line: int) -> None:
        super().__init__(f"line {line}: {message}")
        self.line = line


class SchemaError(BanksimError, KeyError):
    def __init__(self, column: str, source: str = "") -> None:
        message = f"missing column {column!r}"
        if source:
            message += f" in {source}"
        super().__init__(message)
        self.column = column

    def __str__(self) -> str:
        # KeyError would otherwise repr() the message
        return str(self.args[0])


class SingularMassError(BanksimError, ArithmeticError):
    pass


class ConfigError(BanksimError, ValueError):
    pass


class RankWarning(UserWarning):
    def __init__(self, message: str, columns: Sequence[str] = ()) -> None:
        super().__init__(message)
        self.columns: Tuple[str, ...] = tuple(columns)
