from __future__ import annotations

from typing import Any


class PicseError(RuntimeError):
    """Base error. ``module`` names the pipeline stage, ``assumption`` an A-tag."""

    module = "picse"

    def __init__(self, message: str, *, assumption: str | None = None, **context: Any) -> None:
        super().__init__(message)
        self.assumption = assumption
        self.context = context

    def describe(self) -> str:
        text = f"error [{self.module}] {self}"
        if self.assumption:
            text += f" (diagnostic: assumption {self.assumption})"
        return text


class ConfigError(PicseError):
    module = "config"


class SchemaError(PicseError):
    module = "dataset"

    def __init__(self, message: str, *, row: int | None = None, column: str | None = None, **kw: Any) -> None:
        where = []
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column!r}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message, **kw)
        self.row = row
        self.column = column


class ParseError(SchemaError):
    pass


class DimensionError(PicseError):
    module = "dataset"


class ConvergenceError(PicseError):
    module = "index_model"

    def __init__(self, message: str, *, last_iterate: Any = None, score_norm: float | None = None, **kw: Any) -> None:
        super().__init__(message, **kw)
        self.last_iterate = last_iterate
        self.score_norm = score_norm


class SeparationError(ConvergenceError):
    pass


class ConditioningError(PicseError):
    module = "index_model"


class DegenerateError(PicseError):
    module = "caliper"


class ConsistencyError(PicseError):
    module = "internal"


class EstimateUndefinedError(PicseError):
    module = "effect"


class FineStratumError(PicseError):
    module = "effect"


class InvalidArgumentError(PicseError, ValueError):
    module = "args"


class PicseWarning(UserWarning):
    pass


class DegenerateIndexWarning(PicseWarning):
    pass


class PenaltyWarning(PicseWarning):
    pass


class GenerationWarning(PicseWarning):
    pass
