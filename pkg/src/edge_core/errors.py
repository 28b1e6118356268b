# edge_core/errors.py

from typing import Any, Dict, Optional


class EdgeCoreError(Exception):
    """Base class for every error raised by the optimizer."""


class InvalidScenarioError(EdgeCoreError, ValueError):
    pass


class ConfigError(EdgeCoreError, ValueError):
    pass


class SchemaError(EdgeCoreError, ValueError):
    """Malformed JSON document; `path` names the offending field."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


class InfeasiblePairError(EdgeCoreError):
    """A user-server pair has zero rate or speed where a finite cost is required."""

    def __init__(self, n: int, m: int, message: str):
        self.n = n
        self.m = m
        super().__init__(f"pair (user {n}, server {m}): {message}")


class InfeasibleProblemError(EdgeCoreError):
    def __init__(self, message: str, diagnostics: Optional[Dict[str, Any]] = None):
        self.diagnostics = diagnostics or {}
        super().__init__(message)


class UndefinedRatioError(EdgeCoreError, ZeroDivisionError):
    pass


class RoundingError(EdgeCoreError):
    pass


class NonConvergenceError(EdgeCoreError):
    pass


class OracleRefusedError(EdgeCoreError):
    pass
