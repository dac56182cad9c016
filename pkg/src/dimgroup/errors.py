"""Exception types and sentinel values shared across the package."""

from __future__ import annotations


class DimGroupError(Exception):
    """Base class for contract failures raised by this package."""

    exit_code = 1


class ShapeMismatch(DimGroupError):
    pass


class DegenerateBasis(DimGroupError):
    pass


class LevelOutOfRange(DimGroupError):
    pass


class InvalidL(DimGroupError):
    pass


class NoWindow(DimGroupError):
    pass


class EntryTooSmall(DimGroupError):
    pass


class Infeasible(DimGroupError):
    pass


class InvalidInput(DimGroupError):
    """Malformed or inconsistent input data (exit code 2 at the CLI)."""

    exit_code = 2


class Exhaustion(DimGroupError):
    """A bounded search or refinement ran out of budget."""

    exit_code = 3

    def __init__(self, message: str, **diagnostics):
        super().__init__(message)
        self.diagnostics = diagnostics


class PrecisionExhausted(Exhaustion):
    pass


class LevelExhausted(Exhaustion):
    pass


class SearchExhausted(Exhaustion):
    pass


class GenerationFailed(Exhaustion):
    pass


class BigIntLimitExceeded(Exhaustion):
    pass


class _Sentinel:
    __slots__ = ("_name",)

    def __init__(self, name: str):
        self._name = name

    def __repr__(self) -> str:
        return self._name

    def __bool__(self) -> bool:
        raise TypeError(f"{self._name} has no truth value")

    def __reduce__(self):
        return self._name


Undecided = _Sentinel("Undecided")
NoSolution = _Sentinel("NoSolution")
