"""Exception hierarchy shared by every stage of the pipeline."""

from __future__ import annotations


class SafeplanError(Exception):
    """Base class; the CLI maps any of these to exit code 2."""


# system model
class ConfigParseError(SafeplanError):
    pass


class ValidationError(SafeplanError):
    pass


class AmbiguousMapping(SafeplanError):
    pass


class TooManyProps(SafeplanError):
    pass


# plan frontend
class PlanSyntaxError(SafeplanError):
    def __init__(self, message: str, line: int = 0, column: int = 0):
        self.line = line
        self.column = column
        where = f" at line {line}, column {column}" if line else ""
        super().__init__(f"{message}{where}")


class UnsupportedConstruct(PlanSyntaxError):
    pass


class UnsupportedNode(SafeplanError):
    pass


# automata
class UnknownProp(SafeplanError):
    pass


class BudgetExceeded(SafeplanError):
    pass


class StateBudgetExceeded(BudgetExceeded):
    pass


class PropSetMismatch(SafeplanError):
    pass


class InvalidConnection(SafeplanError):
    pass


# specifications
class SpecSyntaxError(SafeplanError):
    pass


class NotSafetyFragment(SafeplanError):
    pass


# checking / composition
class NotAFailure(SafeplanError):
    pass


class PreconditionViolated(SafeplanError):
    pass


# harvest
class EndpointUnreachable(SafeplanError):
    pass


class EmptyInput(SafeplanError):
    pass


class IoError(SafeplanError):
    """Writing an artifact failed."""
