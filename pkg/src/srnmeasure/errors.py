"""Exception hierarchy. Each class maps to one CLI exit code."""


class SrnError(Exception):
    exit_code = 1


class ParseError(SrnError):
    """Syntax or semantic error in a network document."""

    exit_code = 2

    def __init__(self, message, line=None, column=None, expected=None):
        self.line = line
        self.column = column
        self.expected = list(expected or [])
        where = ""
        if line is not None:
            where = f"line {line}"
            if column is not None:
                where += f", column {column}"
            where += ": "
        tail = ""
        if self.expected:
            tail = " (expected " + " or ".join(self.expected) + ")"
        super().__init__(where + message + tail)


class AssumptionError(SrnError):
    """The chain violates (A1) or (A2), or a precondition on its structure."""

    exit_code = 3


class ScopeError(SrnError):
    """The requested analysis does not apply to this chain."""

    exit_code = 4


class NumericalBreakdown(SrnError):
    exit_code = 5

    def __init__(self, message, **details):
        self.details = details
        super().__init__(message)


class InternalInconsistency(NumericalBreakdown):
    """A theorem-guaranteed property failed; signals a broken premise, never patched."""
