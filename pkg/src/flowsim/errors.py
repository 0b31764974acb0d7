"""Exception hierarchy.

Every error carries a ``category`` that maps onto the CLI exit code:
parse (1), assemble (2), converge (3), io (4).
"""

from __future__ import annotations


class FlowsimError(Exception):
    category = "error"
    exit_code = 1

    def __init__(self, message: str, **context):
        super().__init__(message)
        self.message = message
        self.context = context

    def __str__(self) -> str:
        extra = ", ".join(f"{k}={v}" for k, v in self.context.items() if v is not None)
        return f"{self.message} ({extra})" if extra else self.message


class NetlistError(FlowsimError):
    """Syntax or semantic problem in netlist text."""

    category = "parse"
    exit_code = 1

    def __init__(self, message: str, line: int | None = None, col: int | None = None,
                 source: str | None = None):
        super().__init__(message)
        self.line = line
        self.col = col
        self.source = source

    def __str__(self) -> str:
        loc = []
        if self.source:
            loc.append(str(self.source))
        if self.line is not None:
            loc.append(f"line {self.line}")
        if self.col is not None:
            loc.append(f"col {self.col}")
        return f"{', '.join(loc)}: {self.message}" if loc else self.message


class ParamError(NetlistError):
    """Parameter expression could not be evaluated (unbound name, domain error)."""


class ConfigError(FlowsimError):
    category = "parse"
    exit_code = 1


class TemplateError(FlowsimError):
    """A block template violates the template contract."""

    category = "assemble"
    exit_code = 2


class AssemblyError(FlowsimError):
    category = "assemble"
    exit_code = 2


class ConvergenceError(FlowsimError):
    """Run aborted: Newton failure, step-size underflow or non-finite values."""

    category = "converge"
    exit_code = 3


class NewtonFailure(ConvergenceError):
    def __init__(self, message: str, iterations: int = 0, **context):
        super().__init__(message, **context)
        self.iterations = iterations


class OutputError(FlowsimError):
    category = "io"
    exit_code = 4
