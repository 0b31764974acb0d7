"""Block-diagram ODE simulator with explicit and implicit integrators."""

from __future__ import annotations

from pathlib import Path

from .assembly import SystemGraph, build
from .config import EventConfig, SolveSpec, SolverConfig
from .errors import (AssemblyError, ConfigError, ConvergenceError, FlowsimError, NetlistError,
                     OutputError, ParamError, TemplateError)
from .netlist import FlatNetlist, flatten, parse, parse_file
from .solvers import TransientResult, run_transient

__version__ = "0.1.0"


def load(source, text: bool = False) -> FlatNetlist:
    """Parse and flatten a netlist file (or netlist text with ``text=True``)."""
    if text:
        return flatten(parse(source))
    return flatten(parse_file(Path(source)))


def simulate(flat: FlatNetlist, keep_states: bool = False, **overrides):
    """Build and run ``flat``; ``overrides`` replace fields of its solve spec.

    Returns ``(graph, result)``.
    """
    spec = flat.solve.with_overrides(**overrides)
    graph = build(flat)
    result = run_transient(graph, spec.solver_config(), spec.event_config(), flat.outputs,
                           flat.output_files or None, keep_states=keep_states)
    return graph, result


__all__ = [
    "load", "simulate", "build", "parse", "parse_file", "flatten", "run_transient",
    "SystemGraph", "FlatNetlist", "TransientResult", "SolveSpec", "SolverConfig", "EventConfig",
    "FlowsimError", "NetlistError", "ParamError", "ConfigError", "TemplateError",
    "AssemblyError", "ConvergenceError", "OutputError",
]
