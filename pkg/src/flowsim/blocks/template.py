"""Block template contract.

A template declares its variable roster (inputs, outputs, auxiliary
variables), its parameters and the equations it contributes:

* ``evaluate`` templates give outputs as algebraic functions of inputs
  (and time, for sources).  For implicit methods the same relation is
  exposed as the residual ``g_k = y_k - out_k(inputs)``.
* ``integrate`` templates give ``d(var)/dt = f_i(...)`` for each of their
  state variables.  The implicit path reports ``g_i = f_i`` and the time
  discretisation is applied by the assembler.

Both paths call the same template function, so explicit and implicit
methods always see the same ODE.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Mapping, Optional

from ..errors import AssemblyError, ParamError, TemplateError


class Kind(str, Enum):
    EVALUATE = "evaluate"
    INTEGRATE = "integrate"


class JacobianKind(str, Enum):
    CONSTANT = "constant"
    VARIABLE = "variable"


class Mode(str, Enum):
    """What the caller expects from a template call (the ``flags`` of the call)."""

    STARTUP = "startup"
    EXPLICIT_F = "explicit_f"
    IMPLICIT_G = "implicit_g"
    IMPLICIT_DGDX = "implicit_dgdx"
    OUT_PARAMS = "out_params"
    ONE_TIME = "one_time"


Params = Mapping[str, Any]
Signals = Mapping[str, float]


@dataclass(frozen=True)
class BlockEvalRequest:
    mode: Mode
    t: float = 0.0
    signal_values: Signals = field(default_factory=dict)


@dataclass
class BlockEvalResult:
    mode: Mode
    outputs: Optional[dict] = None
    f: Optional[list] = None
    g: Optional[list] = None
    dgdx: Optional[dict] = None
    out_params: Optional[dict] = None
    startup: Optional[dict] = None
    one_time: Optional[tuple] = None


@dataclass
class BlockRuntimeState:
    """Per-run mutable state of one block instance."""

    one_time_reals: Optional[tuple] = None
    history: deque = field(default_factory=lambda: deque(maxlen=3))
    last_break_emitted: Optional[float] = None

    def push(self, t: float, inputs: Mapping[str, float]) -> None:
        if self.history and t <= self.history[-1][0]:
            raise ValueError(f"history time {t!r} not after {self.history[-1][0]!r}")
        self.history.append((t, dict(inputs)))

    def set_one_time(self, values: tuple) -> None:
        if self.one_time_reals is not None:
            raise RuntimeError("one-time parameters already computed for this run")
        self.one_time_reals = tuple(values)


def _names(pairs):
    return [name for name, _ in pairs]


@dataclass(frozen=True)
class BlockTemplate:
    """Immutable description of a library element.

    ``fn`` and ``jac`` carry the equations.  Their signatures are
    ``fn(p, ot, v, t)`` and ``jac(p, ot, v, t)`` where ``p`` holds the
    resolved parameters, ``ot`` the one-time reals, ``v`` the signal values
    by local variable name and ``t`` the time.

    evaluate kind
        ``fn`` returns ``{output: value}``; ``jac`` returns
        ``{(output, input): d output / d input}`` (missing entries are zero).
    integrate kind
        ``fn`` returns the list of f-values in ``f_var_map`` order; ``jac``
        returns ``{(i, var): d f_i / d var}``.
    """

    name: str
    kind: Kind
    inputs: tuple = ()
    outputs: tuple = ()
    aux_vars: tuple = ()
    real_params: tuple = ()
    integer_params: tuple = ()
    string_params: tuple = ()
    startup_params: tuple = ()
    out_params: tuple = ()
    f_var_map: tuple = ()
    g_var_map: tuple = ()
    jacobian_kind: JacobianKind = JacobianKind.CONSTANT
    fn: Callable = None
    jac: Callable = None
    outparm_fn: Optional[Callable] = None
    one_time_fn: Optional[Callable] = None
    startup_fn: Optional[Callable] = None
    break_fn: Optional[Callable] = None
    crossing_fn: Optional[Callable] = None
    time_varying: bool = False

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind(self.kind))
        object.__setattr__(self, "jacobian_kind", JacobianKind(self.jacobian_kind))
        object.__setattr__(self, "g_var_map", tuple(frozenset(s) for s in self.g_var_map))
        self._validate()

    # -- contract checks -------------------------------------------------
    def _validate(self):
        err = lambda msg: TemplateError(f"template {self.name!r}: {msg}")
        variables = list(self.inputs) + list(self.outputs) + list(self.aux_vars)
        if len(set(variables)) != len(variables):
            raise err("variable names must be unique")
        pnames = (_names(self.real_params) + _names(self.integer_params)
                  + _names(self.string_params) + _names(self.startup_params))
        if len(set(pnames)) != len(pnames):
            raise err("parameter names must be unique")
        if self.fn is None or self.jac is None:
            raise err("fn and jac are required")
        if not self.outputs:
            raise err("at least one output is required")
        if self.kind is Kind.EVALUATE:
            if self.f_var_map or self.aux_vars:
                raise err("evaluate templates have no f-functions and no aux variables")
            if len(self.g_var_map) != len(self.outputs):
                raise err("evaluate templates need one g-function per output")
            for out, gv in zip(self.outputs, self.g_var_map):
                if out not in gv:
                    raise err(f"g-function for {out!r} must involve {out!r}")
        else:
            if not self.f_var_map:
                raise err("integrate templates need at least one f-function")
            if len(set(self.f_var_map)) != len(self.f_var_map):
                raise err("each f-function must define a distinct variable")
            states = set(self.outputs) | set(self.aux_vars)
            if not set(self.f_var_map) <= states:
                raise err("f-functions may only define output or aux variables")
            if set(self.f_var_map) != states:
                raise err("every output and aux variable needs an f-function")
            if len(self.g_var_map) != len(self.f_var_map):
                raise err("integrate templates need n_g == n_f")
        known = set(variables)
        for gv in self.g_var_map:
            if not gv <= known:
                raise err(f"g-function refers to unknown variables {sorted(gv - known)}")

    # -- roster ---------------------------------------------------------
    @property
    def n_f(self) -> int:
        return len(self.f_var_map)

    @property
    def n_g(self) -> int:
        return len(self.g_var_map)

    @property
    def variables(self) -> tuple:
        return tuple(self.inputs) + tuple(self.outputs) + tuple(self.aux_vars)

    @property
    def state_vars(self) -> tuple:
        """Variables defined by f-functions, in f order."""
        return tuple(self.f_var_map)

    @property
    def equation_vars(self) -> tuple:
        """The variable each g-function is the equation for."""
        return tuple(self.outputs) if self.kind is Kind.EVALUATE else tuple(self.f_var_map)

    @property
    def param_names(self) -> list:
        return (_names(self.real_params) + _names(self.integer_params)
                + _names(self.string_params) + _names(self.startup_params))

    @property
    def crossing_aware(self) -> bool:
        return self.crossing_fn is not None

    def param_type(self, name: str) -> type:
        if name in _names(self.integer_params):
            return int
        if name in _names(self.string_params):
            return str
        if name in _names(self.real_params) or name in _names(self.startup_params):
            return float
        raise KeyError(name)

    def resolve_params(self, overrides: Params | None = None) -> dict:
        """Defaults merged with ``overrides``, coerced to the declared types."""
        p = {}
        for group in (self.real_params, self.startup_params):
            for name, default in group:
                p[name] = float(default)
        for name, default in self.integer_params:
            p[name] = int(default)
        for name, default in self.string_params:
            p[name] = str(default)
        for name, value in (overrides or {}).items():
            if name not in p:
                raise ParamError(f"template {self.name!r} has no parameter {name!r}")
            kind = self.param_type(name)
            if kind is int:
                if isinstance(value, float) and not value.is_integer():
                    raise ParamError(f"parameter {name!r} of {self.name!r} must be an integer")
                value = int(value)
            elif kind is float:
                value = float(value)
            else:
                value = str(value)
            p[name] = value
        return p

    # -- operations -----------------------------------------------------
    def compute_one_time(self, p: Params) -> tuple:
        if self.one_time_fn is None:
            return ()
        return tuple(self.one_time_fn(p))

    def startup_values(self, p: Params) -> dict:
        if self.kind is not Kind.INTEGRATE:
            raise TemplateError(f"template {self.name!r} has no start-up section")
        if self.startup_fn is not None:
            return dict(self.startup_fn(p))
        return {var: float(p.get(f"{var}_st", 0.0)) for var in self.f_var_map}

    def _check_inputs(self, v: Signals, names) -> None:
        missing = [n for n in names if n not in v]
        if missing:
            raise AssemblyError(f"block template {self.name!r}: missing values for {missing}")

    def evaluate_outputs(self, req: BlockEvalRequest, p: Params, ot: tuple = ()) -> dict:
        if self.kind is not Kind.EVALUATE:
            raise TemplateError(f"template {self.name!r} is not of evaluate kind")
        self._check_inputs(req.signal_values, self.inputs)
        return dict(self.fn(p, ot, req.signal_values, req.t))

    def state_derivatives(self, req: BlockEvalRequest, p: Params, ot: tuple = ()) -> list:
        if self.kind is not Kind.INTEGRATE:
            raise TemplateError(f"template {self.name!r} is not of integrate kind")
        self._check_inputs(req.signal_values, self.variables)
        return list(self.fn(p, ot, req.signal_values, req.t))

    def residual_and_jacobian(self, req: BlockEvalRequest, p: Params, ot: tuple = ()):
        """g-values and ``{(g_index, var): dg/dvar}`` over the declared variables."""
        v = req.signal_values
        self._check_inputs(v, self.variables)
        want_jac = req.mode is Mode.IMPLICIT_DGDX
        if self.kind is Kind.EVALUATE:
            out = self.fn(p, ot, v, req.t)
            g = [v[y] - out[y] for y in self.outputs]
            if not want_jac:
                return g, {}
            row = {y: k for k, y in enumerate(self.outputs)}
            dg = {(k, y): 1.0 for k, y in enumerate(self.outputs)}
            for (y, x), d in self.jac(p, ot, v, req.t).items():
                k = row[y]
                if x not in self.g_var_map[k]:
                    raise TemplateError(
                        f"template {self.name!r}: derivative of g{k + 1} w.r.t. undeclared {x!r}")
                dg[(k, x)] = dg.get((k, x), 0.0) - d
            return g, dg
        g = list(self.fn(p, ot, v, req.t))
        if not want_jac:
            return g, {}
        dg = {}
        for (i, x), d in self.jac(p, ot, v, req.t).items():
            if x not in self.g_var_map[i]:
                raise TemplateError(
                    f"template {self.name!r}: derivative of g{i + 1} w.r.t. undeclared {x!r}")
            dg[(i, x)] = d
        return g, dg

    def output_param_values(self, req: BlockEvalRequest, p: Params, ot: tuple = ()) -> dict:
        if self.outparm_fn is not None:
            return dict(self.outparm_fn(p, ot, req.signal_values, req.t))
        return {name: req.signal_values[name] for name in self.out_params}

    def next_break(self, t_now: float, p: Params, ot: tuple = ()) -> Optional[float]:
        if self.break_fn is None:
            return None
        return self.break_fn(p, ot, t_now)

    def crossing_signal(self, p: Params, v: Signals) -> float:
        return self.crossing_fn(p, v)

    def evaluate(self, req: BlockEvalRequest, p: Params, ot: tuple = ()) -> BlockEvalResult:
        """Single entry point dispatching on ``req.mode``."""
        mode = Mode(req.mode)
        res = BlockEvalResult(mode)
        if mode is Mode.ONE_TIME:
            res.one_time = self.compute_one_time(p)
        elif mode is Mode.STARTUP:
            res.startup = self.startup_values(p)
        elif mode is Mode.EXPLICIT_F:
            if self.kind is Kind.EVALUATE:
                res.outputs = self.evaluate_outputs(req, p, ot)
            else:
                res.f = self.state_derivatives(req, p, ot)
        elif mode in (Mode.IMPLICIT_G, Mode.IMPLICIT_DGDX):
            res.g, dg = self.residual_and_jacobian(req, p, ot)
            if mode is Mode.IMPLICIT_DGDX:
                res.dgdx = dg
        elif mode is Mode.OUT_PARAMS:
            res.out_params = self.output_param_values(req, p, ot)
        return res
