"""Run configuration: the netlist ``solve`` statement and the solver/event settings."""

from __future__ import annotations

from dataclasses import dataclass, fields, replace
from typing import Optional

from .errors import ConfigError

EXPLICIT_FIXED = ("improved_euler", "heun", "rk4")
EXPLICIT_ADAPTIVE = ("rkf45", "bs23")
IMPLICIT_FIXED = ("backward_euler", "trapezoidal")
IMPLICIT_ADAPTIVE = ("be_auto", "tr_auto", "trbdf2")
METHODS = EXPLICIT_FIXED + EXPLICIT_ADAPTIVE + IMPLICIT_FIXED + IMPLICIT_ADAPTIVE
EXPLICIT_METHODS = EXPLICIT_FIXED + EXPLICIT_ADAPTIVE
FIXED_STEP_METHODS = EXPLICIT_FIXED + IMPLICIT_FIXED


@dataclass(frozen=True)
class SolverConfig:
    method: str = "rk4"
    t_start: float = 0.0
    t_end: float = 1.0
    h_init: float = 1e-3
    h_min: float = 1e-12
    h_max: float = 1e-2
    tol_lte: float = 1e-6
    newton_max_iters: int = 20
    newton_tol_abs: float = 1e-8
    newton_tol_rel: float = 1e-6
    safety: float = 0.9
    grow_cap: float = 4.0
    shrink_cap: float = 0.1
    iters_high: int = 10
    iters_low: int = 4
    nr_grow: float = 1.5
    max_rejections: int = 20

    def __post_init__(self):
        self.validate()

    @property
    def adaptive(self) -> bool:
        return self.method not in FIXED_STEP_METHODS

    @property
    def explicit(self) -> bool:
        return self.method in EXPLICIT_METHODS

    def validate(self) -> None:
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}; choose from {', '.join(METHODS)}")
        if not self.t_start < self.t_end:
            raise ConfigError(f"t_start ({self.t_start}) must be < t_end ({self.t_end})")
        if not 0.0 < self.h_min <= self.h_init <= self.h_max:
            raise ConfigError(
                f"step bounds must satisfy 0 < h_min <= h_init <= h_max "
                f"(got h_min={self.h_min}, h_init={self.h_init}, h_max={self.h_max})")
        for name in ("tol_lte", "newton_tol_abs", "newton_tol_rel", "safety"):
            if not getattr(self, name) > 0.0:
                raise ConfigError(f"{name} must be positive")
        if self.newton_max_iters < 1 or self.max_rejections < 1:
            raise ConfigError("iteration limits must be at least 1")
        if not self.grow_cap > 1.0 or not 0.0 < self.shrink_cap < 1.0 or not self.nr_grow > 1.0:
            raise ConfigError("grow caps must be > 1 and the shrink cap in (0, 1)")
        if not 0 < self.iters_low <= self.iters_high:
            raise ConfigError("need 0 < iters_low <= iters_high")

    def replace(self, **changes) -> "SolverConfig":
        return replace(self, **changes)


@dataclass(frozen=True)
class EventConfig:
    enabled: bool = True
    extrap: Optional[str] = None
    delta_rel: float = 1e-4
    delta_floor: float = 1e-12

    def __post_init__(self):
        if self.extrap not in (None, "linear", "quadratic"):
            raise ConfigError(f"extrap must be 'linear' or 'quadratic', got {self.extrap!r}")
        if not self.delta_rel > 0.0 or not self.delta_floor > 0.0:
            raise ConfigError("crossing half-width settings must be positive")

    def delta(self, dt_normal: float) -> float:
        return max(self.delta_rel * dt_normal, self.delta_floor)


# keys of the netlist `solve` statement and their types
SOLVE_KEYS = {
    "method": str,
    "t_start": float,
    "t_end": float,
    "h_init": float,
    "h_min": float,
    "h_max": float,
    "tol": float,
    "newton_max_iters": int,
    "newton_tol_abs": float,
    "newton_tol_rel": float,
    "events": bool,
    "extrap": str,
    "delta_rel": float,
}


@dataclass(frozen=True)
class SolveSpec:
    """Everything the netlist says about how to run it.

    Unset step sizes are derived from the interval when the settings are
    completed with :meth:`resolved`.
    """

    method: str = "rk4"
    t_start: float = 0.0
    t_end: float = 1.0
    h_init: Optional[float] = None
    h_min: Optional[float] = None
    h_max: Optional[float] = None
    tol: float = 1e-6
    newton_max_iters: int = 20
    newton_tol_abs: float = 1e-8
    newton_tol_rel: float = 1e-6
    events: bool = True
    extrap: Optional[str] = None
    delta_rel: float = 1e-4

    def resolved(self) -> "SolveSpec":
        span = self.t_end - self.t_start
        if not span > 0.0:
            raise ConfigError(f"t_start ({self.t_start}) must be < t_end ({self.t_end})")
        h_init, h_min, h_max = self.h_init, self.h_min, self.h_max
        if h_max is None:
            h_max = max(span / 50.0, h_init or 0.0)
        if h_init is None:
            h_init = min(span / 1000.0, h_max)
        if h_min is None:
            h_min = min(span * 1e-10, h_init)
        return replace(self, h_init=h_init, h_min=h_min, h_max=h_max)

    def with_overrides(self, **overrides) -> "SolveSpec":
        changes = {k: v for k, v in overrides.items() if v is not None}
        unknown = set(changes) - {f.name for f in fields(self)}
        if unknown:
            raise ConfigError(f"unknown solve settings {sorted(unknown)}")
        return replace(self, **changes)

    def solver_config(self) -> SolverConfig:
        s = self.resolved()
        return SolverConfig(
            method=s.method, t_start=s.t_start, t_end=s.t_end,
            h_init=s.h_init, h_min=s.h_min, h_max=s.h_max, tol_lte=s.tol,
            newton_max_iters=s.newton_max_iters, newton_tol_abs=s.newton_tol_abs,
            newton_tol_rel=s.newton_tol_rel,
        )

    def event_config(self) -> EventConfig:
        return EventConfig(enabled=self.events, extrap=self.extrap, delta_rel=self.delta_rel)

    def validate(self) -> "SolveSpec":
        self.solver_config()
        self.event_config()
        return self

    def to_text(self) -> str:
        s = self.resolved()
        parts = [f"method={s.method}"]
        for name in ("t_start", "t_end", "h_init", "h_min", "h_max", "tol"):
            parts.append(f"{name}={getattr(s, name)!r}")
        parts.append(f"newton_max_iters={s.newton_max_iters}")
        parts.append(f"newton_tol_abs={s.newton_tol_abs!r}")
        parts.append(f"newton_tol_rel={s.newton_tol_rel!r}")
        parts.append(f"events={'on' if s.events else 'off'}")
        if s.extrap is not None:
            parts.append(f"extrap={s.extrap}")
        parts.append(f"delta_rel={s.delta_rel!r}")
        return "solve " + " ".join(parts)
