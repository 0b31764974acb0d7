"""Transient main loop: step selection, events, rejection handling, recording."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from ..config import (EXPLICIT_ADAPTIVE, EXPLICIT_FIXED, IMPLICIT_FIXED, EventConfig,
                      SolverConfig)
from ..errors import ConvergenceError
from ..events import CrossingWatch, collect_breaks, plan_crossing
from ..output import NetBinding, Recorder
from .explicit import ExplicitAdaptive, ExplicitFixed
from .implicit import NRAuto, TRBDF2, ImplicitFixed

# a target this close beyond the normal step end is taken instead of leaving a sliver
SNAP = 1e-9


def make_stepper(graph, cfg: SolverConfig):
    if cfg.method in EXPLICIT_FIXED:
        return ExplicitFixed(graph, cfg)
    if cfg.method in EXPLICIT_ADAPTIVE:
        return ExplicitAdaptive(graph, cfg)
    if cfg.method in IMPLICIT_FIXED:
        return ImplicitFixed(graph, cfg)
    if cfg.method == "trbdf2":
        return TRBDF2(graph, cfg)
    return NRAuto(graph, cfg)


@dataclass
class StepRecord:
    t: float
    h: float
    clamped: bool
    target: str        # 'normal' | 'end' | 'break' | 'crossing'


@dataclass
class RunStats:
    accepted: int = 0
    rejected: int = 0
    newton_iters: int = 0
    wall_time: float = 0.0


@dataclass
class TransientResult:
    steps: list = field(default_factory=list)
    tables: dict = field(default_factory=dict)
    crossings: list = field(default_factory=list)
    stats: RunStats = field(default_factory=RunStats)
    t_start: float = 0.0
    h_next: float = 0.0
    x_final: Optional[np.ndarray] = None
    states: Optional[list] = None

    @property
    def times(self) -> list:
        return [self.t_start] + [s.t for s in self.steps]

    @property
    def table(self):
        return next(iter(self.tables.values()))


def _getter(graph, req):
    b = req.binding
    if isinstance(b, NetBinding):
        k = graph.index[b.var]
        return lambda x, t: float(x[k])
    return lambda x, t: graph.out_param(x, t, b.instance, b.param)


def run_transient(graph, config: SolverConfig, events: Optional[EventConfig] = None,
                  outputs: Sequence = (), files: Optional[Sequence] = None,
                  keep_states: bool = False) -> TransientResult:
    """Integrate from ``config.t_start`` to ``config.t_end``.

    ``outputs`` are resolved :class:`OutputRequest` objects.  ``files`` is a
    list of objects with ``file``, ``vars`` and ``interval`` attributes; by
    default every output is recorded at every accepted point into one table
    named ``"out"``.
    """
    cfg = config
    events = events or EventConfig()
    wall0 = time.perf_counter()
    stepper = make_stepper(graph, cfg)

    getters = {req.alias: _getter(graph, req) for req in outputs}
    if files is None:
        groups = {"out": (list(getters), None)}
    else:
        groups = {f.file: (list(f.vars), f.interval) for f in files}
    recorders = {name: Recorder(aliases, interval, cfg.t_start, cfg.t_end)
                 for name, (aliases, interval) in groups.items()}

    def record(t, x):
        values = {alias: get(x, t) for alias, get in getters.items()}
        for name, rec in recorders.items():
            rec.record(t, [values[a] for a in groups[name][0]])

    t = cfg.t_start
    x = stepper.initial_state(graph.startup_state(), t)
    res_all = TransientResult(t_start=t, states=[x.copy()] if keep_states else None)
    stats = res_all.stats
    record(t, x)

    watch = CrossingWatch(graph, events.extrap) if events.enabled else None
    if watch is not None and not watch:
        watch = None
    if watch is not None:
        watch.push(t, x)
    adaptive = stepper.adaptive
    h_fixed = cfg.h_init
    h_next = cfg.h_init
    plan = None

    while t < cfg.t_end:
        h_prop = h_next if adaptive else h_fixed
        t_normal = t + h_prop
        cands = [(cfg.t_end, "end")]
        if events.enabled:
            tb = collect_breaks(graph, t, cfg.t_end).first()
            if tb is not None:
                cands.append((tb, "break"))
            if plan is not None:
                cands.append((plan.next_point(), "crossing"))
        t_c, kind = min(cands)
        if t_c <= t + h_prop * (1.0 + SNAP):
            target, clamped = t_c, t_c < t_normal
        else:
            target, clamped, kind = t_normal, False, "normal"

        consecutive = 0
        while True:
            res = stepper.attempt(t, x, target)
            if res.accepted:
                break
            stats.rejected += 1
            stats.newton_iters += res.newton_iters
            consecutive += 1
            h_used = target - t
            if consecutive >= cfg.max_rejections:
                raise ConvergenceError(
                    f"{consecutive} consecutive step rejections ({res.reason})", t=t, h=h_used)
            if h_used <= cfg.h_min * (1.0 + 1e-12):
                raise ConvergenceError(
                    f"step rejected at the minimum step size ({res.reason})", t=t, h=h_used)
            h_try = res.h_next if res.h_next < h_used else 0.5 * h_used
            target, clamped, kind = t + max(h_try, cfg.h_min), False, "normal"

        h_used = res.h_used
        t = target
        x = res.x_new
        stats.accepted += 1
        stats.newton_iters += res.newton_iters
        if adaptive:
            h_next = res.h_next
            if clamped and res.h_next >= h_used:
                # a shortened step says nothing against the step we wanted
                h_next = max(res.h_next, h_prop)
            h_next = min(cfg.h_max, max(cfg.h_min, h_next))
        res_all.steps.append(StepRecord(t, h_used, clamped, kind))
        if keep_states:
            res_all.states.append(x.copy())
        record(t, x)

        if plan is not None and t == plan.next_point():
            if plan.done_before:
                res_all.crossings.append(plan)
                plan = None
            else:
                plan.done_before = True
        if watch is not None:
            if plan is None:
                dt_normal = h_next if adaptive else h_fixed
                plan = plan_crossing(watch.proposals(t, x, dt_normal), t, dt_normal,
                                     events.delta(dt_normal))
            watch.push(t, x)

    res_all.h_next = h_next
    res_all.x_final = x
    res_all.tables = {name: rec.table for name, rec in recorders.items()}
    stats.wall_time = time.perf_counter() - wall0
    return res_all
