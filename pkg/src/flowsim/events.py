"""Break scheduling and crossing-point placement.

Sources that know where their waveform has a corner report the next such
time; the main loop shortens the step to land on it exactly.  Comparators
predict where their input difference crosses zero and the loop places one
point just before and one just after the predicted time.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional

from .blocks.crossing import propose_crossing
from .blocks.template import BlockRuntimeState


def _same_time(a: float, b: float) -> bool:
    return abs(a - b) <= 1e-12 * max(1.0, abs(a), abs(b))


@dataclass
class BreakSchedule:
    pending: list = field(default_factory=list)   # sorted (time, instance)

    @property
    def times(self) -> list:
        return [t for t, _ in self.pending]

    def first(self) -> Optional[float]:
        return self.pending[0][0] if self.pending else None

    def __contains__(self, t) -> bool:
        return any(_same_time(t, b) for b, _ in self.pending)

    def __len__(self):
        return len(self.pending)


def collect_breaks(graph, t_now: float, t_end: Optional[float] = None) -> BreakSchedule:
    """Next break of every break-capable instance in ``(t_now, t_end]``."""
    found = []
    for b in graph.blocks:
        if b.template.break_fn is None:
            continue
        tb = b.template.next_break(t_now, b.params, b.one_time)
        if tb is None or not tb > t_now or _same_time(tb, t_now):
            continue
        if t_end is not None and tb > t_end and not _same_time(tb, t_end):
            continue
        found.append((tb, b.name))
    found.sort()
    merged = []
    for tb, name in found:
        if merged and _same_time(merged[-1][0], tb):
            continue
        merged.append((tb, name))
    return BreakSchedule(merged)


def clamp_step(t_now: float, h_proposed: float, schedule: BreakSchedule) -> float:
    """Shorten ``h_proposed`` so the step ends on the first pending break."""
    if h_proposed <= 0.0:
        raise ValueError("proposed step must be positive")
    tb = schedule.first()
    if tb is not None and t_now + h_proposed > tb:
        return tb - t_now
    return h_proposed


@dataclass
class CrossingPlan:
    t_prime: float
    t_before: float
    t_after: float
    instance: str
    done_before: bool = False

    def next_point(self) -> float:
        return self.t_after if self.done_before else self.t_before


def plan_crossing(proposals: Iterable[tuple], t_now: float, dt_normal: float,
                  delta: float) -> Optional[CrossingPlan]:
    """Bracket the earliest proposed crossing with points at ``t' - delta`` and ``t' + delta``."""
    best = None
    for name, tp in proposals:
        if tp is None or not t_now < tp <= t_now + dt_normal:
            continue
        if best is None or tp < best[1]:
            best = (name, tp)
    if best is None:
        return None
    name, tp = best
    before, after = tp - delta, tp + delta
    if not before > t_now:
        return None
    return CrossingPlan(tp, before, after, name)


class CrossingWatch:
    """Per-run crossing histories for every crossing-aware block."""

    def __init__(self, graph, mode: Optional[str] = None):
        self.graph = graph
        self.mode = mode
        self.blocks = [b for b in graph.blocks if b.template.crossing_aware]
        self.state = {b.name: BlockRuntimeState(one_time_reals=b.one_time) for b in self.blocks}

    def __bool__(self):
        return bool(self.blocks)

    def _inputs(self, b, x):
        return b.signals(x, b.input_slots)

    def proposals(self, t: float, x, dt_normal: float) -> list:
        out = []
        for b in self.blocks:
            tp = propose_crossing(b.template, self.state[b.name], t, self._inputs(b, x),
                                  dt_normal, b.params, self.mode)
            if tp is not None:
                out.append((b.name, tp))
        return out

    def push(self, t: float, x) -> None:
        for b in self.blocks:
            self.state[b.name].push(t, self._inputs(b, x))

    def signals(self, x) -> dict:
        """Current crossing signal of each watched block (for diagnostics)."""
        out = {}
        for b in self.blocks:
            v = self._inputs(b, x)
            out[b.name] = b.template.crossing_signal(b.params, v)
        return out
