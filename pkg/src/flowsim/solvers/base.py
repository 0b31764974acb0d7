"""Shared stepping types and the LTE step-size controller."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..config import SolverConfig


@dataclass
class StepResult:
    accepted: bool
    x_new: Optional[np.ndarray]     # full variable vector at t_new (None if rejected)
    t_new: float
    h_used: float
    h_next: float
    lte_estimate: float = 0.0
    newton_iters: int = 0
    reason: str = ""


def error_norm(err: np.ndarray, y: np.ndarray) -> float:
    """Mixed absolute/relative max norm ``max |e_i| / (1 + |y_i|)``."""
    if err.size == 0:
        return 0.0
    return float(np.max(np.abs(err) / (1.0 + np.abs(y))))


def propose_h(h: float, err: float, order_exp: float, cfg: SolverConfig) -> float:
    """Next step from the LTE estimate, clamped to the growth caps and [h_min, h_max]."""
    if err == 0.0:
        factor = cfg.grow_cap
    else:
        factor = cfg.safety * (cfg.tol_lte / err) ** order_exp
        factor = min(cfg.grow_cap, max(cfg.shrink_cap, factor))
    return min(cfg.h_max, max(cfg.h_min, h * factor))


class Stepper:
    """One integration method bound to a graph and a configuration."""

    adaptive = False
    explicit = True

    def __init__(self, graph, cfg: SolverConfig):
        self.graph = graph
        self.cfg = cfg

    def initial_state(self, x0: np.ndarray, t0: float) -> np.ndarray:
        return self.graph.eval_algebraic(np.array(x0, dtype=float), t0)

    def attempt(self, t: float, x: np.ndarray, t_new: float) -> StepResult:
        raise NotImplementedError
