"""Implicit methods: backward Euler, trapezoidal, their iteration-count
controlled variants, and TR-BDF2."""

from __future__ import annotations

import math

import numpy as np

from ..assembly import Discretization
from ..errors import ConvergenceError, NewtonFailure
from .base import StepResult, Stepper, error_norm, propose_h
from .newton import newton_solve

GAMMA = 2.0 - math.sqrt(2.0)
# error constant of the TR-BDF2 pair for this gamma
TRBDF2_C = (-3.0 * GAMMA ** 2 + 4.0 * GAMMA - 2.0) / (12.0 * (2.0 - GAMMA))


def consistent_state(graph, x0, t0, cfg) -> np.ndarray:
    """Algebraic variables consistent with the states of ``x0``."""
    if graph.eval_order is not None:
        return graph.eval_algebraic(np.array(x0, dtype=float), t0)
    x, _ = newton_solve(graph, Discretization.pinned(x0, t0), x0, cfg)
    return x


def discretize(graph, scheme: str, x_old, t_old, h, t_new=None):
    t_new = t_old + h if t_new is None else t_new
    if scheme in ("backward_euler", "be_auto"):
        return Discretization.backward_euler(graph, x_old, h, t_new)
    g_old = graph.g_values(x_old, t_old)
    return Discretization.trapezoidal(graph, x_old, g_old, h, t_new)


class ImplicitStepper(Stepper):
    explicit = False

    def initial_state(self, x0, t0):
        return consistent_state(self.graph, x0, t0, self.cfg)


class ImplicitFixed(ImplicitStepper):
    def attempt(self, t, x, t_new):
        h = t_new - t
        disc = discretize(self.graph, self.cfg.method, x, t, h, t_new)
        try:
            x_new, stats = newton_solve(self.graph, disc, x, self.cfg)
        except NewtonFailure as exc:
            raise ConvergenceError(
                f"convergence difficulties: {exc.message}; reduce the time step", t=t, h=h) from None
        return StepResult(True, x_new, t_new, h, h, newton_iters=stats.iterations)


class NRAuto(ImplicitStepper):
    """Step size driven by the Newton iteration count."""

    adaptive = True

    def attempt(self, t, x, t_new):
        cfg = self.cfg
        h = t_new - t
        disc = discretize(self.graph, cfg.method, x, t, h, t_new)
        try:
            x_new, stats = newton_solve(self.graph, disc, x, cfg)
        except NewtonFailure as exc:
            return StepResult(False, None, t_new, h, max(0.5 * h, cfg.h_min),
                              newton_iters=exc.iterations, reason="newton")
        n = stats.iterations
        if n > cfg.iters_high:
            return StepResult(False, None, t_new, h, max(0.5 * h, cfg.h_min),
                              newton_iters=n, reason="newton-slow")
        if n < cfg.iters_low:
            h_next = min(cfg.nr_grow * h, cfg.h_max)
        else:
            h_next = h
        return StepResult(True, x_new, t_new, h, max(h_next, cfg.h_min), newton_iters=n)


def trbdf2_lte(f_n, f_g, f_1, h):
    """Local error estimate from the derivatives at the three stage points."""
    return 2.0 * TRBDF2_C * h * (f_n / GAMMA - f_g / (GAMMA * (1.0 - GAMMA)) + f_1 / (1.0 - GAMMA))


class TRBDF2(ImplicitStepper):
    adaptive = True

    def attempt(self, t, x, t_new):
        cfg = self.cfg
        g = self.graph
        h = t_new - t
        s = g.state_idx
        t_g = t + GAMMA * h
        iters = 0
        try:
            f_n = g.g_values(x, t)
            disc = Discretization.trapezoidal(g, x, f_n, GAMMA * h, t_g)
            x_g, st1 = newton_solve(g, disc, x, cfg)
            disc = Discretization.bdf2(x, x_g, t, t_g, t_new)
            x_new, st2 = newton_solve(g, disc, x_g, cfg)
            iters = st1.iterations + st2.iterations
            f_g = g.g_values(x_g, t_g)
            f_1 = g.g_values(x_new, t_new)
        except NewtonFailure as exc:
            return StepResult(False, None, t_new, h, max(0.5 * h, cfg.h_min),
                              newton_iters=iters + exc.iterations, reason="newton")
        est = trbdf2_lte(f_n[s], f_g[s], f_1[s], h)
        err = error_norm(est, x_new[s])
        h_next = propose_h(h, err, 1.0 / 3.0, cfg)
        if err > cfg.tol_lte:
            return StepResult(False, None, t_new, h, h_next, err, iters, reason="lte")
        return StepResult(True, x_new, t_new, h, h_next, err, iters)
