"""Runge-Kutta methods: fixed-step improved Euler, Heun (3rd order), RK4 and
the embedded pairs RKF45 and BS23.

The state vector ``y`` holds only the integrated variables; algebraic
variables are re-derived at every stage.
"""

from __future__ import annotations

import numpy as np

from .base import StepResult, Stepper, error_norm, propose_h


class Tableau:
    def __init__(self, a, b, c, b_err=None, order=None, err_exp=None):
        self.a = [np.asarray(row, dtype=float) for row in a]
        self.b = np.asarray(b, dtype=float)
        self.c = np.asarray(c, dtype=float)
        # weights of (advancing solution - embedded solution)
        self.b_err = None if b_err is None else np.asarray(b_err, dtype=float)
        self.order = order
        # step-size controller exponent: 1 / (order of the error estimate)
        self.err_exp = err_exp

    @property
    def stages(self) -> int:
        return len(self.b)


IMPROVED_EULER = Tableau(a=[[], [1.0]], b=[0.5, 0.5], c=[0.0, 1.0], order=2)

HEUN3 = Tableau(
    a=[[], [1 / 3], [0.0, 2 / 3]],
    b=[1 / 4, 0.0, 3 / 4],
    c=[0.0, 1 / 3, 2 / 3],
    order=3,
)

RK4 = Tableau(
    a=[[], [0.5], [0.0, 0.5], [0.0, 0.0, 1.0]],
    b=[1 / 6, 1 / 3, 1 / 3, 1 / 6],
    c=[0.0, 0.5, 0.5, 1.0],
    order=4,
)

# Fehlberg 4(5); advances with the 4th-order weights
_RKF_B4 = [25 / 216, 0.0, 1408 / 2565, 2197 / 4104, -1 / 5, 0.0]
_RKF_B5 = [16 / 135, 0.0, 6656 / 12825, 28561 / 56430, -9 / 50, 2 / 55]
RKF45 = Tableau(
    a=[
        [],
        [1 / 4],
        [3 / 32, 9 / 32],
        [1932 / 2197, -7200 / 2197, 7296 / 2197],
        [439 / 216, -8.0, 3680 / 513, -845 / 4104],
        [-8 / 27, 2.0, -3544 / 2565, 1859 / 4104, -11 / 40],
    ],
    b=_RKF_B4,
    c=[0.0, 1 / 4, 3 / 8, 12 / 13, 1.0, 1 / 2],
    b_err=[p - q for p, q in zip(_RKF_B4, _RKF_B5)],
    order=4,
    err_exp=1 / 5,
)

# Bogacki-Shampine 3(2), first same as last; advances with the 3rd-order weights
_BS_B3 = [2 / 9, 1 / 3, 4 / 9, 0.0]
_BS_B2 = [7 / 24, 1 / 4, 1 / 3, 1 / 8]
BS23 = Tableau(
    a=[[], [1 / 2], [0.0, 3 / 4], [2 / 9, 1 / 3, 4 / 9]],
    b=_BS_B3,
    c=[0.0, 1 / 2, 3 / 4, 1.0],
    b_err=[p - q for p, q in zip(_BS_B3, _BS_B2)],
    order=3,
    err_exp=1 / 3,
)

TABLEAUS = {
    "improved_euler": IMPROVED_EULER,
    "heun": HEUN3,
    "rk4": RK4,
    "rkf45": RKF45,
    "bs23": BS23,
}


def rk_stages(rhs, tab: Tableau, t: float, y: np.ndarray, h: float, k1=None) -> list:
    ks = [rhs(y, t) if k1 is None else k1]
    for i in range(1, tab.stages):
        yi = y.copy()
        for aij, kj in zip(tab.a[i], ks):
            if aij:
                yi += h * aij * kj
        ks.append(rhs(yi, t + tab.c[i] * h))
    return ks


def rk_step(rhs, tab: Tableau, t: float, y: np.ndarray, h: float, k1=None):
    """One step; returns ``(y_new, error_vector_or_None, stages)``."""
    ks = rk_stages(rhs, tab, t, y, h, k1)
    y_new = y.copy()
    for bi, k in zip(tab.b, ks):
        if bi:
            y_new += h * bi * k
    err = None
    if tab.b_err is not None:
        err = np.zeros_like(y)
        for ei, k in zip(tab.b_err, ks):
            if ei:
                err += h * ei * k
    return y_new, err, ks


def step_explicit_fixed(graph, y: np.ndarray, t: float, h: float, method: str) -> np.ndarray:
    """Advance the state vector ``y`` by ``h`` with a fixed-step tableau."""
    tab = TABLEAUS[method]
    y_new, _, _ = rk_step(graph.rhs, tab, t, np.asarray(y, dtype=float), h)
    return y_new


class ExplicitFixed(Stepper):
    def __init__(self, graph, cfg):
        super().__init__(graph, cfg)
        graph.require_eval_order()
        self.tab = TABLEAUS[cfg.method]

    def attempt(self, t, x, t_new):
        h = t_new - t
        y = x[self.graph.state_idx]
        k1 = self.graph.derivatives(x, t)
        y_new, _, _ = rk_step(self.graph.rhs, self.tab, t, y, h, k1)
        x_new = self.graph.full_state(y_new, t_new)
        return StepResult(True, x_new, t_new, h, h)


class ExplicitAdaptive(Stepper):
    adaptive = True

    def __init__(self, graph, cfg):
        super().__init__(graph, cfg)
        graph.require_eval_order()
        self.tab = TABLEAUS[cfg.method]
        self.fsal = cfg.method == "bs23"
        self._last = None    # (t, y, f) at the last accepted point, for FSAL reuse

    def attempt(self, t, x, t_new):
        h = t_new - t
        g = self.graph
        y = x[g.state_idx]
        k1 = None
        if self.fsal and self._last is not None:
            lt, ly, lf = self._last
            if lt == t and np.array_equal(ly, y):
                k1 = lf
        if k1 is None:
            k1 = g.derivatives(x, t)
        y_new, err_vec, ks = rk_step(g.rhs, self.tab, t, y, h, k1)
        err = error_norm(err_vec, y_new)
        h_next = propose_h(h, err, self.tab.err_exp, self.cfg)
        if err > self.cfg.tol_lte:
            return StepResult(False, None, t_new, h, h_next, err, reason="lte")
        if self.fsal:
            self._last = (t_new, y_new, ks[-1])
        return StepResult(True, g.full_state(y_new, t_new), t_new, h, h_next, err)
