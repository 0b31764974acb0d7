"""Independent oracles and small netlist builders shared by the tests."""

from __future__ import annotations

from pathlib import Path

import numpy as np

import flowsim

NETLISTS = Path(flowsim.__file__).resolve().parent / "netlists"

R1 = R2 = 1e3
C1 = 1e-6

# V2(10 ms) of the RC ladder with C2 = 1 uF, 1 V step at t = 0, frozen from
# rc_eigen_solution below and cross-checked against scipy's LSODA in test_oracles.
RC_V2_10MS = 0.9743177559441867


def rc_matrix(c2: float):
    a = np.array([
        [-(1.0 / (R1 * C1) + 1.0 / (R2 * C1)), 1.0 / (R2 * C1)],
        [1.0 / (R2 * c2), -1.0 / (R2 * c2)],
    ])
    b = np.array([1.0 / (R1 * C1), 0.0])
    return a, b


def rc_eigen_solution(t: float, c2: float = 1e-6) -> np.ndarray:
    """[V1, V2](t) for zero initial state and unit step input, by eigen-decomposition."""
    a, b = rc_matrix(c2)
    x_ss = -np.linalg.solve(a, b)
    lam, vec = np.linalg.eig(a)
    coef = np.linalg.solve(vec, -x_ss)
    return x_ss + vec @ (coef * np.exp(lam * t))


def rc_time_constants(c2: float) -> tuple:
    """Time constants in seconds, slow first."""
    lam = np.linalg.eigvals(rc_matrix(c2)[0])
    taus = sorted((-1.0 / lam.real).tolist(), reverse=True)
    return tuple(taus)


def rc_netlist(c2: float = 1e-6, solve: str = "") -> str:
    return f"""
param R1={R1!r} R2={R2!r} C1={C1!r} C2={c2!r}
block vs step_source y=vs t_step=0
block s1 sum_3 x1=vs x2=V1 x3=V2 y=d1 k1=1/(R1*C1) k2=-(1/(R1*C1)+1/(R2*C1)) k3=1/(R2*C1)
block i1 integrator x=d1 y=V1
block s2 sum_2 x1=V1 x2=V2 y=d2 k1=1/(R2*C2) k2=-1/(R2*C2)
block i2 integrator x=d2 y=V2
outvar V1 = V1
outvar V2 = V2
{solve}
"""


def decay_netlist(solve: str = "") -> str:
    """dx/dt = -x, x(0) = 1."""
    return f"""
block i integrator x=x y=x k=-1 y_st=1
outvar x = x
{solve}
"""


def run_text(text: str, **overrides):
    flat = flowsim.load(text, text=True)
    return flowsim.simulate(flat, **overrides)


def final(result, alias: str) -> float:
    return result.table.column(alias)[-1]
