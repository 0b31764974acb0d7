"""Reference values cross-checked against independent methods."""

import math

import numpy as np
import pytest
from scipy.integrate import solve_ivp

import flowsim
from flowsim.solvers.implicit import GAMMA, TRBDF2_C, trbdf2_lte

from helpers import RC_V2_10MS, rc_eigen_solution, rc_matrix, rc_time_constants


def test_rc_reference_against_lsoda():
    a, b = rc_matrix(1e-6)
    sol = solve_ivp(lambda t, x: a @ x + b, (0.0, 10e-3), [0.0, 0.0], method="LSODA",
                    rtol=1e-12, atol=1e-14)
    assert sol.y[1, -1] == pytest.approx(RC_V2_10MS, rel=1e-9)
    assert rc_eigen_solution(10e-3)[1] == pytest.approx(RC_V2_10MS, rel=1e-14)


def test_rc_time_constants_closed_form():
    # 2x2 eigenvalues from trace and determinant
    for c2 in (1e-6, 0.1e-6):
        a, _ = rc_matrix(c2)
        tr, det = np.trace(a), np.linalg.det(a)
        disc = math.sqrt(tr * tr / 4 - det)
        lam = (tr / 2 - disc, tr / 2 + disc)
        slow, fast = rc_time_constants(c2)
        assert slow == pytest.approx(-1 / lam[1], rel=1e-12)
        assert fast == pytest.approx(-1 / lam[0], rel=1e-12)


def test_trbdf2_constants():
    assert GAMMA == pytest.approx(2 - math.sqrt(2))
    g = GAMMA
    assert TRBDF2_C == pytest.approx((-3 * g * g + 4 * g - 2) / (12 * (2 - g)))


def test_trbdf2_estimator_tracks_true_error():
    # scalar x' = lam x; one step from x = 1, estimator vs exact local error
    lam = -1.0
    ratios = []
    for h in (0.1, 0.05, 0.025, 0.0125):
        flat = flowsim.load(f"""
block i integrator x=x y=x k={lam} y_st=1
outvar x = x
solve method=trbdf2 t_end={h!r} h_init={h!r} h_min={h!r} h_max={h!r} tol=1e9
""", text=True)
        _, res = flowsim.simulate(flat)
        x1 = res.table.column("x")[-1]
        # reproduce the stage values for the estimator
        gh = GAMMA * h
        xg = (1 + lam * gh / 2) / (1 - lam * gh / 2)
        est = trbdf2_lte(lam, lam * xg, lam * x1, h)
        ratios.append(est / (x1 - math.exp(lam * h)))
    assert all(abs(abs(r) - 1) < 0.05 for r in ratios)
    # the calibration improves as h shrinks
    assert abs(abs(ratios[-1]) - 1) < abs(abs(ratios[0]) - 1)

