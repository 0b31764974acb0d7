import numpy as np
import pytest

import flowsim
from flowsim.assembly import Discretization, build
from flowsim.errors import AssemblyError, ConvergenceError

from helpers import NETLISTS, rc_matrix

LOOP = """
block s const y=u value=1
block a sum_2 x1=u x2=w y=v k1=1 k2=-0.5
block b gain x=v y=w k=1
outvar v = v
solve method=backward_euler t_end=1e-3 h_init=1e-3
"""


def _graph(source, text=False, **kw):
    return build(flowsim.load(source, text=text), **kw)


def test_rc_roster():
    g = _graph(NETLISTS / "rc.net")
    assert g.n_vars == g.n_eqns == 5
    assert g.state_names == ["V1", "V2"]
    assert g.var_names == sorted(g.var_names)
    assert g.eval_order is not None and g.loops == []


def test_rc_rhs_matches_state_matrix():
    g = _graph(NETLISTS / "rc.net")
    a, b = rc_matrix(1e-6)
    rng = np.random.default_rng(0)
    for _ in range(5):
        y = rng.normal(size=2)
        np.testing.assert_allclose(g.rhs(y, 0.5), a @ y + b, rtol=1e-12)


@pytest.mark.parametrize("name", ["rc.net", "freeacc_template.net", "freeacc_subckt.net",
                                  "vf_control.net"])
def test_system_jacobian_matches_finite_differences(name):
    g = _graph(NETLISTS / name)
    rng = np.random.default_rng(5)
    x_old = rng.normal(size=g.n_vars)
    disc = Discretization.backward_euler(g, x_old, 1e-4, 0.01)
    x = rng.normal(size=g.n_vars)
    r, jac = g.residual_and_jacobian(x, disc)
    np.testing.assert_array_equal(r, g.assemble_residual(x, disc))
    jac = jac.toarray()
    fd = np.empty_like(jac)
    for k in range(g.n_vars):
        step = 1e-6 * max(1.0, abs(x[k]))
        hi, lo = x.copy(), x.copy()
        hi[k] += step
        lo[k] -= step
        fd[:, k] = (g.assemble_residual(hi, disc) - g.assemble_residual(lo, disc)) / (2 * step)
    np.testing.assert_allclose(jac, fd, rtol=1e-6, atol=1e-6 * np.abs(jac).max())


def test_constant_jacobian_blocks_are_cached():
    g = _graph(NETLISTS / "rc.net")
    disc = Discretization.backward_euler(g, np.zeros(g.n_vars), 1e-4, 1e-4)
    j1 = g.assemble_jacobian(np.zeros(g.n_vars), disc).toarray()
    assert g._const_jac
    j2 = g.assemble_jacobian(np.ones(g.n_vars), disc).toarray()
    np.testing.assert_array_equal(j1, j2)


def test_bdf2_coefficients_exact_on_quadratics():
    # with g = 0 on the state rows, r = y - base: base must equal the
    # quadratic through the history at t_c only when beta*g accounts for slope
    ta, tb, tc = 0.0, 0.3, 0.7
    q = lambda t: 1.0 + 2.0 * t - 3.0 * t * t
    dq = lambda t: 2.0 - 6.0 * t
    d = Discretization.bdf2(np.array([q(ta)]), np.array([q(tb)]), ta, tb, tc)
    # the BDF2 formula reproduces quadratics exactly: y_c = base + beta * y'(t_c)
    assert q(tc) == pytest.approx(d.base[0] + d.beta * dq(tc), rel=1e-13)


def test_algebraic_loop_detected_and_blocks_explicit():
    g = _graph(LOOP, text=True)
    assert g.loops == [["a", "b"]]
    assert g.eval_order is None
    with pytest.raises(AssemblyError, match="algebraic loop"):
        g.require_eval_order()
    with pytest.raises(AssemblyError, match="algebraic loop"):
        flowsim.simulate(flowsim.load(LOOP, text=True), method="rk4")


def test_algebraic_loop_solved_by_implicit_method():
    _, res = flowsim.simulate(flowsim.load(LOOP, text=True))
    # v = 1 - 0.5 v
    assert res.table.column("v")[0] == pytest.approx(2 / 3, rel=1e-12)
    assert res.table.column("v")[-1] == pytest.approx(2 / 3, rel=1e-12)


def test_undriven_net():
    flat = flowsim.load("block g gain x=u y=v\n", text=True)
    with pytest.raises(AssemblyError, match="without a driver: u"):
        build(flat)
    g = build(flat, strict=False)
    assert g.drivers["u"] == []


def test_singular_jacobian_names_equations():
    # y = x*y (mult) with x = 1 gives a row with zero derivative wrt y
    flat = flowsim.load("""
block one const y=x value=1
block m mult_2 x1=x x2=y y=y k=1
""", text=True)
    g = build(flat)
    x = g.startup_state()
    x[g.index["x"]] = 1.0
    disc = Discretization.pinned(x, 0.0)
    jac = g.assemble_jacobian(x, disc)
    with pytest.raises(AssemblyError, match="suspect equations: equation for y"):
        g.factorize(jac)


def test_non_finite_evaluation_names_block():
    flat = flowsim.load("""
block s const y=u value=1e200
block m mult_2 x1=u x2=u y=v k=1e200
outvar v = v
solve method=rk4 t_end=1
""", text=True)
    with pytest.raises(ConvergenceError, match="'m'"):
        flowsim.simulate(flat)


def test_out_param_evaluation():
    g = _graph(NETLISTS / "freeacc_template.net")
    x = g.startup_state()
    names = g.block("mc").template.out_params
    assert "tem" in names
    assert g.out_param(x, 0.0, "mc", "tem") == 0.0
    assert g.diagnostics()["n_vars"] == g.n_vars


def test_const_integrator_chain_counts():
    g = _graph("block c const y=u value=2\nblock i integrator x=u y=v\n", text=True)
    assert g.n_vars == 2 and g.n_states == 1
    assert len(g.algebraic_idx) == 1


def test_eval_order_follows_dataflow():
    g = _graph("""
block c const y=a
block g1 gain x=a y=b
block s sum_2 x1=b x2=a y=c
block g2 gain x=c y=d
""", text=True)
    order = [g.blocks[k].name for k in g.eval_order]
    assert order.index("c") < order.index("g1") < order.index("s") < order.index("g2")
