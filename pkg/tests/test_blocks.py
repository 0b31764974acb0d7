import math

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from flowsim.blocks import (REGISTRY, BlockEvalRequest, BlockRuntimeState, BlockTemplate, Kind,
                            Mode, linear_root, propose_crossing, quadratic_root)
from flowsim.blocks.library import parse_table
from flowsim.errors import ParamError, TemplateError

# parameter overrides used when exercising each template
PARAMS = {
    "pwl20": {"points": "0,0; 1,2; 3,-1"},
    "pwl10_xy": {"points": "-5,1; 0,0; 2,4; 7,3"},
    "lag_1": {"Tr": 0.3},
    "integrator": {"k": 2.5},
    "sum_2": {"k1": 1.5, "k2": -0.7},
    "sum_3": {"k1": 1.0, "k2": -2.0, "k3": 0.25},
    "gain": {"k": -3.0},
    "mult_2": {"k": 1.7},
}

# value ranges for randomised signals
RANGES = {"wrm": 400.0, "vds": 200.0, "vqs": 200.0, "tl": 20.0, "psids": 1.0, "psiqs": 1.0,
          "psidr": 1.0, "psiqr": 1.0}


def _setup(name):
    tmpl = REGISTRY[name]
    p = tmpl.resolve_params(PARAMS.get(name, {}))
    return tmpl, p, tmpl.compute_one_time(p)


def _random_signals(tmpl, rng):
    v = {}
    for var in tmpl.variables:
        v[var] = rng.uniform(-1.0, 1.0) * RANGES.get(var, 3.0)
    if tmpl.name == "comparator":
        # stay away from the switching point
        v["x2"] = v["x1"] + math.copysign(rng.uniform(0.1, 2.0), rng.uniform(-1, 1))
    if tmpl.name == "pwl10_xy":
        xs = [-5.0, 0.0, 2.0, 7.0]
        while min(abs(v["x"] - b) for b in xs) < 1e-3:
            v["x"] = rng.uniform(-8.0, 9.0)
    return v


def _fd_jacobian(tmpl, p, ot, v, t):
    """Central differences of the g-functions, step 1e-6 * max(1, |x|)."""
    out = {}
    for var in tmpl.variables:
        step = 1e-6 * max(1.0, abs(v[var]))
        hi, lo = dict(v), dict(v)
        hi[var] += step
        lo[var] -= step
        g_hi, _ = tmpl.residual_and_jacobian(BlockEvalRequest(Mode.IMPLICIT_G, t, hi), p, ot)
        g_lo, _ = tmpl.residual_and_jacobian(BlockEvalRequest(Mode.IMPLICIT_G, t, lo), p, ot)
        for i, (a, b) in enumerate(zip(g_hi, g_lo)):
            out[(i, var)] = (a - b) / (2.0 * step)
    return out


def jacobian_error(name, rng, t=0.37):
    tmpl, p, ot = _setup(name)
    v = _random_signals(tmpl, rng)
    _, dg = tmpl.residual_and_jacobian(BlockEvalRequest(Mode.IMPLICIT_DGDX, t, v), p, ot)
    fd = _fd_jacobian(tmpl, p, ot, v, t)
    scale = max(1.0, max(abs(x) for x in fd.values()))
    worst = 0.0
    for key, num in fd.items():
        ana = dg.get(key, 0.0)
        # relative to the entry, with a floor tied to the row's largest entry
        denom = max(abs(num), abs(ana), 1e-3 * scale)
        worst = max(worst, abs(ana - num) / denom)
    return worst


def jacobian_check_all(n_states=100, seed=0):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for name in sorted(REGISTRY):
        for _ in range(n_states):
            worst = max(worst, jacobian_error(name, rng))
    return worst, len(REGISTRY)


@pytest.mark.parametrize("name", sorted(REGISTRY))
def test_jacobian_matches_finite_differences(name):
    rng = np.random.default_rng(1)
    assert max(jacobian_error(name, rng) for _ in range(20)) <= 1e-5


@pytest.mark.parametrize("name", sorted(REGISTRY))
def test_explicit_and_implicit_paths_agree(name):
    tmpl, p, ot = _setup(name)
    rng = np.random.default_rng(2)
    for _ in range(10):
        v = _random_signals(tmpl, rng)
        g, _ = tmpl.residual_and_jacobian(BlockEvalRequest(Mode.IMPLICIT_G, 0.4, v), p, ot)
        if tmpl.kind is Kind.INTEGRATE:
            f = tmpl.state_derivatives(BlockEvalRequest(Mode.EXPLICIT_F, 0.4, v), p, ot)
            assert g == f
        else:
            out = tmpl.evaluate_outputs(BlockEvalRequest(Mode.EXPLICIT_F, 0.4, v), p, ot)
            assert g == [v[y] - out[y] for y in tmpl.outputs]


@pytest.mark.parametrize("name", sorted(n for n, t in REGISTRY.items()
                                        if t.jacobian_kind.value == "constant"))
def test_constant_jacobians_do_not_move(name):
    tmpl, p, ot = _setup(name)
    rng = np.random.default_rng(3)
    a = tmpl.residual_and_jacobian(
        BlockEvalRequest(Mode.IMPLICIT_DGDX, 0.1, _random_signals(tmpl, rng)), p, ot)[1]
    b = tmpl.residual_and_jacobian(
        BlockEvalRequest(Mode.IMPLICIT_DGDX, 0.9, _random_signals(tmpl, rng)), p, ot)[1]
    assert a == b


def test_sum_2_values_and_out_params():
    tmpl = REGISTRY["sum_2"]
    p = tmpl.resolve_params({})
    req = BlockEvalRequest(Mode.OUT_PARAMS, 0.0, {"x1": 1.0, "x2": 2.0, "y": 3.0})
    assert tmpl.output_param_values(req, p) == {"x1": 1.0, "x2": 2.0, "y": 3.0}
    res = tmpl.evaluate(BlockEvalRequest(Mode.IMPLICIT_DGDX, 0.0, {"x1": 1, "x2": 2, "y": 0}), p)
    assert res.g == [-3.0]
    assert res.dgdx == {(0, "y"): 1.0, (0, "x1"): -1.0, (0, "x2"): -1.0}


def test_integrator_out_params_and_startup():
    tmpl = REGISTRY["integrator"]
    p = tmpl.resolve_params({"y_st": 0.5})
    assert tmpl.startup_values(p) == {"y": 0.5}
    req = BlockEvalRequest(Mode.OUT_PARAMS, 0.0, {"x": 2.0, "y": 0.1})
    assert tmpl.output_param_values(req, p) == {"x": 2.0, "y": 0.1}
    res = tmpl.evaluate(BlockEvalRequest(Mode.EXPLICIT_F, 0.0, {"x": 2.0, "y": 0.1}), p)
    assert res.f == [2.0]


def test_indmc1_zero_flux_gives_zero_torque():
    tmpl, p, ot = _setup("indmc1")
    v = {"vds": 10.0, "vqs": -3.0, "tl": 0.0, "wrm": 100.0,
         "psids": 0.0, "psiqs": 0.0, "psidr": 0.0, "psiqr": 0.0}
    out = tmpl.output_param_values(BlockEvalRequest(Mode.OUT_PARAMS, 0.0, v), p, ot)
    assert out["tem"] == 0.0
    assert set(out) == set(tmpl.out_params)


def test_indmc1_torque_from_currents():
    tmpl, p, ot = _setup("indmc1")
    rng = np.random.default_rng(4)
    v = _random_signals(tmpl, rng)
    out = tmpl.output_param_values(BlockEvalRequest(Mode.OUT_PARAMS, 0.0, v), p, ot)
    # flux-current relations inverted independently
    ls, lr, lm = p["lls"] + p["lm"], p["llr"] + p["lm"], p["lm"]
    m = np.array([[ls, lm], [lm, lr]])
    ids, idr = np.linalg.solve(m, [v["psids"], v["psidr"]])
    iqs, iqr = np.linalg.solve(m, [v["psiqs"], v["psiqr"]])
    assert out["ids"] == pytest.approx(ids, rel=1e-9)
    assert out["iqr"] == pytest.approx(iqr, rel=1e-9)
    tem = 0.75 * p["poles"] * lm * (iqs * idr - ids * iqr)
    assert out["tem"] == pytest.approx(tem, rel=1e-9, abs=1e-9)


def test_indmc1_rejects_degenerate_parameters():
    tmpl = REGISTRY["indmc1"]
    with pytest.raises(ParamError):
        tmpl.compute_one_time(tmpl.resolve_params({"lm": 0.0}))
    with pytest.raises(ParamError, match="Le"):
        tmpl.compute_one_time(tmpl.resolve_params({"lls": 0.0, "llr": 0.0}))


def test_lag_one_time_and_equilibrium():
    tmpl, p, ot = _setup("lag_1")
    assert ot == (1.0 / 0.3,)
    f = tmpl.state_derivatives(BlockEvalRequest(Mode.EXPLICIT_F, 0.0, {"x": 2.0, "y": 2.0}), p, ot)
    assert f == [0.0]
    with pytest.raises(ParamError):
        tmpl.compute_one_time(tmpl.resolve_params({"Tr": 0.0}))


def _out(name, t, params=None, **v):
    tmpl = REGISTRY[name]
    p = tmpl.resolve_params(params or {})
    ot = tmpl.compute_one_time(p)
    return tmpl.evaluate_outputs(BlockEvalRequest(Mode.EXPLICIT_F, t, v), p, ot)


def test_triangle_shape():
    p = {"period": 2.0}
    assert _out("triangle_source", 0.0, p)["y"] == -1.0
    assert _out("triangle_source", 1.0, p)["y"] == 1.0
    assert _out("triangle_source", 0.5, p)["y"] == 0.0
    assert _out("triangle_source", 2.0, p)["y"] == -1.0
    assert _out("triangle_source", 2.5, p)["y"] == 0.0


def test_triangle_breaks_on_exact_lattice():
    tmpl = REGISTRY["triangle_source"]
    p = tmpl.resolve_params({"period": 2.0})
    ot = tmpl.compute_one_time(p)
    assert tmpl.next_break(0.3, p, ot) == 1.0
    assert tmpl.next_break(1.0, p, ot) == 2.0
    # far out: still an exact multiple of T/2, computed from an integer
    for k in (9_999, 10_000, 19_999):
        t = k * 1.0
        assert tmpl.next_break(t, p, ot) == (k + 1) * 1.0
        assert tmpl.next_break(t - 0.25, p, ot) == t


@given(st.floats(0.01, 10.0), st.floats(0.0, 2e4))
def test_triangle_break_property(period, t_now):
    tmpl = REGISTRY["triangle_source"]
    p = tmpl.resolve_params({"period": period})
    ot = tmpl.compute_one_time(p)
    tb = tmpl.next_break(t_now, p, ot)
    half = period / 2.0
    k = round(tb / half)
    assert tb == k * half
    assert tb > t_now
    assert (k - 1) * half <= t_now


def test_step_and_pwl_breaks():
    step = REGISTRY["step_source"]
    p = step.resolve_params({"t_step": 0.4})
    assert step.next_break(0.1, p) == 0.4
    assert step.next_break(0.4, p) is None
    pwl = REGISTRY["pwl20"]
    p = pwl.resolve_params(PARAMS["pwl20"])
    ot = pwl.compute_one_time(p)
    assert pwl.next_break(-1.0, p, ot) == 0.0
    assert pwl.next_break(0.5, p, ot) == 1.0
    assert pwl.next_break(3.0, p, ot) is None
    assert REGISTRY["sum_2"].next_break(0.0, {}) is None


def test_pwl_values_clamp_outside_table():
    p = PARAMS["pwl20"]
    assert _out("pwl20", -2.0, p)["y"] == 0.0
    assert _out("pwl20", 0.5, p)["y"] == 1.0
    assert _out("pwl20", 2.0, p)["y"] == 0.5
    assert _out("pwl20", 10.0, p)["y"] == -1.0
    assert _out("pwl10_xy", 0.0, PARAMS["pwl10_xy"], x=1.0)["y"] == 2.0
    assert _out("pwl10_xy", 0.0, PARAMS["pwl10_xy"], x=100.0)["y"] == 3.0


def test_table_limits():
    with pytest.raises(ParamError, match="at most 10"):
        parse_table("; ".join(f"{k},0" for k in range(11)), 10, "pwl10_xy")
    with pytest.raises(ParamError, match="increasing"):
        parse_table("0,0; 0,1", 20, "pwl20")
    with pytest.raises(ParamError):
        parse_table("0,a", 20, "pwl20")


def test_abc_to_dq_balanced_set():
    # balanced three-phase set of amplitude A maps to a vector of length A
    amp = 2.0
    for theta in np.linspace(0.0, 2 * np.pi, 7):
        a = amp * math.sin(theta)
        b = amp * math.sin(theta - 2 * math.pi / 3)
        c = amp * math.sin(theta + 2 * math.pi / 3)
        out = _out("abc_to_dq", 0.0, None, a=a, b=b, c=c)
        assert math.hypot(out["d"], out["q"]) == pytest.approx(amp, rel=1e-12)
        assert out["q"] == pytest.approx(a, abs=1e-12)
    with pytest.raises(ParamError):
        _out("abc_to_dq", 0.0, {"convention": "bogus"}, a=0.0, b=0.0, c=0.0)
    zero = _out("abc_to_dq", 0.0, None, a=1.0, b=1.0, c=1.0)
    assert zero == {"d": 0.0, "q": 0.0}


def test_comparator_levels():
    assert _out("comparator", 0.0, None, x1=1.0, x2=0.0)["y"] == 1.0
    assert _out("comparator", 0.0, {"y_low": 0.0}, x1=-1.0, x2=0.0)["y"] == 0.0
    with pytest.raises(ParamError):
        _out("comparator", 0.0, {"extrap": "cubic"}, x1=0.0, x2=0.0)


def test_resolve_params_type_checks():
    tmpl = REGISTRY["indmc1"]
    with pytest.raises(ParamError, match="no parameter"):
        tmpl.resolve_params({"nope": 1.0})
    p = tmpl.resolve_params({"poles": 6.0})
    assert p["poles"] == 6.0


def test_contract_violations_rejected():
    fn = lambda p, ot, v, t: {"y": 0.0}
    jac = lambda p, ot, v, t: {}
    with pytest.raises(TemplateError):
        BlockTemplate(name="bad", kind=Kind.EVALUATE, outputs=("y",), g_var_map=({"x"},),
                      fn=fn, jac=jac)
    with pytest.raises(TemplateError):
        BlockTemplate(name="bad", kind=Kind.INTEGRATE, inputs=("x",), outputs=("y",),
                      f_var_map=("y", "y"), g_var_map=({"x"}, {"x"}), fn=fn, jac=jac)
    with pytest.raises(TemplateError):
        BlockTemplate(name="bad", kind=Kind.INTEGRATE, inputs=("x",), outputs=("y",),
                      f_var_map=("y",), g_var_map=({"x"}, {"x"}), fn=fn, jac=jac)
    with pytest.raises(TemplateError):
        BlockTemplate(name="bad", kind=Kind.EVALUATE, inputs=("x",), outputs=("y",),
                      aux_vars=("z",), g_var_map=({"y"},), fn=fn, jac=jac)


def test_undeclared_jacobian_entry_is_rejected():
    tmpl = BlockTemplate(
        name="leaky", kind=Kind.EVALUATE, inputs=("x", "w"), outputs=("y",),
        g_var_map=({"y", "x"},), fn=lambda p, ot, v, t: {"y": v["x"] + v["w"]},
        jac=lambda p, ot, v, t: {("y", "x"): 1.0, ("y", "w"): 1.0})
    req = BlockEvalRequest(Mode.IMPLICIT_DGDX, 0.0, {"x": 0.0, "w": 0.0, "y": 0.0})
    with pytest.raises(TemplateError, match="undeclared"):
        tmpl.residual_and_jacobian(req, {})


def test_runtime_state_rules():
    st_ = BlockRuntimeState()
    st_.push(0.0, {"x1": 1.0})
    with pytest.raises(ValueError):
        st_.push(0.0, {"x1": 1.0})
    for k in range(1, 5):
        st_.push(float(k), {"x1": 1.0})
    assert len(st_.history) == 3
    st_.set_one_time((1.0,))
    with pytest.raises(RuntimeError):
        st_.set_one_time((2.0,))


# ---------------------------------------------------------------------------
# crossing prediction

def _comparator_state(points):
    state = BlockRuntimeState()
    for t, u in points:
        state.push(t, {"x1": u, "x2": 0.0})
    return state


def _propose(points, t0, u0, dt, mode="linear"):
    tmpl = REGISTRY["comparator"]
    p = tmpl.resolve_params({"extrap": mode})
    return propose_crossing(tmpl, _comparator_state(points), t0, {"x1": u0, "x2": 0.0}, dt, p)


def test_linear_crossing_example():
    tp = _propose([(2.5, 0.2)], 2.58, 0.05, 0.1)
    slope = (0.05 - 0.2) / 0.08
    assert slope == pytest.approx(-1.875)
    assert tp == pytest.approx(2.58 + 0.05 / 1.875, rel=1e-12)
    assert tp == pytest.approx(2.6067, abs=1e-4)


def test_crossing_in_the_past_or_too_far_is_ignored():
    assert _propose([(2.5, 0.2)], 2.58, -0.05, 0.1) is None
    assert _propose([(2.5, 0.2)], 2.58, 0.15, 0.1) is None
    assert _propose([], 2.58, 0.05, 0.1) is None


def test_quadratic_example_samples():
    # u = 0.09, 0.04, 0.01 at t = 1.7, 1.8, 1.9: the parabola through them is
    # 0.01 * (10 (2 - t))^2, touching zero at t = 2.0; the line through the
    # last two points crosses at 1.9333
    root, degenerate = quadratic_root([(1.7, 0.09), (1.8, 0.04), (1.9, 0.01)])
    assert not degenerate
    assert root == pytest.approx(2.0, abs=1e-6)
    assert linear_root(1.8, 0.04, 1.9, 0.01) == pytest.approx(1.9 + 0.01 / 0.3)
    tp = _propose([(1.7, 0.09), (1.8, 0.04)], 1.9, 0.01, 0.2, mode="quadratic")
    assert tp == pytest.approx(2.0, abs=1e-6)


def test_quadratic_collinear_falls_back_to_linear():
    root, degenerate = quadratic_root([(0.0, 3.0), (1.0, 2.0), (2.0, 1.0)])
    assert degenerate and root is None
    tp = _propose([(0.0, 3.0), (1.0, 2.0)], 2.0, 1.0, 1.5, mode="quadratic")
    assert tp == pytest.approx(3.0)


def test_quadratic_without_real_root_gives_none():
    # convex parabola staying above zero
    assert quadratic_root([(0.0, 1.0), (1.0, 0.5), (2.0, 1.0)]) == (None, False)
    assert _propose([(0.0, 1.0), (1.0, 0.5)], 2.0, 1.0, 5.0, mode="quadratic") is None


@given(st.floats(-1e3, 1e3), st.floats(0.01, 0.5), st.floats(0.1, 0.9))
def test_crossing_translation_invariance(shift, h, frac):
    # line through the crossing at frac * h after the newest point
    pts = [(0.0, 2.0 * h * (1 + frac)), (h, h * (1 + frac) * 1.0)]
    t0, u0 = 2 * h, h * frac
    base = _propose(pts[1:], t0, u0, h)
    moved = _propose([(t + shift, u) for t, u in pts[1:]], t0 + shift, u0, h)
    assume(base is not None)
    assert moved == pytest.approx(base + shift, abs=1e-9 * max(1.0, abs(shift)))
    qb = _propose(pts, t0, u0 * 0.9, h, "quadratic")
    qm = _propose([(t + shift, u) for t, u in pts], t0 + shift, u0 * 0.9, h, "quadratic")
    if qb is None:
        assert qm is None
    else:
        assert qm == pytest.approx(qb + shift, abs=1e-8 * max(1.0, abs(shift)))


@given(st.floats(0.5, 5.0), st.floats(0.05, 0.95), st.floats(0.01, 0.2),
       st.floats(-10.0, 10.0))
def test_quadratic_exact_on_parabolas(curv, frac, h, t_shift):
    # u(t) = a (t - r)(t - r - 1) with the root r a fraction of a step ahead
    t0 = t_shift
    r = t0 + frac * h
    u = lambda t: curv * (t - r) * (t - r - 1.0)
    pts = [(t0 - 2 * h, u(t0 - 2 * h)), (t0 - h, u(t0 - h))]
    quad = _propose(pts, t0, u(t0), 10 * h, "quadratic")
    lin = _propose(pts[1:], t0, u(t0), 10 * h, "linear")
    assert quad == pytest.approx(r, abs=1e-9 * max(1.0, abs(r)))
    assert lin is not None and abs(lin - r) > abs(quad - r)


def test_quadratic_beats_linear_on_sinusoids_on_average():
    # mean timing error over many phases of a sampled sine with an offset
    h, level = 0.02, 0.3
    u = lambda t, ph: math.sin(2 * math.pi * t + ph) - level
    errs = {"linear": [], "quadratic": []}
    for ph in np.linspace(0.0, 2 * math.pi, 97):
        t = 2 * h
        while not (u(t, ph) * u(t + h, ph) < 0):
            t += h
        root = t
        for _ in range(60):
            root -= u(root, ph) / (2 * math.pi * math.cos(2 * math.pi * root + ph))
        pts = [(t - 2 * h, u(t - 2 * h, ph)), (t - h, u(t - h, ph))]
        for mode in errs:
            tp = _propose(pts, t, u(t, ph), 10 * h, mode)
            errs[mode].append(abs(tp - root) if tp is not None else h)
    assert np.mean(errs["quadratic"]) < 0.5 * np.mean(errs["linear"])
