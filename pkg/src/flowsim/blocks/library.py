"""Built-in element templates."""

from __future__ import annotations

import math
from bisect import bisect_right

from ..errors import ParamError
from .template import BlockTemplate, JacobianKind, Kind

REGISTRY: dict[str, BlockTemplate] = {}

SQRT3 = math.sqrt(3.0)
TWO_PI = 2.0 * math.pi


def register(template: BlockTemplate) -> BlockTemplate:
    if template.name in REGISTRY:
        raise ValueError(f"template {template.name!r} already registered")
    REGISTRY[template.name] = template
    return template


def get_template(name: str) -> BlockTemplate:
    return REGISTRY[name]


def _no_jac(p, ot, v, t):
    return {}


# ---------------------------------------------------------------------------
# sources

def _const(p, ot, v, t):
    return {"y": p["value"]}


register(BlockTemplate(
    name="const", kind=Kind.EVALUATE, outputs=("y",),
    real_params=(("value", 0.0),), out_params=("y",),
    g_var_map=({"y"},), fn=_const, jac=_no_jac,
))


def _step(p, ot, v, t):
    return {"y": p["y1"] if t >= p["t_step"] else p["y0"]}


def _step_break(p, ot, t_now):
    return p["t_step"] if p["t_step"] > t_now else None


register(BlockTemplate(
    name="step_source", kind=Kind.EVALUATE, outputs=("y",),
    real_params=(("t_step", 0.0), ("y0", 0.0), ("y1", 1.0)), out_params=("y",),
    g_var_map=({"y"},), fn=_step, jac=_no_jac, break_fn=_step_break, time_varying=True,
))


def _sine(p, ot, v, t):
    return {"y": p["offset"] + p["amplitude"] * math.sin(TWO_PI * p["freq"] * t + p["phase"])}


register(BlockTemplate(
    name="sine_source", kind=Kind.EVALUATE, outputs=("y",),
    real_params=(("amplitude", 1.0), ("freq", 1.0), ("phase", 0.0), ("offset", 0.0)),
    out_params=("y",), g_var_map=({"y"},), fn=_sine, jac=_no_jac, time_varying=True,
))


def _triangle_one_time(p):
    if p["period"] <= 0.0:
        raise ParamError("triangle_source: period must be positive")
    return (0.5 * p["period"],)


def _triangle(p, ot, v, t):
    # valleys at k*T, peaks at (k + 1/2)*T
    half = ot[0]
    k = math.floor(t / half)
    s = (t - k * half) / half
    if k % 2 == 0:
        frac = -1.0 + 2.0 * s
    else:
        frac = 1.0 - 2.0 * s
    return {"y": p["offset"] + p["amplitude"] * frac}


def _triangle_break(p, ot, t_now):
    half = ot[0] if ot else 0.5 * p["period"]
    k = math.floor(t_now / half) + 1
    while k * half <= t_now:
        k += 1
    while (k - 1) * half > t_now:
        k -= 1
    return k * half


register(BlockTemplate(
    name="triangle_source", kind=Kind.EVALUATE, outputs=("y",),
    real_params=(("period", 1.0), ("amplitude", 1.0), ("offset", 0.0)),
    out_params=("y",), g_var_map=({"y"},), fn=_triangle, jac=_no_jac,
    one_time_fn=_triangle_one_time, break_fn=_triangle_break, time_varying=True,
))


def parse_table(text: str, max_points: int, what: str) -> tuple:
    """Parse ``"x1,y1; x2,y2; ..."`` into a flat ``(x..., y...)`` tuple."""
    xs, ys = [], []
    for chunk in text.replace("\n", ";").split(";"):
        chunk = chunk.strip()
        if not chunk:
            continue
        parts = chunk.replace(",", " ").split()
        if len(parts) != 2:
            raise ParamError(f"{what}: malformed table entry {chunk!r}")
        try:
            x, y = float(parts[0]), float(parts[1])
        except ValueError:
            raise ParamError(f"{what}: non-numeric table entry {chunk!r}") from None
        xs.append(x)
        ys.append(y)
    if not xs:
        raise ParamError(f"{what}: table is empty")
    if len(xs) > max_points:
        raise ParamError(f"{what}: at most {max_points} points allowed, got {len(xs)}")
    if any(b <= a for a, b in zip(xs, xs[1:])):
        raise ParamError(f"{what}: table abscissae must be strictly increasing")
    return tuple(xs) + tuple(ys)


def _interp(ot, x):
    """Piecewise-linear table lookup with constant end extension.

    Returns ``(value, slope)``; at an interior breakpoint the slope of the
    segment to its right is used.
    """
    n = len(ot) // 2
    xs, ys = ot[:n], ot[n:]
    if x <= xs[0]:
        return ys[0], 0.0
    if x >= xs[-1]:
        return ys[-1], 0.0
    i = bisect_right(xs, x)
    x0, x1 = xs[i - 1], xs[i]
    slope = (ys[i] - ys[i - 1]) / (x1 - x0)
    return ys[i - 1] + slope * (x - x0), slope


def _pwl20(p, ot, v, t):
    return {"y": _interp(ot, t)[0]}


def _pwl20_break(p, ot, t_now):
    n = len(ot) // 2
    i = bisect_right(ot[:n], t_now)
    return ot[i] if i < n else None


register(BlockTemplate(
    name="pwl20", kind=Kind.EVALUATE, outputs=("y",),
    string_params=(("points", "0,0"),), out_params=("y",), g_var_map=({"y"},),
    fn=_pwl20, jac=_no_jac, time_varying=True, break_fn=_pwl20_break,
    one_time_fn=lambda p: parse_table(p["points"], 20, "pwl20"),
))


def _pwl10_xy(p, ot, v, t):
    return {"y": _interp(ot, v["x"])[0]}


def _pwl10_xy_jac(p, ot, v, t):
    return {("y", "x"): _interp(ot, v["x"])[1]}


register(BlockTemplate(
    name="pwl10_xy", kind=Kind.EVALUATE, inputs=("x",), outputs=("y",),
    string_params=(("points", "0,0; 1,1"),), out_params=("x", "y"),
    g_var_map=({"y", "x"},), jacobian_kind=JacobianKind.VARIABLE,
    fn=_pwl10_xy, jac=_pwl10_xy_jac,
    one_time_fn=lambda p: parse_table(p["points"], 10, "pwl10_xy"),
))


# ---------------------------------------------------------------------------
# algebraic blocks

def _sum2(p, ot, v, t):
    return {"y": p["k1"] * v["x1"] + p["k2"] * v["x2"]}


def _sum2_jac(p, ot, v, t):
    return {("y", "x1"): p["k1"], ("y", "x2"): p["k2"]}


register(BlockTemplate(
    name="sum_2", kind=Kind.EVALUATE, inputs=("x1", "x2"), outputs=("y",),
    real_params=(("k1", 1.0), ("k2", 1.0)), out_params=("x1", "x2", "y"),
    g_var_map=({"y", "x1", "x2"},), fn=_sum2, jac=_sum2_jac,
))


def _sum3(p, ot, v, t):
    return {"y": p["k1"] * v["x1"] + p["k2"] * v["x2"] + p["k3"] * v["x3"]}


def _sum3_jac(p, ot, v, t):
    return {("y", "x1"): p["k1"], ("y", "x2"): p["k2"], ("y", "x3"): p["k3"]}


register(BlockTemplate(
    name="sum_3", kind=Kind.EVALUATE, inputs=("x1", "x2", "x3"), outputs=("y",),
    real_params=(("k1", 1.0), ("k2", 1.0), ("k3", 1.0)), out_params=("x1", "x2", "x3", "y"),
    g_var_map=({"y", "x1", "x2", "x3"},), fn=_sum3, jac=_sum3_jac,
))


register(BlockTemplate(
    name="gain", kind=Kind.EVALUATE, inputs=("x",), outputs=("y",),
    real_params=(("k", 1.0),), out_params=("x", "y"), g_var_map=({"y", "x"},),
    fn=lambda p, ot, v, t: {"y": p["k"] * v["x"]},
    jac=lambda p, ot, v, t: {("y", "x"): p["k"]},
))


def _mult2(p, ot, v, t):
    return {"y": p["k"] * v["x1"] * v["x2"]}


def _mult2_jac(p, ot, v, t):
    return {("y", "x1"): p["k"] * v["x2"], ("y", "x2"): p["k"] * v["x1"]}


register(BlockTemplate(
    name="mult_2", kind=Kind.EVALUATE, inputs=("x1", "x2"), outputs=("y",),
    real_params=(("k", 1.0),), out_params=("x1", "x2", "y"),
    g_var_map=({"y", "x1", "x2"},), jacobian_kind=JacobianKind.VARIABLE,
    fn=_mult2, jac=_mult2_jac,
))


register(BlockTemplate(
    name="sin_fn", kind=Kind.EVALUATE, inputs=("x",), outputs=("y",),
    real_params=(("k", 1.0), ("phase", 0.0)), out_params=("x", "y"),
    g_var_map=({"y", "x"},), jacobian_kind=JacobianKind.VARIABLE,
    fn=lambda p, ot, v, t: {"y": p["k"] * math.sin(v["x"] + p["phase"])},
    jac=lambda p, ot, v, t: {("y", "x"): p["k"] * math.cos(v["x"] + p["phase"])},
))

register(BlockTemplate(
    name="cos_fn", kind=Kind.EVALUATE, inputs=("x",), outputs=("y",),
    real_params=(("k", 1.0), ("phase", 0.0)), out_params=("x", "y"),
    g_var_map=({"y", "x"},), jacobian_kind=JacobianKind.VARIABLE,
    fn=lambda p, ot, v, t: {"y": p["k"] * math.cos(v["x"] + p["phase"])},
    jac=lambda p, ot, v, t: {("y", "x"): -p["k"] * math.sin(v["x"] + p["phase"])},
))


def _comparator(p, ot, v, t):
    return {"y": p["y_high"] if v["x1"] > v["x2"] else p["y_low"]}


def _comparator_jac(p, ot, v, t):
    # piecewise constant
    return {("y", "x1"): 0.0, ("y", "x2"): 0.0}


def _comparator_mode(p):
    mode = p["extrap"]
    if mode not in ("linear", "quadratic"):
        raise ParamError(f"comparator: extrap must be 'linear' or 'quadratic', got {mode!r}")
    return ()


register(BlockTemplate(
    name="comparator", kind=Kind.EVALUATE, inputs=("x1", "x2"), outputs=("y",),
    real_params=(("y_high", 1.0), ("y_low", -1.0)), string_params=(("extrap", "linear"),),
    out_params=("x1", "x2", "y"), g_var_map=({"y", "x1", "x2"},),
    fn=_comparator, jac=_comparator_jac, one_time_fn=_comparator_mode,
    crossing_fn=lambda p, v: v["x1"] - v["x2"],
))


def _abc_one_time(p):
    conv = p["convention"]
    if conv == "amplitude":
        return (2.0 / 3.0, 1.0 / SQRT3)
    if conv == "power":
        return (math.sqrt(2.0 / 3.0), 1.0 / math.sqrt(2.0))
    raise ParamError(f"abc_to_dq: unknown convention {conv!r} (use 'amplitude' or 'power')")


def _abc_to_dq(p, ot, v, t):
    kq, kd = ot
    a, b, c = v["a"], v["b"], v["c"]
    return {"q": kq * (a - 0.5 * b - 0.5 * c), "d": kd * (c - b)}


def _abc_to_dq_jac(p, ot, v, t):
    kq, kd = ot
    return {
        ("q", "a"): kq, ("q", "b"): -0.5 * kq, ("q", "c"): -0.5 * kq,
        ("d", "b"): -kd, ("d", "c"): kd,
    }


register(BlockTemplate(
    name="abc_to_dq", kind=Kind.EVALUATE, inputs=("a", "b", "c"), outputs=("d", "q"),
    string_params=(("convention", "amplitude"),), out_params=("a", "b", "c", "d", "q"),
    g_var_map=({"d", "a", "b", "c"}, {"q", "a", "b", "c"}),
    fn=_abc_to_dq, jac=_abc_to_dq_jac, one_time_fn=_abc_one_time,
))


# ---------------------------------------------------------------------------
# integrate-kind blocks

register(BlockTemplate(
    name="integrator", kind=Kind.INTEGRATE, inputs=("x",), outputs=("y",),
    real_params=(("k", 1.0),), startup_params=(("y_st", 0.0),), out_params=("x", "y"),
    f_var_map=("y",), g_var_map=({"x"},),
    fn=lambda p, ot, v, t: [p["k"] * v["x"]],
    jac=lambda p, ot, v, t: {(0, "x"): p["k"]},
))


def _lag1_one_time(p):
    if p["Tr"] == 0.0:
        raise ParamError("lag_1: Tr must be nonzero")
    return (1.0 / p["Tr"],)


register(BlockTemplate(
    name="lag_1", kind=Kind.INTEGRATE, inputs=("x",), outputs=("y",),
    real_params=(("Tr", 1.0),), startup_params=(("y_st", 0.0),), out_params=("x", "y"),
    f_var_map=("y",), g_var_map=({"x", "y"},), one_time_fn=_lag1_one_time,
    fn=lambda p, ot, v, t: [ot[0] * (v["x"] - v["y"])],
    jac=lambda p, ot, v, t: {(0, "x"): ot[0], (0, "y"): -ot[0]},
))


# induction machine, dq model in the stationary frame
def _indmc1_one_time(p):
    lm, lls, llr, j, poles = p["lm"], p["lls"], p["llr"], p["j"], p["poles"]
    if lm == 0.0:
        raise ParamError("indmc1: lm must be nonzero")
    if j == 0.0:
        raise ParamError("indmc1: j must be nonzero")
    ls = lls + lm
    lr = llr + lm
    le = ls * lr / lm - lm
    if abs(le) <= 1e-12 * abs(lm):
        raise ParamError("indmc1: Le = Ls*Lr/Lm - Lm is zero (no leakage inductance)")
    return (ls, lr, le,
            lr / (lm * le), 1.0 / le, 1.0 / lm, lls / lm + 1.0,
            0.75 * poles * lm, 1.0 / j, 0.5 * poles)


def _indmc1_currents(ot, v):
    a, b, c, d, e = ot[3], ot[4], ot[5], ot[6], ot[7]
    ids = a * v["psids"] - b * v["psidr"]
    iqs = a * v["psiqs"] - b * v["psiqr"]
    idr = c * v["psids"] - d * ids
    iqr = c * v["psiqs"] - d * iqs
    tem = e * (iqs * idr - ids * iqr)
    return ids, iqs, idr, iqr, tem


def _indmc1(p, ot, v, t):
    ids, iqs, idr, iqr, tem = _indmc1_currents(ot, v)
    inv_j, pp = ot[8], ot[9]
    rs, rr, w = p["rs"], p["rr"], v["wrm"]
    return [
        v["vds"] - rs * ids,
        v["vqs"] - rs * iqs,
        -pp * w * v["psiqr"] - rr * idr,
        pp * w * v["psidr"] - rr * iqr,
        inv_j * (tem - v["tl"]),
    ]


def _indmc1_jac(p, ot, v, t):
    a, b, c, d, e, inv_j, pp = ot[3], ot[4], ot[5], ot[6], ot[7], ot[8], ot[9]
    rs, rr, w = p["rs"], p["rr"], v["wrm"]
    ids, iqs, idr, iqr, _ = _indmc1_currents(ot, v)
    # d(idr)/d(psids) = c - d*a, d(idr)/d(psidr) = d*b; same pattern for q axis
    cda = c - d * a
    db = d * b
    return {
        (0, "vds"): 1.0, (0, "psids"): -rs * a, (0, "psidr"): rs * b,
        (1, "vqs"): 1.0, (1, "psiqs"): -rs * a, (1, "psiqr"): rs * b,
        (2, "wrm"): -pp * v["psiqr"], (2, "psiqr"): -pp * w,
        (2, "psids"): -rr * cda, (2, "psidr"): -rr * db,
        (3, "wrm"): pp * v["psidr"], (3, "psidr"): pp * w,
        (3, "psiqs"): -rr * cda, (3, "psiqr"): -rr * db,
        (4, "tl"): -inv_j,
        (4, "psids"): inv_j * e * (iqs * cda - a * iqr),
        (4, "psidr"): inv_j * e * (iqs * db + b * iqr),
        (4, "psiqs"): inv_j * e * (a * idr - ids * cda),
        (4, "psiqr"): inv_j * e * (-b * idr - ids * db),
    }


def _indmc1_outparms(p, ot, v, t):
    ids, iqs, idr, iqr, tem = _indmc1_currents(ot, v)
    return {
        "ids": ids, "iqs": iqs, "idr": idr, "iqr": iqr, "tem": tem, "wrm": v["wrm"],
        "psids": v["psids"], "psiqs": v["psiqs"], "psidr": v["psidr"], "psiqr": v["psiqr"],
    }


register(BlockTemplate(
    name="indmc1", kind=Kind.INTEGRATE,
    inputs=("vqs", "vds", "tl"), outputs=("wrm",),
    aux_vars=("psids", "psiqs", "psidr", "psiqr"),
    # 3 hp, 4-pole machine
    real_params=(("rs", 0.435), ("rr", 0.816), ("lls", 0.002), ("llr", 0.002),
                 ("lm", 0.0693), ("j", 0.089), ("poles", 4.0)),
    startup_params=(("psids_st", 0.0), ("psiqs_st", 0.0), ("psidr_st", 0.0),
                    ("psiqr_st", 0.0), ("wrm_st", 0.0)),
    out_params=("ids", "iqs", "idr", "iqr", "tem", "wrm", "psids", "psiqs", "psidr", "psiqr"),
    f_var_map=("psids", "psiqs", "psidr", "psiqr", "wrm"),
    g_var_map=(
        {"vds", "psids", "psidr"},
        {"vqs", "psiqs", "psiqr"},
        {"wrm", "psids", "psidr", "psiqr"},
        {"wrm", "psiqs", "psidr", "psiqr"},
        {"tl", "psids", "psiqs", "psidr", "psiqr"},
    ),
    jacobian_kind=JacobianKind.VARIABLE,
    fn=_indmc1, jac=_indmc1_jac, outparm_fn=_indmc1_outparms, one_time_fn=_indmc1_one_time,
))
