"""Zero-crossing prediction for crossing-aware blocks.

The block keeps its last few accepted ``(t, inputs)`` records.  Given the
current point, the crossing signal ``u`` is extrapolated either along the
line through the last two points or along the parabola through the last
three, and the predicted zero ``t'`` is returned when it lies within the
next normal step.
"""

from __future__ import annotations

import math
from typing import Mapping, Optional, Sequence

from .template import BlockRuntimeState, BlockTemplate, Params

CURVATURE_EPS = 1e-12


def linear_root(t1: float, u1: float, t0: float, u0: float) -> Optional[float]:
    """Zero of the line through ``(t1, u1)`` and ``(t0, u0)``, or None if flat."""
    slope = (u0 - u1) / (t0 - t1)
    if slope == 0.0:
        return None
    return t0 - u0 / slope


def quadratic_root(points: Sequence[tuple]) -> tuple[Optional[float], bool]:
    """Smallest zero after the newest point of the parabola through three points.

    ``points`` is ``[(t2, u2), (t1, u1), (t0, u0)]`` oldest first.  Returns
    ``(root, degenerate)``; ``degenerate`` is True when the points are
    collinear within tolerance and the caller should use the line instead.
    """
    (t2, u2), (t1, u1), (t0, u0) = points
    # work in time relative to t0
    s1, s2 = t1 - t0, t2 - t0
    d1 = (u0 - u1) / -s1
    d2 = (u1 - u2) / (s1 - s2)
    a = (d1 - d2) / -s2
    span = -s2
    scale = max(abs(u0), abs(u1), abs(u2)) / (span * span)
    if scale == 0.0 or abs(a) < CURVATURE_EPS * scale:
        return None, True
    b = d1 - a * s1
    disc = b * b - 4.0 * a * u0
    if disc < 0.0:
        if disc < -CURVATURE_EPS * b * b:
            return None, False
        disc = 0.0
    sq = math.sqrt(disc)
    q = -0.5 * (b + math.copysign(sq, b))
    roots = []
    if q != 0.0:
        roots += [q / a, u0 / q]
    else:
        roots.append(-b / (2.0 * a))
    after = [r for r in roots if r > 0.0]
    if not after:
        return None, False
    return t0 + min(after), False


def propose_crossing(
    template: BlockTemplate,
    state: BlockRuntimeState,
    t0: float,
    inputs_now: Mapping[str, float],
    dt_normal: float,
    params: Params,
    mode: Optional[str] = None,
) -> Optional[float]:
    """Predicted crossing time in ``(t0, t0 + dt_normal]`` or None.

    ``state.history`` holds the previous accepted points (not including
    ``t0``).  ``mode`` overrides the block's ``extrap`` parameter.
    """
    if not template.crossing_aware or not state.history:
        return None
    mode = mode or params.get("extrap", "linear")
    u0 = template.crossing_signal(params, inputs_now)
    past = [(t, template.crossing_signal(params, v)) for t, v in state.history]
    t_prime = None
    if mode == "quadratic" and len(past) >= 2:
        t_prime, degenerate = quadratic_root([past[-2], past[-1], (t0, u0)])
        if degenerate:
            t_prime = linear_root(past[-1][0], past[-1][1], t0, u0)
    else:
        t_prime = linear_root(past[-1][0], past[-1][1], t0, u0)
    if t_prime is None or not (t0 < t_prime <= t0 + dt_normal):
        return None
    return t_prime
