"""Newton-Raphson on the assembled residual with sparse LU."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConvergenceError, NewtonFailure


@dataclass
class NewtonStats:
    iterations: int
    residual: float
    correction: float


def newton_solve(graph, disc, guess: np.ndarray, cfg):
    """Solve ``R(x) = 0`` for the discretisation ``disc`` starting from ``guess``.

    Returns ``(x, NewtonStats)``.  ``iterations`` counts applied corrections,
    so an affine residual converges in exactly one and an already converged
    guess in zero.  Raises :class:`NewtonFailure` when ``cfg.newton_max_iters``
    corrections do not reach both tolerances.
    """
    x = np.array(guess, dtype=float)
    iters = 0
    with np.errstate(all="ignore"):
        while True:
            try:
                r, jac = graph.residual_and_jacobian(x, disc)
            except NewtonFailure:
                raise
            except ConvergenceError as exc:
                raise NewtonFailure(exc.message, iterations=iters, t=disc.t) from None
            dx = graph.factorize(jac).solve(r)
            if not np.all(np.isfinite(dx)):
                raise NewtonFailure("non-finite Newton correction", iterations=iters, t=disc.t)
            r_norm = float(np.max(np.abs(r))) if r.size else 0.0
            dx_norm = float(np.max(np.abs(dx))) if dx.size else 0.0
            x_norm = float(np.max(np.abs(x))) if x.size else 0.0
            if r_norm <= cfg.newton_tol_abs and dx_norm <= cfg.newton_tol_rel * (1.0 + x_norm):
                return x, NewtonStats(iters, r_norm, dx_norm)
            if iters >= cfg.newton_max_iters:
                raise NewtonFailure(
                    f"Newton did not converge in {iters} iterations (|r| = {r_norm:.3g})",
                    iterations=iters, t=disc.t)
            x = x - dx
            iters += 1
