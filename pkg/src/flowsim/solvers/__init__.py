from .base import StepResult, error_norm, propose_h
from .explicit import TABLEAUS, rk_step, step_explicit_fixed
from .implicit import GAMMA, TRBDF2_C, consistent_state, trbdf2_lte
from .newton import NewtonStats, newton_solve
from .transient import RunStats, StepRecord, TransientResult, make_stepper, run_transient

__all__ = [
    "StepResult", "error_norm", "propose_h",
    "TABLEAUS", "rk_step", "step_explicit_fixed",
    "GAMMA", "TRBDF2_C", "consistent_state", "trbdf2_lte",
    "NewtonStats", "newton_solve",
    "RunStats", "StepRecord", "TransientResult", "make_stepper", "run_transient",
]
