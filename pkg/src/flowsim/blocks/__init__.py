from .crossing import linear_root, propose_crossing, quadratic_root
from .library import REGISTRY, get_template, register
from .template import (
    BlockEvalRequest,
    BlockEvalResult,
    BlockRuntimeState,
    BlockTemplate,
    JacobianKind,
    Kind,
    Mode,
)

__all__ = [
    "REGISTRY", "get_template", "register",
    "BlockEvalRequest", "BlockEvalResult", "BlockRuntimeState", "BlockTemplate",
    "JacobianKind", "Kind", "Mode",
    "linear_root", "quadratic_root", "propose_crossing",
]
