from .expr import ParamExpr, eval_param_expr
from .flatten import FlatInstance, FlatNetlist, FlatOutputFile, flatten, flatten_file, resolve_outputs
from .parser import HighNetlist, InstanceDecl, OutputFileSpec, Pad, SubcircuitDef, parse, parse_file

__all__ = [
    "ParamExpr", "eval_param_expr",
    "FlatInstance", "FlatNetlist", "FlatOutputFile", "flatten", "flatten_file", "resolve_outputs",
    "HighNetlist", "InstanceDecl", "OutputFileSpec", "Pad", "SubcircuitDef", "parse", "parse_file",
]
