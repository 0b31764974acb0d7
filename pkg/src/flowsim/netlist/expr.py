"""Parameter expressions.

A small, sandboxed arithmetic language for block and subcircuit
parameters: real literals, names, ``+ - * /``, unary minus, parentheses
and the functions sqrt, sin, cos, exp, log, abs, min, max.  ``pi`` is
predefined.  Expressions are parsed with :mod:`ast` and evaluated by a
whitelisting walker; nothing is ever passed to ``eval``.
"""

from __future__ import annotations

import ast
import math
from dataclasses import dataclass, field
from typing import Mapping

from ..errors import ParamError

CONSTANTS = {"pi": math.pi}


def _checked(fn, name):
    def call(*args):
        try:
            return fn(*args)
        except (ValueError, OverflowError):
            raise ParamError(f"domain error in {name}{args!r}") from None
    return call


FUNCTIONS = {
    "sqrt": (_checked(math.sqrt, "sqrt"), 1),
    "sin": (math.sin, 1),
    "cos": (math.cos, 1),
    "exp": (_checked(math.exp, "exp"), 1),
    "log": (_checked(math.log, "log"), 1),
    "abs": (abs, 1),
    "min": (min, None),
    "max": (max, None),
}

_BINOPS = {ast.Add: "+", ast.Sub: "-", ast.Mult: "*", ast.Div: "/"}


@dataclass(frozen=True)
class ParamExpr:
    text: str
    tree: ast.AST = field(compare=False, repr=False)

    @classmethod
    def parse(cls, text: str) -> "ParamExpr":
        src = text.strip()
        if not src:
            raise ParamError("empty expression")
        try:
            tree = ast.parse(src, mode="eval").body
        except SyntaxError as exc:
            raise ParamError(f"invalid expression {text!r}", col=exc.offset) from None
        _validate(tree, text)
        return cls(src, tree)

    @property
    def names(self) -> set:
        return {n.id for n in ast.walk(self.tree)
                if isinstance(n, ast.Name) and n.id not in CONSTANTS and n.id not in FUNCTIONS}

    def evaluate(self, env: Mapping[str, float]) -> float:
        return eval_param_expr(self, env)


def _validate(node, text):
    if isinstance(node, ast.Constant):
        if isinstance(node.value, bool) or not isinstance(node.value, (int, float)):
            raise ParamError(f"unsupported literal in {text!r}")
    elif isinstance(node, ast.Name):
        pass
    elif isinstance(node, ast.BinOp):
        if type(node.op) not in _BINOPS:
            raise ParamError(f"unsupported operator in {text!r}")
        _validate(node.left, text)
        _validate(node.right, text)
    elif isinstance(node, ast.UnaryOp):
        if not isinstance(node.op, (ast.USub, ast.UAdd)):
            raise ParamError(f"unsupported operator in {text!r}")
        _validate(node.operand, text)
    elif isinstance(node, ast.Call):
        if not isinstance(node.func, ast.Name) or node.func.id not in FUNCTIONS or node.keywords:
            raise ParamError(f"unsupported function call in {text!r}")
        _, arity = FUNCTIONS[node.func.id]
        if (arity is not None and len(node.args) != arity) or not node.args:
            raise ParamError(f"wrong number of arguments to {node.func.id} in {text!r}")
        for arg in node.args:
            _validate(arg, text)
    else:
        raise ParamError(f"unsupported syntax in {text!r}")


def eval_param_expr(expr: ParamExpr | str, env: Mapping[str, float]) -> float:
    if isinstance(expr, str):
        expr = ParamExpr.parse(expr)
    result = float(_eval(expr.tree, env, expr.text))
    if not math.isfinite(result):
        raise ParamError(f"non-finite result in {expr.text!r}")
    return result


def _eval(node, env, text):
    if isinstance(node, ast.Constant):
        return float(node.value)
    if isinstance(node, ast.Name):
        if node.id in env:
            return float(env[node.id])
        if node.id in CONSTANTS:
            return CONSTANTS[node.id]
        raise ParamError(f"unbound name {node.id!r} in {text!r}")
    if isinstance(node, ast.UnaryOp):
        val = _eval(node.operand, env, text)
        return -val if isinstance(node.op, ast.USub) else val
    if isinstance(node, ast.BinOp):
        left = _eval(node.left, env, text)
        right = _eval(node.right, env, text)
        op = type(node.op)
        if op is ast.Add:
            return left + right
        if op is ast.Sub:
            return left - right
        if op is ast.Mult:
            return left * right
        if right == 0.0:
            raise ParamError(f"division by zero in {text!r}")
        return left / right
    fn, _ = FUNCTIONS[node.func.id]
    result = fn(*[_eval(a, env, text) for a in node.args])
    if not math.isfinite(result):
        raise ParamError(f"non-finite result in {text!r}")
    return result
