"""From a flat netlist to an executable equation system.

Every net and every auxiliary block variable gets a dense index, sorted by
name.  Each variable is defined by exactly one equation: the g-function
of the block output (or f-function of the state) that drives it, so
equation rows share the variable indexing.
"""

from __future__ import annotations

import graphlib
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import splu

from .blocks.library import REGISTRY
from .blocks.template import BlockEvalRequest, BlockTemplate, JacobianKind, Kind, Mode
from .errors import AssemblyError, ConvergenceError, NewtonFailure, TemplateError
from .netlist.flatten import FlatNetlist


@dataclass
class BlockInstance:
    name: str
    template: BlockTemplate
    params: dict
    one_time: tuple
    local_index: dict               # local variable name -> global index
    input_slots: list               # (local, global) for inputs
    var_slots: list                 # (local, global) for every variable
    eq_rows: list                   # global row of each g / f function

    @property
    def kind(self) -> Kind:
        return self.template.kind

    def signals(self, x, slots=None) -> dict:
        return {loc: float(x[k]) for loc, k in (slots or self.var_slots)}


@dataclass(frozen=True)
class Discretization:
    """Time discretisation of the state rows: ``y - base - beta * g(x) = 0``.

    ``beta = 0`` pins the states to ``base`` (used to make the algebraic
    variables consistent with a given state).
    """

    t: float
    beta: float
    base: np.ndarray

    @classmethod
    def backward_euler(cls, graph, x_old, h, t_new):
        return cls(t_new, h, np.array(x_old, dtype=float))

    @classmethod
    def trapezoidal(cls, graph, x_old, g_old, h, t_new):
        return cls(t_new, 0.5 * h, np.asarray(x_old, dtype=float) + 0.5 * h * np.asarray(g_old))

    @classmethod
    def bdf2(cls, x_a, x_b, t_a, t_b, t_c):
        """Variable-step BDF2 through points at ``t_a < t_b < t_c``."""
        h1, h2 = t_b - t_a, t_c - t_b
        ac = (2.0 * h2 + h1) / (h2 * (h1 + h2))
        ab = -(h1 + h2) / (h1 * h2)
        aa = h2 / (h1 * (h1 + h2))
        base = -(ab * np.asarray(x_b) + aa * np.asarray(x_a)) / ac
        return cls(t_c, 1.0 / ac, base)

    @classmethod
    def pinned(cls, x, t):
        return cls(t, 0.0, np.array(x, dtype=float))


@dataclass
class SystemGraph:
    flat: FlatNetlist
    var_names: list
    index: dict
    blocks: list
    state_idx: np.ndarray
    algebraic_idx: np.ndarray
    eval_order: Optional[list]
    loops: list
    drivers: dict
    _const_jac: dict = field(default_factory=dict, repr=False)

    # -- roster -----------------------------------------------------------
    @property
    def n_vars(self) -> int:
        return len(self.var_names)

    @property
    def n_eqns(self) -> int:
        return sum(len(b.eq_rows) for b in self.blocks)

    @property
    def n_states(self) -> int:
        return len(self.state_idx)

    @property
    def state_names(self) -> list:
        return [self.var_names[k] for k in self.state_idx]

    @property
    def is_state(self) -> np.ndarray:
        mask = np.zeros(self.n_vars, dtype=bool)
        mask[self.state_idx] = True
        return mask

    def block(self, name: str) -> BlockInstance:
        for b in self.blocks:
            if b.name == name:
                return b
        raise KeyError(name)

    def require_eval_order(self) -> list:
        if self.eval_order is None:
            text = "; ".join(" -> ".join(loop) for loop in self.loops)
            raise AssemblyError(
                f"algebraic loop among evaluate blocks ({text}); explicit methods cannot "
                "proceed, use an implicit method")
        return self.eval_order

    def startup_state(self) -> np.ndarray:
        """Full vector with start-up values in the state entries, zero elsewhere."""
        x = np.zeros(self.n_vars)
        for b in self.blocks:
            if b.kind is Kind.INTEGRATE:
                for var, val in b.template.startup_values(b.params).items():
                    x[b.local_index[var]] = val
        return x

    # -- explicit path ----------------------------------------------------
    def eval_algebraic(self, x: np.ndarray, t: float) -> np.ndarray:
        """Fill in every algebraic entry of ``x`` (in place) from its states at ``t``."""
        order = self.require_eval_order()
        for bi in order:
            b = self.blocks[bi]
            req = BlockEvalRequest(Mode.EXPLICIT_F, t, b.signals(x, b.input_slots))
            out = b.template.evaluate_outputs(req, b.params, b.one_time)
            for var, val in out.items():
                if not math.isfinite(val):
                    raise ConvergenceError(f"block {b.name!r} produced non-finite {var}={val}", t=t)
                x[b.local_index[var]] = val
        return x

    def full_state(self, y: np.ndarray, t: float) -> np.ndarray:
        x = np.zeros(self.n_vars)
        x[self.state_idx] = y
        return self.eval_algebraic(x, t)

    def derivatives(self, x: np.ndarray, t: float) -> np.ndarray:
        """State derivatives (over ``state_idx``) at a consistent full vector ``x``."""
        dx = np.zeros(self.n_vars)
        for b in self.blocks:
            if b.kind is not Kind.INTEGRATE:
                continue
            req = BlockEvalRequest(Mode.EXPLICIT_F, t, b.signals(x))
            f = b.template.state_derivatives(req, b.params, b.one_time)
            for row, val in zip(b.eq_rows, f):
                if not math.isfinite(val):
                    raise ConvergenceError(f"block {b.name!r} produced a non-finite derivative", t=t)
                dx[row] = val
        return dx[self.state_idx]

    def rhs(self, y: np.ndarray, t: float) -> np.ndarray:
        return self.derivatives(self.full_state(y, t), t)

    # -- implicit path ----------------------------------------------------
    def g_values(self, x: np.ndarray, t: float, with_jac: bool = False):
        """All g-functions at ``x``; optionally their Jacobian as COO triplets."""
        g = np.zeros(self.n_vars)
        rows, cols, vals = [], [], []
        mode = Mode.IMPLICIT_DGDX if with_jac else Mode.IMPLICIT_G
        for bi, b in enumerate(self.blocks):
            req = BlockEvalRequest(mode, t, b.signals(x))
            cached = with_jac and bi in self._const_jac
            if cached:
                req = BlockEvalRequest(Mode.IMPLICIT_G, t, req.signal_values)
            gb, dg = b.template.residual_and_jacobian(req, b.params, b.one_time)
            for row, val in zip(b.eq_rows, gb):
                if not math.isfinite(val):
                    raise ConvergenceError(f"block {b.name!r} produced a non-finite residual", t=t)
                g[row] = val
            if not with_jac:
                continue
            if cached:
                entries = self._const_jac[bi]
            else:
                entries = [(b.eq_rows[i], b.local_index[var], d) for (i, var), d in dg.items()]
                for _, _, d in entries:
                    if not math.isfinite(d):
                        raise ConvergenceError(f"block {b.name!r} produced a non-finite Jacobian entry", t=t)
                if b.template.jacobian_kind is JacobianKind.CONSTANT:
                    self._const_jac[bi] = entries
            for r, c, d in entries:
                rows.append(r)
                cols.append(c)
                vals.append(d)
        if with_jac:
            return g, (rows, cols, vals)
        return g

    def assemble_residual(self, x_new: np.ndarray, disc: Discretization) -> np.ndarray:
        g = self.g_values(x_new, disc.t)
        return self._residual_from_g(x_new, g, disc)

    def _residual_from_g(self, x_new, g, disc):
        r = g.copy()
        s = self.state_idx
        r[s] = x_new[s] - disc.base[s] - disc.beta * g[s]
        return r

    def assemble_jacobian(self, x_new: np.ndarray, disc: Discretization) -> sp.csc_matrix:
        _, trip = self.g_values(x_new, disc.t, with_jac=True)
        return self._jacobian_from_trip(trip, disc)

    def _jacobian_from_trip(self, trip, disc):
        rows, cols, vals = trip
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        vals = np.asarray(vals, dtype=float)
        vals = vals * np.where(self.is_state[rows], -disc.beta, 1.0)
        s = self.state_idx
        rows = np.concatenate([rows, s])
        cols = np.concatenate([cols, s])
        vals = np.concatenate([vals, np.ones(len(s))])
        n = self.n_vars
        return sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsc()

    def residual_and_jacobian(self, x_new: np.ndarray, disc: Discretization):
        g, trip = self.g_values(x_new, disc.t, with_jac=True)
        return self._residual_from_g(x_new, g, disc), self._jacobian_from_trip(trip, disc)

    def factorize(self, jac: sp.csc_matrix):
        try:
            lu = splu(jac)
        except RuntimeError:
            suspects = self.singular_suspects(jac)
            if suspects:
                raise AssemblyError(
                    "structurally singular Jacobian; suspect equations: " + ", ".join(suspects)) from None
            raise NewtonFailure("singular Jacobian") from None
        return lu

    def singular_suspects(self, jac) -> list:
        a = abs(jac).tocsr()
        out = []
        rows = np.asarray(a.sum(axis=1)).ravel()
        colsum = np.asarray(a.sum(axis=0)).ravel()
        for k in np.flatnonzero(rows == 0.0):
            out.append(f"equation for {self.var_names[k]} (no dependence on any variable)")
        for k in np.flatnonzero(colsum == 0.0):
            out.append(f"variable {self.var_names[k]} (appears in no equation)")
        return out

    # -- observation ------------------------------------------------------
    def out_param(self, x: np.ndarray, t: float, instance: str, name: str) -> float:
        b = self.block(instance)
        req = BlockEvalRequest(Mode.OUT_PARAMS, t, b.signals(x))
        return float(b.template.output_param_values(req, b.params, b.one_time)[name])

    def diagnostics(self) -> dict:
        return {
            "n_vars": self.n_vars,
            "n_eqns": self.n_eqns,
            "n_states": self.n_states,
            "loops": [list(l) for l in self.loops],
        }


def _find_loops(names, deps) -> list:
    """Strongly connected components (size > 1, or self-dependent) of the block graph."""
    n = len(names)
    if n == 0:
        return []
    pos = {name: k for k, name in enumerate(names)}
    rows, cols = [], []
    for b, srcs in deps.items():
        for s in srcs:
            rows.append(pos[s])
            cols.append(pos[b])
    adj = sp.coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n)).tocsr()
    _, labels = connected_components(adj, directed=True, connection="strong")
    loops = []
    for lab in sorted(set(labels)):
        members = sorted(names[k] for k in np.flatnonzero(labels == lab))
        if len(members) > 1 or members[0] in deps.get(members[0], ()):
            loops.append(members)
    return sorted(loops)


def build(flat: FlatNetlist, registry=REGISTRY, strict: bool = True) -> SystemGraph:
    """Index variables, check drivers, order evaluate blocks.

    With ``strict`` a net without a driver is an error; otherwise it is only
    recorded in ``graph.drivers`` (used by diagnostics).
    """
    var_set = set()
    drivers = {}
    for inst in flat.instances:
        try:
            tmpl = registry[inst.template]
        except KeyError:
            raise AssemblyError(f"instance {inst.name!r}: unknown template {inst.template!r}") from None
        for port, net in inst.ports.items():
            var_set.add(net)
            if port in tmpl.outputs:
                drivers.setdefault(net, []).append(f"{inst.name}.{port}")
        for aux in tmpl.aux_vars:
            name = f"{inst.name}.{aux}"
            if name in var_set:
                raise AssemblyError(f"auxiliary variable {name!r} collides with a net name")
            var_set.add(name)
            drivers.setdefault(name, []).append(name)
    for net in var_set:
        drivers.setdefault(net, [])
    multi = {n: d for n, d in drivers.items() if len(d) > 1}
    if multi:
        text = "; ".join(f"{n} <- {', '.join(d)}" for n, d in sorted(multi.items()))
        raise AssemblyError(f"nets with more than one driver: {text}")
    undriven = sorted(n for n, d in drivers.items() if not d)
    if undriven and strict:
        raise AssemblyError(f"nets without a driver: {', '.join(undriven)}")

    var_names = sorted(var_set)
    index = {name: k for k, name in enumerate(var_names)}
    blocks, states = [], []
    for inst in flat.instances:
        tmpl = registry[inst.template]
        local = {port: index[net] for port, net in inst.ports.items()}
        for aux in tmpl.aux_vars:
            local[aux] = index[f"{inst.name}.{aux}"]
        try:
            one_time = tmpl.compute_one_time(inst.params)
        except TemplateError:
            raise
        except Exception as exc:
            msg = getattr(exc, "message", str(exc))
            raise AssemblyError(f"instance {inst.name!r}: {msg}") from None
        rows = [local[v] for v in tmpl.equation_vars]
        if tmpl.kind is Kind.INTEGRATE:
            states.extend(rows)
        blocks.append(BlockInstance(
            name=inst.name, template=tmpl, params=dict(inst.params), one_time=one_time,
            local_index=local,
            input_slots=[(v, local[v]) for v in tmpl.inputs],
            var_slots=[(v, local[v]) for v in tmpl.variables],
            eq_rows=rows,
        ))

    # evaluate-block dependencies: block <- evaluate blocks driving its inputs
    driver_block = {}
    for b in blocks:
        if b.kind is Kind.EVALUATE:
            for out in b.template.outputs:
                driver_block[b.local_index[out]] = b.name
    deps = {}
    for b in blocks:
        if b.kind is Kind.EVALUATE:
            deps[b.name] = sorted({driver_block[k] for _, k in b.input_slots if k in driver_block})
    eval_names = sorted(deps)
    loops = _find_loops(eval_names, deps)
    eval_order = None
    if not loops:
        pos = {b.name: k for k, b in enumerate(blocks)}
        ts = graphlib.TopologicalSorter(deps)
        ts.prepare()
        eval_order = []
        while ts.is_active():
            ready = sorted(ts.get_ready())
            eval_order.extend(pos[name] for name in ready)
            ts.done(*ready)

    return SystemGraph(
        flat=flat, var_names=var_names, index=index, blocks=blocks,
        state_idx=np.array(sorted(states), dtype=np.int64),
        algebraic_idx=np.array(sorted(set(range(len(var_names))) - set(states)), dtype=np.int64),
        eval_order=eval_order, loops=loops, drivers=drivers,
    )
