"""Subcircuit expansion and output-name resolution."""

from __future__ import annotations

import difflib
from dataclasses import dataclass, field
from typing import Mapping, Optional

from ..blocks.library import REGISTRY
from ..blocks.template import BlockTemplate
from ..config import SOLVE_KEYS, SolveSpec
from ..errors import AssemblyError, ConfigError, NetlistError, ParamError
from ..output import NetBinding, OutputRequest, ParamBinding
from .expr import ParamExpr
from .parser import HighNetlist, InstanceDecl, SubcircuitDef

_TRUE = {"on", "true", "yes", "1"}
_FALSE = {"off", "false", "no", "0"}


@dataclass
class FlatInstance:
    name: str
    template: str
    ports: dict     # port -> global net
    params: dict    # fully resolved, template defaults included


@dataclass
class FlatOutputFile:
    file: str
    vars: list
    interval: Optional[float] = None
    svg: bool = False


@dataclass
class FlatNetlist:
    instances: list
    outputs: list = field(default_factory=list)         # OutputRequest with binding set
    output_files: list = field(default_factory=list)
    solve: SolveSpec = field(default_factory=SolveSpec)
    exports: dict = field(default_factory=dict)         # "motor.wrm" -> binding
    aliases: dict = field(default_factory=dict)         # any local net name -> global net

    @property
    def nets(self) -> list:
        return sorted({n for inst in self.instances for n in inst.ports.values()})

    def instance(self, name: str) -> FlatInstance:
        for inst in self.instances:
            if inst.name == name:
                return inst
        raise KeyError(name)

    def to_text(self) -> str:
        """Canonical low-level text form; parses back to an identical netlist."""
        lines = []
        for inst in self.instances:
            parts = ["block", inst.name, inst.template]
            parts += [f"{k}={v}" for k, v in sorted(inst.ports.items())]
            for k, v in sorted(inst.params.items()):
                parts.append(f'{k}="{v}"' if isinstance(v, str) else f"{k}={v!r}")
            lines.append(" ".join(parts))
        for req in self.outputs:
            lines.append(f"outvar {req.alias} = {req.binding}")
        for spec in self.output_files:
            parts = ["output", f"file={spec.file}", f"vars={','.join(spec.vars)}"]
            if spec.interval is not None:
                parts.append(f"interval={spec.interval!r}")
            if spec.svg:
                parts.append("svg=on")
            lines.append(" ".join(parts))
        lines.append(self.solve.to_text())
        return "\n".join(lines) + "\n"


class _Nets:
    """Union-find over global net names."""

    def __init__(self):
        self.parent = {}

    def add(self, name):
        self.parent.setdefault(name, name)
        return name

    def find(self, name):
        self.add(name)
        root = name
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[name] != root:
            self.parent[name], name = root, self.parent[name]
        return root

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return
        # representative: shallowest name, then lexicographic
        keep, drop = sorted((ra, rb), key=lambda n: (n.count("."), n))
        self.parent[drop] = keep


def _eval(expr, env, inst: Optional[InstanceDecl], what):
    try:
        return expr.evaluate(env)
    except ParamError as exc:
        msg = f"{what}: {exc.message}"
        if inst is not None:
            raise NetlistError(msg, inst.line, inst.col, inst.source) from None
        raise ParamError(msg) from None


def _scope_env(pairs, env, what):
    env = dict(env)
    for name, expr in pairs:
        env[name] = _eval(expr, env, None, f"{what} {name!r}")
    return env


class _Flattener:
    def __init__(self, subckts: Mapping[str, SubcircuitDef], registry):
        self.subckts = subckts
        self.registry = registry
        self.nets = _Nets()
        self.leaves = []            # (path, template, {port: raw global net}, params)
        self.local = {}             # hierarchical local net name -> raw global net
        self.exports = {}

    def expand(self, body, prefix, netmap, env, stack):
        for inst in body:
            path = prefix + inst.name
            ports = {}
            for port, label in inst.ports.items():
                if label in netmap:
                    net = netmap[label]
                else:
                    net = self.nets.add(prefix + label)
                    self.local[prefix + label] = net
                ports[port] = net
            if inst.ref in self.registry:
                tmpl: BlockTemplate = self.registry[inst.ref]
                values = {}
                for name, val in inst.params.items():
                    values[name] = val if isinstance(val, str) else _eval(val, env, inst, f"{path}.{name}")
                try:
                    params = tmpl.resolve_params(values)
                except ParamError as exc:
                    raise NetlistError(exc.message, inst.line, inst.col, inst.source) from None
                self.leaves.append((path, tmpl, ports, params))
            else:
                self.expand_subckt(inst, path, ports, env, stack)

    def expand_subckt(self, inst, path, ports, caller_env, stack):
        sub = self.subckts[inst.ref]
        if sub.name in stack:
            cycle = " -> ".join(list(stack[stack.index(sub.name):]) + [sub.name])
            raise NetlistError(f"recursive subckt instantiation: {cycle}",
                               inst.line, inst.col, inst.source)
        env = {}
        for name, expr in sub.params:
            if name in inst.params:
                env[name] = _eval(inst.params[name], caller_env, inst, f"{path}.{name}")
            else:
                env[name] = _eval(expr, env, inst, f"default of {sub.name}.{name}")
        for name, expr in sub.lets:
            env[name] = _eval(expr, env, inst, f"{sub.name}: let {name}")
        netmap = {}
        for pad in sub.pads:
            outer = ports[pad.name]
            if pad.net in netmap:
                # two pads on one internal net: the caller nets become one
                self.nets.union(netmap[pad.net], outer)
            else:
                netmap[pad.net] = outer
            self.local[f"{path}.{pad.net}"] = netmap[pad.net]
            self.local.setdefault(f"{path}.{pad.name}", outer)
        self.expand(sub.body, path + ".", netmap, env, stack + [sub.name])
        for name, target in sub.out_param_map.items():
            self.exports[f"{path}.{name}"] = (f"{path}.", target, inst)


def _parse_solve(tokens, env) -> SolveSpec:
    values = {}
    for key, tok in tokens.items():
        kind = SOLVE_KEYS[key]
        try:
            if kind is float:
                values[key] = ParamExpr.parse(tok.text).evaluate(env)
            elif kind is int:
                v = ParamExpr.parse(tok.text).evaluate(env)
                if not float(v).is_integer():
                    raise ParamError(f"{key} must be an integer")
                values[key] = int(v)
            elif kind is bool:
                low = tok.text.lower()
                if low not in _TRUE | _FALSE:
                    raise ParamError(f"{key} must be on or off")
                values[key] = low in _TRUE
            else:
                values[key] = tok.text
        except ParamError as exc:
            raise NetlistError(f"solve {key}: {exc.message}", tok.line, tok.col) from None
    spec = SolveSpec().with_overrides(**values)
    try:
        return spec.validate()
    except ConfigError as exc:
        line = next(iter(tokens.values())).line if tokens else None
        raise NetlistError(f"solve: {exc.message}", line) from None


def flatten(top: HighNetlist, registry: Mapping[str, BlockTemplate] = REGISTRY) -> FlatNetlist:
    """Expand every subcircuit instance into leaf blocks with global nets."""
    env = _scope_env(top.params, {}, "param")
    env = _scope_env(top.lets, env, "let")
    fl = _Flattener(top.subckts, registry)
    fl.expand(top.instances, "", {}, env, [])

    find = fl.nets.find
    instances = []
    drivers = {}
    for path, tmpl, ports, params in fl.leaves:
        ports = {p: find(n) for p, n in ports.items()}
        for out in tmpl.outputs:
            drivers.setdefault(ports[out], []).append(f"{path}.{out}")
        instances.append(FlatInstance(path, tmpl.name, ports, params))
    instances.sort(key=lambda i: i.name)
    conflicts = {n: d for n, d in drivers.items() if len(d) > 1}
    if conflicts:
        text = "; ".join(f"{n} <- {', '.join(d)}" for n, d in sorted(conflicts.items()))
        raise AssemblyError(f"nets with more than one driver: {text}")

    aliases = {name: find(raw) for name, raw in fl.local.items()}
    for inst in instances:
        for net in inst.ports.values():
            aliases.setdefault(net, net)

    flat = FlatNetlist(instances=instances, aliases=aliases)
    # subcircuit exports, innermost first so nested names resolve
    for name in sorted(fl.exports, key=lambda n: -n.count(".")):
        prefix, target, inst = fl.exports[name]
        try:
            flat.exports[name] = _resolve_path(prefix + target, flat, registry)
        except NetlistError as exc:
            raise NetlistError(f"outparam {name}: {exc.message}", inst.line, inst.col, inst.source) from None

    flat.solve = _parse_solve(top.solve, env)
    flat.outputs = resolve_outputs(top.outvars, flat, registry)
    aliases_known = {r.alias for r in flat.outputs}
    for spec in top.output_files:
        unknown = [v for v in spec.vars if v not in aliases_known]
        if unknown:
            raise NetlistError(f"output {spec.file}: unknown outvar(s) {', '.join(unknown)}", spec.line)
        interval = None
        if spec.interval is not None:
            interval = _eval(spec.interval, env, None, f"output {spec.file} interval")
            if not interval > 0.0:
                raise NetlistError(f"output {spec.file}: interval must be positive", spec.line)
        flat.output_files.append(FlatOutputFile(spec.file, list(spec.vars), interval, spec.svg))
    return flat


def _candidates(flat: FlatNetlist, registry) -> list:
    names = set(flat.exports) | set(flat.aliases)
    for inst in flat.instances:
        tmpl = registry[inst.template]
        names.update(f"{inst.name}.{p}" for p in tmpl.out_params)
        names.update(f"{inst.name}.{a}" for a in tmpl.aux_vars)
    return sorted(names)


def _unknown(path: str, flat: FlatNetlist, registry) -> NetlistError:
    cands = _candidates(flat, registry)
    close = difflib.get_close_matches(path, cands, n=3, cutoff=0.6)
    if not close:
        head, _, last = path.rpartition(".")
        pool = {c.rpartition(".")[2]: c for c in cands if c.rpartition(".")[0] == head}
        close = [pool[m] for m in difflib.get_close_matches(last, list(pool), n=3, cutoff=0.3)]
    hint = f"; did you mean {', '.join(repr(c) for c in close)}?" if close else ""
    return NetlistError(f"unknown output name {path!r}{hint}")


def _resolve_path(path: str, flat: FlatNetlist, registry):
    kind = None
    if path.startswith(("net:", "param:")):
        kind, _, path = path.partition(":")
    if kind != "param":
        if path in flat.exports and kind is None:
            return flat.exports[path]
        if path in flat.aliases:
            return NetBinding(flat.aliases[path])
    head, _, last = path.rpartition(".")
    if head:
        try:
            inst = flat.instance(head)
        except KeyError:
            inst = None
        if inst is not None:
            tmpl = registry[inst.template]
            if kind != "net" and last in tmpl.out_params:
                return ParamBinding(head, last)
            if kind != "param":
                if last in inst.ports:
                    return NetBinding(inst.ports[last])
                if last in tmpl.aux_vars:
                    return NetBinding(path)
    raise _unknown(path, flat, registry)


def resolve_outputs(reqs, flat: FlatNetlist, registry: Mapping[str, BlockTemplate] = REGISTRY) -> list:
    """Bind each request to a net/aux variable or a leaf out-parameter."""
    out = []
    for req in reqs:
        binding = _resolve_path(req.path, flat, registry)
        out.append(OutputRequest(req.alias, req.path, req.group, req.interval, binding))
    return out


def flatten_file(path, registry: Mapping[str, BlockTemplate] = REGISTRY) -> FlatNetlist:
    from .parser import parse_file
    return flatten(parse_file(path, registry), registry)
