"""Netlist text format.

Line oriented; ``#`` starts a comment, a trailing backslash continues the
statement on the next line.  Statements::

    include "file"
    param NAME=EXPR ...             # top level: constants; subckt: parameters with defaults
    let NAME=EXPR ...               # derived names, evaluated in order
    block INST REF KEY=VALUE ...    # REF is a template or subcircuit name
    subckt NAME in=PAD,... out=PAD[:NET],...
        param / let / block ...
        outparam NAME = PATH
    endsubckt
    outvar ALIAS = PATH
    output file=NAME vars=A,B,... [interval=EXPR] [svg=on|off]
    solve KEY=VALUE ...

In a ``block`` line, keys naming ports bind nets; the remaining keys bind
parameters.  A net written ``>label`` is a virtual sink and ``label>`` a
virtual source; both refer to the net ``label``.  Values containing spaces
must be double-quoted; string parameters are always given quoted.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional

from ..blocks.library import REGISTRY
from ..blocks.template import BlockTemplate
from ..config import SOLVE_KEYS
from ..errors import NetlistError, ParamError
from ..output import OutputRequest
from .expr import ParamExpr

LIBRARY_DIR = Path(__file__).resolve().parent.parent / "netlists"

_TOKEN = re.compile(
    r'(?P<key>[A-Za-z_]\w*)\s*=\s*(?P<val>"[^"]*"|[^\s"=][^\s"]*)'
    r'|(?P<word>"[^"]*"|[^\s"]+)'
)
_IDENT = re.compile(r"[A-Za-z_]\w*$")
_DOTTED = re.compile(r"[A-Za-z_][\w.]*$")
_PATH = re.compile(r"(?:(?:net|param):)?[A-Za-z_][\w.]*$")


@dataclass
class Token:
    text: str
    col: int
    key: Optional[str] = None
    quoted: bool = False
    line: int = 0


@dataclass
class InstanceDecl:
    name: str
    ref: str
    bindings: dict          # key -> Token, as written
    line: int = 0
    col: int = 0
    ref_col: int = 0
    source: Optional[str] = None
    ports: dict = field(default_factory=dict)    # port -> net label
    params: dict = field(default_factory=dict)   # name -> ParamExpr | str
    virtual: dict = field(default_factory=dict)  # net label -> 'sink' | 'source' uses

    def error(self, msg: str, col: Optional[int] = None) -> NetlistError:
        return NetlistError(msg, self.line, col or self.col, self.source)


@dataclass
class Pad:
    name: str
    direction: str   # 'in' | 'out'
    net: str


@dataclass
class SubcircuitDef:
    name: str
    pads: list = field(default_factory=list)
    params: list = field(default_factory=list)      # (name, ParamExpr)
    lets: list = field(default_factory=list)        # (name, ParamExpr)
    body: list = field(default_factory=list)        # InstanceDecl
    out_param_map: dict = field(default_factory=dict)
    line: int = 0
    source: Optional[str] = None

    @property
    def pad_names(self) -> list:
        return [p.name for p in self.pads]

    @property
    def param_names(self) -> list:
        return [n for n, _ in self.params]

    @property
    def derived_param_exprs(self) -> list:
        """``(instance.param, expression)`` pairs set from subcircuit parameters."""
        out = []
        for inst in self.body:
            for name, val in inst.params.items():
                if isinstance(val, ParamExpr):
                    out.append((f"{inst.name}.{name}", val))
        return out


@dataclass
class OutputFileSpec:
    file: str
    vars: list
    interval: Optional[ParamExpr] = None
    svg: bool = False
    line: int = 0


@dataclass
class HighNetlist:
    instances: list = field(default_factory=list)
    params: list = field(default_factory=list)
    lets: list = field(default_factory=list)
    outvars: list = field(default_factory=list)         # OutputRequest (path unresolved)
    output_files: list = field(default_factory=list)
    solve: dict = field(default_factory=dict)           # key -> Token
    subckts: dict = field(default_factory=dict)
    source: Optional[str] = None

    @property
    def nets(self) -> set:
        return {net for inst in self.instances for net in inst.ports.values()}


def _strip_comment(line: str) -> str:
    in_quote = False
    for i, ch in enumerate(line):
        if ch == '"':
            in_quote = not in_quote
        elif ch == "#" and not in_quote:
            return line[:i]
    return line


def _logical_lines(text: str):
    """Yield ``(line_no, text)`` with comments removed and continuations joined."""
    buf, start = "", None
    for no, raw in enumerate(text.splitlines(), 1):
        line = _strip_comment(raw).rstrip()
        if start is None:
            start = no
        if line.endswith("\\"):
            buf += line[:-1] + " "
            continue
        buf += line
        if buf.strip():
            yield start, buf
        buf, start = "", None
    if buf.strip():
        yield start, buf


def _tokenize(line: str, line_no: int, source) -> list:
    toks = []
    pos = 0
    for m in _TOKEN.finditer(line):
        gap = line[pos:m.start()]
        if gap.strip():
            raise NetlistError(f"unexpected text {gap.strip()!r}", line_no, pos + 1, source)
        pos = m.end()
        if m.group("key"):
            val = m.group("val")
            quoted = val.startswith('"')
            toks.append(Token(val[1:-1] if quoted else val, m.start() + 1, m.group("key"), quoted))
        else:
            word = m.group("word")
            quoted = word.startswith('"')
            toks.append(Token(word[1:-1] if quoted else word, m.start() + 1, None, quoted))
    if line[pos:].strip():
        raise NetlistError(f"unexpected text {line[pos:].strip()!r}", line_no, pos + 1, source)
    return toks


class _Parser:
    def __init__(self, registry: Mapping[str, BlockTemplate], source, base_dir, seen):
        self.registry = registry
        self.source = source
        self.base_dir = Path(base_dir) if base_dir else None
        self.seen = seen
        self.net = HighNetlist(source=source)
        self.sub: Optional[SubcircuitDef] = None

    def err(self, msg, line, col=None):
        return NetlistError(msg, line, col, self.source)

    def _expr(self, tok: Token, line: int) -> ParamExpr:
        try:
            return ParamExpr.parse(tok.text)
        except ParamError as exc:
            raise self.err(exc.message, line, tok.col) from None

    def _assignments(self, toks, line, what):
        out = []
        for tok in toks:
            if tok.key is None:
                raise self.err(f"expected NAME=EXPR in {what}, got {tok.text!r}", line, tok.col)
            out.append((tok.key, self._expr(tok, line)))
        return out

    def _alias_stmt(self, toks, line, what):
        # NAME = PATH, tokenised either as key/val or as separate words
        if len(toks) == 1 and toks[0].key:
            name, path, col = toks[0].key, toks[0].text, toks[0].col
        elif len(toks) == 3 and toks[1].text == "=":
            name, path, col = toks[0].text, toks[2].text, toks[2].col
        elif len(toks) == 2 and toks[0].key is None and toks[1].key is None and toks[1].text.startswith("="):
            name, path, col = toks[0].text, toks[1].text[1:], toks[1].col
        else:
            raise self.err(f"expected '{what} NAME = PATH'", line)
        if not _PATH.match(path):
            raise self.err(f"invalid path {path!r}", line, col)
        return name, path

    def feed(self, text: str):
        for line, body in _logical_lines(text):
            toks = _tokenize(body, line, self.source)
            head, rest = toks[0], toks[1:]
            kw = head.text if head.key is None else None
            if kw is None:
                raise self.err(f"statement must start with a keyword, got {head.key}=...", line, head.col)
            handler = getattr(self, f"_st_{kw}", None)
            if handler is None:
                raise self.err(f"unknown statement {kw!r}", line, head.col)
            handler(rest, line, head)
        if self.sub is not None:
            raise self.err(f"subckt {self.sub.name!r} is missing 'endsubckt'", self.sub.line)

    # -- statements -------------------------------------------------------
    def _st_include(self, toks, line, head):
        if self.sub is not None:
            raise self.err("include is not allowed inside a subckt", line, head.col)
        if len(toks) != 1 or toks[0].key:
            raise self.err('expected include "path"', line, head.col)
        name = toks[0].text
        candidates = []
        if self.base_dir is not None:
            candidates.append(self.base_dir / name)
        candidates.append(Path(name))
        candidates.append(LIBRARY_DIR / name)
        path = next((c for c in candidates if c.is_file()), None)
        if path is None:
            raise self.err(f"include file {name!r} not found", line, toks[0].col)
        path = path.resolve()
        if path in self.seen:
            raise self.err(f"include cycle through {name!r}", line, toks[0].col)
        child = _Parser(self.registry, str(path), path.parent, self.seen | {path})
        child.feed(path.read_text(encoding="utf-8"))
        inc = child.net
        for name_, sub in inc.subckts.items():
            if name_ in self.net.subckts:
                raise self.err(f"subckt {name_!r} defined twice (via include)", line)
            self.net.subckts[name_] = sub
        self.net.params += inc.params
        self.net.lets += inc.lets
        for inst in inc.instances:
            self._add_instance(self.net.instances, inst)
        self.net.outvars += inc.outvars
        self.net.output_files += inc.output_files
        self.net.solve.update(inc.solve)

    def _st_param(self, toks, line, head):
        target = self.sub.params if self.sub is not None else self.net.params
        target += self._assignments(toks, line, "param")

    def _st_let(self, toks, line, head):
        target = self.sub.lets if self.sub is not None else self.net.lets
        target += self._assignments(toks, line, "let")

    def _add_instance(self, target, inst):
        if any(i.name == inst.name for i in target):
            raise NetlistError(f"duplicate instance name {inst.name!r}", inst.line, inst.col, inst.source)
        target.append(inst)

    def _st_block(self, toks, line, head):
        if len(toks) < 2 or toks[0].key or toks[1].key:
            raise self.err("expected 'block NAME REF key=value ...'", line, head.col)
        name, ref = toks[0], toks[1]
        if not _DOTTED.match(name.text):
            raise self.err(f"invalid instance name {name.text!r}", line, name.col)
        bindings = {}
        for tok in toks[2:]:
            if tok.key is None:
                raise self.err(f"expected key=value, got {tok.text!r}", line, tok.col)
            if tok.key in bindings:
                raise self.err(f"{tok.key!r} bound twice", line, tok.col)
            bindings[tok.key] = tok
        inst = InstanceDecl(name.text, ref.text, bindings, line, name.col, ref.col, self.source)
        target = self.sub.body if self.sub is not None else self.net.instances
        self._add_instance(target, inst)

    def _st_subckt(self, toks, line, head):
        if self.sub is not None:
            raise self.err("nested subckt definitions are not allowed", line, head.col)
        if not toks or toks[0].key or not _IDENT.match(toks[0].text):
            raise self.err("expected 'subckt NAME in=... out=...'", line, head.col)
        name = toks[0].text
        if name in self.net.subckts or name in self.registry:
            raise self.err(f"subckt name {name!r} already defined", line, toks[0].col)
        sub = SubcircuitDef(name, line=line, source=self.source)
        for tok in toks[1:]:
            if tok.key not in ("in", "out"):
                raise self.err(f"expected in=... or out=..., got {tok.text!r}", line, tok.col)
            for item in filter(None, tok.text.split(",")):
                pad, _, net = item.partition(":")
                net = net or pad
                if not _IDENT.match(pad) or not _IDENT.match(net):
                    raise self.err(f"invalid pad {item!r}", line, tok.col)
                if pad in sub.pad_names:
                    raise self.err(f"pad {pad!r} declared twice", line, tok.col)
                sub.pads.append(Pad(pad, tok.key, net))
        self.sub = sub

    def _st_endsubckt(self, toks, line, head):
        if self.sub is None:
            raise self.err("endsubckt without subckt", line, head.col)
        self.net.subckts[self.sub.name] = self.sub
        self.sub = None

    _st_ends = _st_endsubckt

    def _st_outparam(self, toks, line, head):
        if self.sub is None:
            raise self.err("outparam is only allowed inside a subckt", line, head.col)
        name, path = self._alias_stmt(toks, line, "outparam")
        self.sub.out_param_map[name] = path

    def _top_only(self, line, head):
        if self.sub is not None:
            raise self.err(f"{head.text} is not allowed inside a subckt", line, head.col)

    def _st_outvar(self, toks, line, head):
        self._top_only(line, head)
        alias, path = self._alias_stmt(toks, line, "outvar")
        if any(r.alias == alias for r in self.net.outvars):
            raise self.err(f"outvar {alias!r} defined twice", line, head.col)
        self.net.outvars.append(OutputRequest(alias, path))

    def _st_output(self, toks, line, head):
        self._top_only(line, head)
        kv = {}
        for tok in toks:
            if tok.key not in ("file", "vars", "interval", "svg"):
                raise self.err(f"unknown output setting {tok.key or tok.text!r}", line, tok.col)
            kv[tok.key] = tok
        if "file" not in kv or "vars" not in kv:
            raise self.err("output needs file=... and vars=...", line, head.col)
        svg = kv.get("svg")
        if svg is not None and svg.text not in ("on", "off", "yes", "no"):
            raise self.err("svg must be on or off", line, svg.col)
        spec = OutputFileSpec(
            file=kv["file"].text,
            vars=[v for v in kv["vars"].text.split(",") if v],
            interval=self._expr(kv["interval"], line) if "interval" in kv else None,
            svg=svg is not None and svg.text in ("on", "yes"),
            line=line,
        )
        self.net.output_files.append(spec)

    def _st_solve(self, toks, line, head):
        self._top_only(line, head)
        for tok in toks:
            if tok.key is None or tok.key not in SOLVE_KEYS:
                raise self.err(f"unknown solve setting {tok.key or tok.text!r}", line, tok.col)
            tok = Token(tok.text, tok.col, tok.key, tok.quoted, line)
            self.net.solve[tok.key] = tok


def _classify(inst: InstanceDecl, registry, subckts):
    """Split an instance's bindings into ports and parameters."""
    if inst.ref in registry:
        tmpl = registry[inst.ref]
        ports, pnames = list(tmpl.inputs) + list(tmpl.outputs), tmpl.param_names
        ptype = tmpl.param_type
    elif inst.ref in subckts:
        sub = subckts[inst.ref]
        ports, pnames = sub.pad_names, sub.param_names
        ptype = lambda name: float
    else:
        raise NetlistError(f"unknown template or subckt {inst.ref!r}", inst.line, inst.ref_col, inst.source)
    inst.ports, inst.params, inst.virtual = {}, {}, {}
    for key, tok in inst.bindings.items():
        if key in ports:
            label = tok.text
            kind = None
            if label.startswith(">"):
                label, kind = label[1:], "sink"
            elif label.endswith(">"):
                label, kind = label[:-1], "source"
            if not _DOTTED.match(label):
                raise inst.error(f"invalid net name {tok.text!r}", tok.col)
            inst.ports[key] = label
            if kind:
                inst.virtual.setdefault(label, []).append((kind, tok.col))
        elif key in pnames:
            if ptype(key) is str:
                inst.params[key] = tok.text
            else:
                try:
                    inst.params[key] = ParamExpr.parse(tok.text)
                except ParamError as exc:
                    raise inst.error(exc.message, tok.col) from None
        else:
            raise inst.error(f"{inst.ref!r} has no port or parameter {key!r}", tok.col)
    missing = [p for p in ports if p not in inst.ports]
    if missing:
        raise inst.error(f"instance {inst.name!r}: unbound port(s) {', '.join(missing)}")


def _check_virtual(instances, where):
    sinks, sources = {}, {}
    for inst in instances:
        for label, uses in inst.virtual.items():
            for kind, col in uses:
                (sinks if kind == "sink" else sources).setdefault(label, []).append((inst, col))
    for label, uses in sinks.items():
        if len(uses) > 1:
            inst, col = uses[1]
            raise inst.error(f"virtual sink '>{label}' defined more than once in {where}", col)
    for label, uses in sources.items():
        if label not in sinks:
            inst, col = uses[0]
            raise inst.error(f"virtual source '{label}>' has no matching sink '>{label}' in {where}", col)


def _resolve(net: HighNetlist, registry):
    for inst in net.instances:
        _classify(inst, registry, net.subckts)
    _check_virtual(net.instances, "top level")
    for sub in net.subckts.values():
        for inst in sub.body:
            _classify(inst, registry, net.subckts)
        _check_virtual(sub.body, f"subckt {sub.name!r}")


def parse(text: str, source: Optional[str] = None, base_dir=None,
          registry: Mapping[str, BlockTemplate] = REGISTRY) -> HighNetlist:
    """Parse netlist text into a :class:`HighNetlist` (subcircuits in ``.subckts``)."""
    seen = frozenset()
    if source is not None and Path(source).is_file():
        seen = frozenset({Path(source).resolve()})
    p = _Parser(registry, source, base_dir, seen)
    p.feed(text)
    _resolve(p.net, registry)
    return p.net


def parse_file(path, registry: Mapping[str, BlockTemplate] = REGISTRY) -> HighNetlist:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        from ..errors import OutputError
        raise OutputError(f"cannot read netlist {path}: {exc.strerror}") from None
    return parse(text, source=str(path), base_dir=path.parent, registry=registry)
