"""Command-line driver.

    flowsim run NETLIST [overrides] [--outdir DIR] [--svg]
    flowsim check NETLIST [--method M]
    flowsim flatten NETLIST [-o FILE]
    flowsim plot CSV --y COL[,COL...] [--x COL] [-o FILE]

Settings given on the command line win over the netlist ``solve``
statement, which wins over the built-in defaults.  Output files go to
``--outdir``, else ``$FLOWSIM_OUTDIR``, else the current directory.

Exit status: 0 ok, 1 parse/config error, 2 assembly error, 3 convergence
failure, 4 file I/O error.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from .assembly import build
from .config import EXPLICIT_METHODS, METHODS
from .errors import AssemblyError, FlowsimError, OutputError
from .netlist import flatten, parse_file, resolve_outputs
from .output import OutputRequest, WaveformTable, emit_svg, read_csv, write_csv, write_svg
from .solvers import run_transient

OUTDIR_ENV = "FLOWSIM_OUTDIR"


def _on_off(text):
    low = text.lower()
    if low in ("on", "true", "yes", "1"):
        return True
    if low in ("off", "false", "no", "0"):
        return False
    raise argparse.ArgumentTypeError(f"expected on or off, got {text!r}")


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="flowsim", description="Block-diagram ODE simulator.",
                                epilog=f"Output directory default: ${OUTDIR_ENV} or the current directory.")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="simulate a netlist and write its output files")
    run.add_argument("netlist")
    run.add_argument("--method", choices=METHODS)
    run.add_argument("--t-start", type=float)
    run.add_argument("--t-end", type=float)
    run.add_argument("--h-init", type=float, help="initial step (the step of fixed-step methods)")
    run.add_argument("--h-min", type=float)
    run.add_argument("--h-max", type=float)
    run.add_argument("--tol", type=float, help="local truncation error tolerance")
    run.add_argument("--events", type=_on_off, metavar="on|off")
    run.add_argument("--extrap", choices=("linear", "quadratic"),
                     help="crossing extrapolation for every comparator")
    run.add_argument("--delta-rel", type=float, help="crossing half-width relative to the step")
    run.add_argument("--outdir", help=f"output directory (default ${OUTDIR_ENV} or .)")
    run.add_argument("--svg", action="store_true", help="also write an SVG plot per output file")
    run.add_argument("-q", "--quiet", action="store_true")

    chk = sub.add_parser("check", help="parse, flatten and build without simulating")
    chk.add_argument("netlist")
    chk.add_argument("--method", choices=METHODS)

    fl = sub.add_parser("flatten", help="print the flat netlist")
    fl.add_argument("netlist")
    fl.add_argument("-o", "--output")

    pl = sub.add_parser("plot", help="plot columns of a CSV file as SVG")
    pl.add_argument("csv")
    pl.add_argument("--y", action="append", required=True, help="column(s), comma separated or repeated")
    pl.add_argument("--x", default="time")
    pl.add_argument("-o", "--output")
    pl.add_argument("--title")
    pl.add_argument("--width", type=int, default=640)
    pl.add_argument("--height", type=int, default=400)
    return p


def _overrides(args) -> dict:
    keys = ("method", "t_start", "t_end", "h_init", "h_min", "h_max", "tol", "events",
            "extrap", "delta_rel")
    return {k: getattr(args, k) for k in keys if getattr(args, k) is not None}


def _outdir(args) -> Path:
    d = Path(args.outdir or os.environ.get(OUTDIR_ENV) or ".")
    try:
        d.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OutputError(f"cannot create output directory {d}: {exc.strerror}") from None
    return d


class _DefaultFile:
    def __init__(self, file, vars):
        self.file, self.vars, self.interval, self.svg = file, vars, None, False


def cmd_run(args) -> int:
    flat = flatten(parse_file(args.netlist))
    spec = flat.solve.with_overrides(**_overrides(args))
    solver_cfg = spec.solver_config()
    event_cfg = spec.event_config()
    outdir = _outdir(args)
    graph = build(flat)
    outputs = flat.outputs
    files = flat.output_files
    if not files:
        if not outputs:
            outputs = resolve_outputs([OutputRequest(n, f"net:{n}") for n in graph.var_names],
                                      flat)
        files = [_DefaultFile(Path(args.netlist).stem + ".csv", [r.alias for r in outputs])]
    result = run_transient(graph, solver_cfg, event_cfg, outputs, files)
    written = []
    for spec_file in files:
        table = result.tables[spec_file.file]
        path = outdir / spec_file.file
        write_csv(table, path)
        written.append(path)
        if args.svg or spec_file.svg:
            svg_path = path.with_suffix(".svg")
            write_svg(emit_svg(table, title=spec_file.file), svg_path)
            written.append(svg_path)
    if not args.quiet:
        s = result.stats
        print(f"method {solver_cfg.method}: {s.accepted} accepted steps, {s.rejected} rejected, "
              f"{s.newton_iters} Newton iterations, {len(result.crossings)} crossings, "
              f"wall time {s.wall_time:.3f} s")
        for path in written:
            print(f"wrote {path}")
    return 0


def cmd_check(args) -> int:
    flat = flatten(parse_file(args.netlist))
    method = args.method or flat.solve.method
    graph = build(flat, strict=False)
    problems = []
    undriven = sorted(n for n, d in graph.drivers.items() if not d)
    for net in undriven:
        problems.append(f"net {net} has no driver")
    for loop in graph.loops:
        line = f"algebraic loop: {' -> '.join(loop)}"
        if method in EXPLICIT_METHODS:
            problems.append(line + f" (not allowed with {method})")
        else:
            print(line + f" (solved by Newton with {method})")
    for p in problems:
        print(p)
    if problems:
        return AssemblyError.exit_code
    print(f"OK, {graph.n_vars} vars, {graph.n_eqns} eqns")
    return 0


def cmd_flatten(args) -> int:
    text = flatten(parse_file(args.netlist)).to_text()
    if args.output:
        try:
            Path(args.output).write_text(text, encoding="utf-8")
        except OSError as exc:
            raise OutputError(f"cannot write {args.output}: {exc.strerror}") from None
    else:
        sys.stdout.write(text)
    return 0


def cmd_plot(args) -> int:
    table: WaveformTable = read_csv(args.csv)
    ys = [c for item in args.y for c in item.split(",") if c]
    for name in [args.x] + ys:
        table.column(name)
    out = args.output or str(Path(args.csv).with_suffix(".svg"))
    write_svg(emit_svg(table, x=args.x, ys=ys, width=args.width, height=args.height,
                       title=args.title), out)
    print(f"wrote {out}")
    return 0


COMMANDS = {"run": cmd_run, "check": cmd_check, "flatten": cmd_flatten, "plot": cmd_plot}


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except FlowsimError as exc:
        print(f"flowsim: {exc.category} error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    raise SystemExit(main())
