"""Output capture and serialisation.

Requested quantities are bound either to a variable of the assembled
system (a net or an auxiliary variable) or to an output parameter of a
leaf block.  Values are recorded at accepted time points, or on a fixed
grid using the first accepted point at or after each grid time.
"""

from __future__ import annotations

import csv
import io
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence, TextIO, Union
from xml.sax.saxutils import escape

from .errors import OutputError


@dataclass(frozen=True)
class NetBinding:
    var: str

    def __str__(self):
        return f"net:{self.var}"


@dataclass(frozen=True)
class ParamBinding:
    instance: str
    param: str

    def __str__(self):
        return f"param:{self.instance}.{self.param}"


Binding = Union[NetBinding, ParamBinding]


@dataclass
class OutputRequest:
    alias: str
    path: str
    group: str = "out"
    interval: Optional[float] = None
    binding: Optional[Binding] = None


@dataclass
class WaveformTable:
    columns: list
    rows: list = field(default_factory=list)

    @property
    def aliases(self) -> list:
        return self.columns[1:]

    def append(self, t: float, values: Sequence[float]) -> None:
        if len(values) != len(self.columns) - 1:
            raise ValueError(f"row width {len(values) + 1} != {len(self.columns)} columns")
        if self.rows and not t > self.rows[-1][0]:
            raise ValueError(f"time {t!r} not after last recorded time {self.rows[-1][0]!r}")
        self.rows.append([float(t), *map(float, values)])

    def column(self, name: str) -> list:
        try:
            k = self.columns.index(name)
        except ValueError:
            raise OutputError(
                f"no column {name!r}; available: {', '.join(self.columns)}") from None
        return [row[k] for row in self.rows]

    @property
    def time(self) -> list:
        return [row[0] for row in self.rows]

    def __len__(self) -> int:
        return len(self.rows)


class Recorder:
    """Feeds accepted points into a table, optionally resampled on a grid."""

    GRID_EPS = 1e-12

    def __init__(self, aliases: Sequence[str], interval: Optional[float] = None,
                 t_start: float = 0.0, t_end: Optional[float] = None):
        if interval is not None and not interval > 0.0:
            raise OutputError("sampling interval must be positive")
        self.table = WaveformTable(["time", *aliases])
        self.interval = interval
        self.t_start = t_start
        self.t_end = t_end
        self._k = 0

    def _grid(self, k: int) -> float:
        return self.t_start + k * self.interval

    def record(self, t: float, values: Sequence[float]) -> None:
        if self.interval is None:
            self.table.append(t, values)
            return
        if self.table.rows and t < self.table.rows[-1][0]:
            raise ValueError(f"time {t!r} goes backwards")
        while True:
            g = self._grid(self._k)
            if self.t_end is not None and g > self.t_end + self.GRID_EPS * max(1.0, abs(self.t_end)):
                return
            if t < g - self.GRID_EPS * max(1.0, abs(g)):
                return
            self.table.append(g, values)
            self._k += 1


def record(table: WaveformTable, t: float, values: Sequence[float]) -> WaveformTable:
    table.append(t, values)
    return table


def _fmt(x: float) -> str:
    return format(x, ".17g")


def write_csv(table: WaveformTable, dest: Union[str, os.PathLike, TextIO]) -> None:
    def _write(fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(table.columns)
        for row in table.rows:
            w.writerow([_fmt(x) for x in row])

    if hasattr(dest, "write"):
        _write(dest)
        return
    try:
        with open(dest, "w", newline="", encoding="utf-8") as fh:
            _write(fh)
    except OSError as exc:
        raise OutputError(f"cannot write {dest}: {exc.strerror}") from None


def csv_text(table: WaveformTable) -> str:
    buf = io.StringIO()
    write_csv(table, buf)
    return buf.getvalue()


def read_csv(src: Union[str, os.PathLike, TextIO]) -> WaveformTable:
    def _read(fh):
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise OutputError("empty CSV file") from None
        table = WaveformTable(list(header))
        for row in reader:
            if row:
                table.rows.append([float(x) for x in row])
        return table

    if hasattr(src, "read"):
        return _read(src)
    try:
        with open(src, newline="", encoding="utf-8") as fh:
            return _read(fh)
    except OSError as exc:
        raise OutputError(f"cannot read {src}: {exc.strerror}") from None


# ---------------------------------------------------------------------------
# SVG

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
           "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf")


def _axis_range(values: Iterable[float]) -> tuple:
    vals = [v for v in values if math.isfinite(v)]
    if not vals:
        return -1.0, 1.0
    lo, hi = min(vals), max(vals)
    if hi == lo:
        return lo - 1.0, hi + 1.0
    pad = 0.05 * (hi - lo)
    return lo - pad, hi + pad


def emit_svg(table: WaveformTable, x: str = "time", ys: Optional[Sequence[str]] = None,
             width: int = 640, height: int = 400, title: Optional[str] = None,
             n_ticks: int = 6) -> str:
    """Line plot of ``ys`` against ``x`` as an SVG 1.1 document."""
    if not table.rows:
        raise OutputError("cannot plot an empty table")
    ys = list(ys) if ys else [c for c in table.columns if c != x]
    if not ys:
        raise OutputError("no y columns to plot")
    xdata = table.column(x)
    ydata = [table.column(name) for name in ys]

    left, right, top, bottom = 70, 20, 30 if title else 15, 50
    legend_h = 16 * len(ys) + 8
    pw, ph = width - left - right, height - top - bottom
    x0, x1 = _axis_range(xdata)
    y0, y1 = _axis_range(v for col in ydata for v in col)

    def sx(v):
        return left + (v - x0) / (x1 - x0) * pw

    def sy(v):
        return top + (y1 - v) / (y1 - y0) * ph

    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width}" '
        f'height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
    ]
    if title:
        out.append(f'<text x="{width / 2:.1f}" y="20" text-anchor="middle" '
                   f'font-family="sans-serif" font-size="14">{escape(title)}</text>')
    for i in range(n_ticks):
        fx = x0 + (x1 - x0) * i / (n_ticks - 1)
        fy = y0 + (y1 - y0) * i / (n_ticks - 1)
        px, py = sx(fx), sy(fy)
        out.append(f'<line x1="{px:.2f}" y1="{top + ph}" x2="{px:.2f}" y2="{top + ph + 5}" stroke="black"/>')
        out.append(f'<text x="{px:.2f}" y="{top + ph + 18}" text-anchor="middle" '
                   f'font-family="sans-serif" font-size="11">{fx:.4g}</text>')
        out.append(f'<line x1="{left - 5}" y1="{py:.2f}" x2="{left}" y2="{py:.2f}" stroke="black"/>')
        out.append(f'<text x="{left - 8}" y="{py + 4:.2f}" text-anchor="end" '
                   f'font-family="sans-serif" font-size="11">{fy:.4g}</text>')
    out.append(f'<text x="{left + pw / 2:.1f}" y="{height - 10}" text-anchor="middle" '
               f'font-family="sans-serif" font-size="12">{escape(x)}</text>')
    for k, (name, col) in enumerate(zip(ys, ydata)):
        color = PALETTE[k % len(PALETTE)]
        pts = " ".join(f"{sx(a):.2f},{sy(b):.2f}" for a, b in zip(xdata, col)
                       if math.isfinite(a) and math.isfinite(b))
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" '
                   f'points="{pts}"><title>{escape(name)}</title></polyline>')
    lx, ly = left + pw - 120, top + 10
    out.append(f'<g class="legend"><rect x="{lx - 6}" y="{ly - 4}" width="124" '
               f'height="{legend_h}" fill="white" stroke="#999"/>')
    for k, name in enumerate(ys):
        color = PALETTE[k % len(PALETTE)]
        yy = ly + 16 * k + 8
        out.append(f'<line x1="{lx}" y1="{yy}" x2="{lx + 20}" y2="{yy}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{lx + 26}" y="{yy + 4}" font-family="sans-serif" '
                   f'font-size="11">{escape(name)}</text>')
    out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_svg(text: str, dest: Union[str, os.PathLike]) -> None:
    try:
        Path(dest).write_text(text, encoding="utf-8")
    except OSError as exc:
        raise OutputError(f"cannot write {dest}: {exc.strerror}") from None
