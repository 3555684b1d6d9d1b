"""Hand-rolled deterministic SVG line plots for trace columns.

No plotting library: the output must be byte-identical across reruns of the
same data, so every coordinate is formatted with a fixed precision and
nothing (ids, timestamps, library versions) leaks into the document.
Log-log is the default geometry because every quantity of interest here is
a decaying positive curve; rows with nonpositive values are dropped from
log axes rather than crashing the emitter.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .diagnostics import TraceRecord
from .ioutil import atomic_write_text

__all__ = ["emit_svg", "render_svg"]

_W, _H = 720.0, 480.0
_ML, _MR, _MT, _MB = 72.0, 24.0, 40.0, 56.0
_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#8c564b", "#e377c2")
_NUM = "%.6g"


def _fmt(x: float) -> str:
    return _NUM % x


class _Axis:
    """Maps data values to pixel coordinates, linear or log10."""

    def __init__(self, lo: float, hi: float, px_lo: float, px_hi: float, log: bool):
        if log:
            lo, hi = np.log10(lo), np.log10(hi)
        if hi <= lo:
            hi = lo + 1.0
        self.lo, self.hi = lo, hi
        self.px_lo, self.px_hi = px_lo, px_hi
        self.log = log

    def px(self, v: float) -> float:
        v = np.log10(v) if self.log else v
        s = (v - self.lo) / (self.hi - self.lo)
        return self.px_lo + s * (self.px_hi - self.px_lo)

    def ticks(self):
        if self.log:
            lo = int(np.floor(self.lo))
            hi = int(np.ceil(self.hi))
            vals = [10.0**e for e in range(lo, hi + 1)]
            return [(v, f"1e{int(np.log10(v))}") for v in vals if self.lo <= np.log10(v) <= self.hi]
        vals = np.linspace(self.lo, self.hi, 5)
        return [(v, _fmt(v)) for v in vals]


def render_svg(
    trace: TraceRecord,
    columns=("theta_err",),
    axes: str = "log-log",
    guides=(),
    title: str = "",
) -> str:
    """Render trace columns against t; returns the SVG document text.

    ``axes`` is "log-log" or "linear". ``guides`` is a sequence of power-law
    exponents; each renders as a dashed straight line through the last
    point of the first series (log axes only). Raises ValueError on an
    empty trace or when nothing remains to plot on log axes.
    """
    if trace.n_rows == 0:
        raise ValueError("cannot plot an empty trace")
    if axes not in ("log-log", "linear"):
        raise ValueError(f"unknown axes mode {axes!r}")
    log = axes == "log-log"

    t = trace.t
    series = []
    for name in columns:
        y = trace.column(name)
        if log:
            m = (t > 0) & (y > 0) & np.isfinite(y)
        else:
            m = np.isfinite(y)
        if not np.any(m):
            raise ValueError(f"column {name!r} has no plottable rows for {axes} axes")
        series.append((name, t[m], y[m]))

    t_lo = min(float(ts.min()) for _, ts, _ in series)
    t_hi = max(float(ts.max()) for _, ts, _ in series)
    y_lo = min(float(ys.min()) for _, _, ys in series)
    y_hi = max(float(ys.max()) for _, _, ys in series)
    if not log:
        pad = 0.05 * (y_hi - y_lo or 1.0)
        y_lo, y_hi = y_lo - pad, y_hi + pad

    ax = _Axis(t_lo, t_hi, _ML, _W - _MR, log)
    ay = _Axis(y_lo, y_hi, _H - _MB, _MT, log)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_fmt(_W)}" height="{_fmt(_H)}" '
        f'viewBox="0 0 {_fmt(_W)} {_fmt(_H)}">',
        f'<rect width="{_fmt(_W)}" height="{_fmt(_H)}" fill="#ffffff"/>',
    ]
    if title:
        out.append(
            f'<text x="{_fmt(_W / 2)}" y="24" text-anchor="middle" '
            f'font-family="sans-serif" font-size="14">{title}</text>'
        )

    # frame
    out.append(
        f'<rect x="{_fmt(_ML)}" y="{_fmt(_MT)}" width="{_fmt(_W - _ML - _MR)}" '
        f'height="{_fmt(_H - _MT - _MB)}" fill="none" stroke="#000000"/>'
    )
    for v, label in ax.ticks():
        x = ax.px(v)
        out.append(
            f'<line x1="{_fmt(x)}" y1="{_fmt(_H - _MB)}" x2="{_fmt(x)}" '
            f'y2="{_fmt(_H - _MB + 5)}" stroke="#000000"/>'
        )
        out.append(
            f'<text x="{_fmt(x)}" y="{_fmt(_H - _MB + 18)}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="11">{label}</text>'
        )
    for v, label in ay.ticks():
        y = ay.px(v)
        out.append(
            f'<line x1="{_fmt(_ML - 5)}" y1="{_fmt(y)}" x2="{_fmt(_ML)}" '
            f'y2="{_fmt(y)}" stroke="#000000"/>'
        )
        out.append(
            f'<text x="{_fmt(_ML - 8)}" y="{_fmt(y + 4)}" text-anchor="end" '
            f'font-family="sans-serif" font-size="11">{label}</text>'
        )
    out.append(
        f'<text x="{_fmt((_ML + _W - _MR) / 2)}" y="{_fmt(_H - 12)}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="12">t</text>'
    )

    # power-law guides through the last point of the first series
    if guides and log:
        _, ts0, ys0 = series[0]
        t_ref, y_ref = float(ts0[-1]), float(ys0[-1])
        for slope in guides:
            y_start = y_ref * (t_lo / t_ref) ** slope
            p1 = (ax.px(t_lo), ay.px(y_start))
            p2 = (ax.px(t_ref), ay.px(y_ref))
            out.append(
                f'<line x1="{_fmt(p1[0])}" y1="{_fmt(p1[1])}" x2="{_fmt(p2[0])}" '
                f'y2="{_fmt(p2[1])}" stroke="#888888" stroke-dasharray="6,4"/>'
            )
            out.append(
                f'<text x="{_fmt(p1[0] + 6)}" y="{_fmt(p1[1] - 6)}" '
                f'font-family="sans-serif" font-size="11" fill="#888888">'
                f"t^{_fmt(slope)}</text>"
            )

    for i, (name, ts, ys) in enumerate(series):
        color = _PALETTE[i % len(_PALETTE)]
        pts = " ".join(f"{_fmt(ax.px(tv))},{_fmt(ay.px(yv))}" for tv, yv in zip(ts, ys))
        out.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        out.append(
            f'<text x="{_fmt(_W - _MR - 6)}" y="{_fmt(_MT + 16 + 16 * i)}" text-anchor="end" '
            f'font-family="sans-serif" font-size="12" fill="{color}">{name}</text>'
        )

    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_svg(
    trace: TraceRecord,
    path: str | Path,
    columns=("theta_err",),
    axes: str = "log-log",
    guides=(),
    title: str = "",
) -> Path:
    """Render and atomically write the plot; nothing is written on error."""
    doc = render_svg(trace, columns=columns, axes=axes, guides=guides, title=title)
    return atomic_write_text(path, doc)
