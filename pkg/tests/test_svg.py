"""Deterministic SVG emitter tests."""

import numpy as np
import pytest

from adjointflow.diagnostics import TraceRecord
from adjointflow.svg import emit_svg, render_svg


def trace_with(t, y):
    n = t.size
    return TraceRecord(
        t=t,
        j=y,
        grad_norm=y,
        theta=np.ones((n, 1)),
        theta_err=y,
        phi_norm=y,
        psi_norm=y,
        alpha=1.0 / (1.0 + t),
        sup_norm=np.ones(n),
    )


def test_render_is_deterministic():
    t = np.geomspace(1.0, 100.0, 20)
    tr = trace_with(t, 3.0 * t**-1.5)
    a = render_svg(tr, columns=("theta_err", "grad_norm"), guides=(-1.0, -2.0))
    b = render_svg(tr, columns=("theta_err", "grad_norm"), guides=(-1.0, -2.0))
    assert a == b
    assert a.startswith("<svg ")
    assert a.count("stroke-dasharray") == 2  # one dashed line per guide
    assert a.count("<polyline") == 2


def test_log_axes_drop_nonpositive_rows():
    t = np.arange(6, dtype=np.float64)  # starts at 0
    y = np.array([5.0, 4.0, 0.0, 2.0, 1.0, 0.5])
    doc = render_svg(trace_with(t, y), columns=("theta_err",))
    pts = doc.split('points="')[1].split('"')[0].split()
    assert len(pts) == 4  # the t = 0 row and the y = 0 row are masked

    with pytest.raises(ValueError, match="no plottable rows"):
        render_svg(trace_with(t, np.zeros(6)), columns=("theta_err",))


def test_linear_axes_keep_zero_rows():
    t = np.arange(6, dtype=np.float64)
    y = np.array([5.0, 4.0, 0.0, 2.0, 1.0, 0.5])
    doc = render_svg(trace_with(t, y), columns=("theta_err",), axes="linear")
    pts = doc.split('points="')[1].split('"')[0].split()
    assert len(pts) == 6


def test_mode_validation():
    t = np.geomspace(1.0, 10.0, 5)
    with pytest.raises(ValueError):
        render_svg(trace_with(t, t), axes="polar")


def test_emit_writes_file(tmp_path):
    t = np.geomspace(1.0, 100.0, 12)
    path = emit_svg(trace_with(t, t**-1.0), tmp_path / "plot.svg", title="demo")
    text = path.read_text()
    assert text.startswith("<svg ")
    assert text.rstrip().endswith("</svg>")
    assert ">demo</text>" in text
