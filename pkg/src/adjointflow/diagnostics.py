"""Run traces and the checks that turn them into verdicts.

A :class:`TraceRecord` is the wire format every runner emits: one row per
logging stride with the objective, gradient norm, parameters, reference
error, relaxation gaps, learning rate, and the boundedness functional. CSV
serialization is deterministic (17 significant digits, LF newlines) so a
rerun of the same config produces byte-identical files.

``fit_rate`` measures algebraic decay exponents on log-log axes,
``ratio_bound`` measures empirical envelope constants, and
``check_schedule`` delivers closed-form verdicts on learning-rate decay
conditions.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import FitError
from .ioutil import atomic_write_text

__all__ = [
    "TraceRecord",
    "RateFit",
    "ScheduleComplianceReport",
    "fit_rate",
    "ratio_bound",
    "check_schedule",
    "write_report",
]

_FMT = "%.17g"


@dataclass
class TraceRecord:
    """Diagnostics trace of an optimization run.

    ``theta`` has shape (n_rows, d); all other columns are 1D of length
    n_rows. ``theta_err`` may be NaN when no reference minimizer was
    configured; every other entry is finite (a diverging run truncates the
    trace and sets the flag instead of logging junk).
    """

    t: np.ndarray
    j: np.ndarray
    grad_norm: np.ndarray
    theta: np.ndarray
    theta_err: np.ndarray
    phi_norm: np.ndarray
    psi_norm: np.ndarray
    alpha: np.ndarray
    sup_norm: np.ndarray
    cum_inner_iters: np.ndarray | None = None
    diverged: bool = False
    divergence_step: int | None = None

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=np.float64)
        self.j = np.asarray(self.j, dtype=np.float64)
        self.grad_norm = np.asarray(self.grad_norm, dtype=np.float64)
        self.theta = np.atleast_2d(np.asarray(self.theta, dtype=np.float64))
        self.theta_err = np.asarray(self.theta_err, dtype=np.float64)
        self.phi_norm = np.asarray(self.phi_norm, dtype=np.float64)
        self.psi_norm = np.asarray(self.psi_norm, dtype=np.float64)
        self.alpha = np.asarray(self.alpha, dtype=np.float64)
        self.sup_norm = np.asarray(self.sup_norm, dtype=np.float64)
        if self.cum_inner_iters is not None:
            self.cum_inner_iters = np.asarray(self.cum_inner_iters, dtype=np.float64)
        self.validate()

    @property
    def n_rows(self) -> int:
        return self.t.size

    @property
    def dim_theta(self) -> int:
        return self.theta.shape[1]

    def validate(self) -> None:
        n = self.t.size
        cols = {
            "J": self.j,
            "grad_norm": self.grad_norm,
            "theta_err": self.theta_err,
            "phi_norm": self.phi_norm,
            "psi_norm": self.psi_norm,
            "alpha": self.alpha,
            "sup_norm": self.sup_norm,
        }
        for name, col in cols.items():
            if col.shape != (n,):
                raise ValueError(f"column {name} has shape {col.shape}, expected ({n},)")
        if self.theta.shape[0] != n:
            raise ValueError("theta row count does not match t")
        if self.cum_inner_iters is not None and self.cum_inner_iters.shape != (n,):
            raise ValueError("cum_inner_iters length does not match t")
        if n > 1 and not np.all(np.diff(self.t) > 0):
            raise ValueError("t must be strictly increasing")
        for name, col in cols.items():
            if name == "theta_err":
                continue  # NaN allowed: means "no reference minimizer configured"
            if not np.all(np.isfinite(col)):
                raise ValueError(f"non-finite entries in column {name}")
        if not np.all(np.isfinite(self.theta)):
            raise ValueError("non-finite entries in theta")

    def header(self) -> list[str]:
        names = ["t", "J", "grad_norm"]
        names += [f"theta_{k}" for k in range(self.dim_theta)]
        names += ["theta_err", "phi_norm", "psi_norm", "alpha", "sup_norm"]
        if self.cum_inner_iters is not None:
            names.append("cum_inner_iters")
        return names

    def column(self, name: str) -> np.ndarray:
        if name == "t":
            return self.t
        if name == "J":
            return self.j
        if name.startswith("theta_") and name != "theta_err":
            return self.theta[:, int(name.split("_")[1])]
        attr = {
            "grad_norm": self.grad_norm,
            "theta_err": self.theta_err,
            "phi_norm": self.phi_norm,
            "psi_norm": self.psi_norm,
            "alpha": self.alpha,
            "sup_norm": self.sup_norm,
            "cum_inner_iters": self.cum_inner_iters,
        }.get(name)
        if attr is None:
            raise KeyError(f"no trace column named {name!r}")
        return attr

    def to_csv(self, path: str | Path) -> Path:
        rows = [",".join(self.header())]
        blocks = [self.t, self.j, self.grad_norm]
        blocks += [self.theta[:, k] for k in range(self.dim_theta)]
        blocks += [self.theta_err, self.phi_norm, self.psi_norm, self.alpha, self.sup_norm]
        if self.cum_inner_iters is not None:
            blocks.append(self.cum_inner_iters)
        for i in range(self.n_rows):
            rows.append(",".join(_FMT % b[i] for b in blocks))
        return atomic_write_text(path, "\n".join(rows) + "\n")

    @classmethod
    def from_csv(cls, path: str | Path) -> "TraceRecord":
        with open(path, "r") as fh:
            header = fh.readline().strip().split(",")
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        cols = {name: data[:, k] for k, name in enumerate(header)}
        d = sum(1 for name in header if name.startswith("theta_") and name != "theta_err")
        theta = np.column_stack([cols[f"theta_{k}"] for k in range(d)])
        return cls(
            t=cols["t"],
            j=cols["J"],
            grad_norm=cols["grad_norm"],
            theta=theta,
            theta_err=cols["theta_err"],
            phi_norm=cols["phi_norm"],
            psi_norm=cols["psi_norm"],
            alpha=cols["alpha"],
            sup_norm=cols["sup_norm"],
            cum_inner_iters=cols.get("cum_inner_iters"),
        )


@dataclass(frozen=True)
class RateFit:
    """Least-squares power law y ~ C * t^exponent over a time window."""

    exponent: float
    intercept: float
    r_squared: float
    window: tuple
    n_samples: int

    @property
    def prefactor(self) -> float:
        return float(np.exp(self.intercept))


def _window_mask(t: np.ndarray, window) -> np.ndarray:
    if window is None:
        return np.ones(t.size, dtype=bool)
    lo, hi = window
    return (t >= lo) & (t <= hi)


def fit_rate(t: np.ndarray, y: np.ndarray, window=None, min_samples: int = 10) -> RateFit:
    """Fit log y against log t by least squares over ``window``.

    Raises :class:`FitError` when the window holds fewer than
    ``min_samples`` points or any selected value is not strictly positive.
    """
    t = np.asarray(t, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if t.shape != y.shape:
        raise FitError("t and y must have equal length")
    m = _window_mask(t, window)
    ts, ys = t[m], y[m]
    if ts.size < min_samples:
        raise FitError(f"only {ts.size} samples in window, need {min_samples}")
    if np.any(ts <= 0) or np.any(ys <= 0) or not np.all(np.isfinite(ys)):
        raise FitError("log-log fit needs strictly positive finite samples")
    lx, ly = np.log(ts), np.log(ys)
    slope, intercept = np.polyfit(lx, ly, 1)
    pred = slope * lx + intercept
    ss_res = float(np.sum((ly - pred) ** 2))
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    lo = float(ts.min()) if window is None else float(window[0])
    hi = float(ts.max()) if window is None else float(window[1])
    return RateFit(float(slope), float(intercept), float(r2), (lo, hi), int(ts.size))


def ratio_bound(t: np.ndarray, y: np.ndarray, envelope, window=None) -> float:
    """Empirical envelope constant: max of y(t) / envelope(t) over the window.

    Monotone under window extension (it is a running max). The envelope must
    be strictly positive on the window.
    """
    t = np.asarray(t, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if t.shape != y.shape:
        raise FitError("t and y must have equal length")
    m = _window_mask(t, window)
    ts, ys = t[m], y[m]
    if ts.size == 0:
        raise FitError("empty window for ratio bound")
    env = np.asarray([float(envelope(tv)) for tv in ts])
    if np.any(env <= 0) or not np.all(np.isfinite(env)):
        raise FitError("envelope must be strictly positive and finite on the window")
    return float(np.max(ys / env))


_PASS, _FAIL, _UNCHECKED = "PASS", "FAIL", "UNCHECKED"

_CONDITIONS = (
    "integral_diverges",
    "square_integrable",
    "damped_integral_bounded",
    "derivative_ratio_vanishes",
)


@dataclass(frozen=True)
class ScheduleComplianceReport:
    """Verdicts for the four decay conditions a learning rate must satisfy."""

    kind: str
    gamma: float
    verdicts: dict = field(default_factory=dict)
    notes: str = ""

    @property
    def compliant(self) -> bool:
        return all(v == _PASS for v in self.verdicts.values())

    @property
    def failed(self) -> list:
        return [k for k, v in self.verdicts.items() if v == _FAIL]


def check_schedule(sched, gamma: float) -> ScheduleComplianceReport:
    """Closed-form compliance verdicts for a learning-rate schedule.

    Conditions, with alpha the schedule and gamma the Tikhonov weight:

    1. integral of alpha over [0, inf) diverges,
    2. integral of alpha^2 converges,
    3. sup_t of int_0^t alpha(s) exp(-gamma int_s^t alpha) ds is finite,
    4. alpha'(t) / alpha(t) -> 0.

    For condition 3 note the identity: the expression equals
    (1 - exp(-gamma * int_0^t alpha)) / gamma, so it is bounded by 1/gamma
    whenever gamma > 0, and for gamma = 0 it reduces to the running integral
    of alpha, bounded only when condition 1 fails. Schedules outside the
    built-in families get UNCHECKED verdicts.
    """
    kind = getattr(sched, "kind", "custom")
    gamma = float(gamma)
    notes = ""

    if kind == "inverse-linear":
        v = {
            "integral_diverges": _PASS,
            "square_integrable": _PASS,
            "damped_integral_bounded": _PASS if gamma > 0 else _FAIL,
            "derivative_ratio_vanishes": _PASS,
        }
        if gamma == 0:
            notes = "with gamma = 0 the damped integral grows like log(1 + t)"
    elif kind == "constant":
        v = {
            "integral_diverges": _PASS,
            "square_integrable": _FAIL,
            "damped_integral_bounded": _PASS if gamma > 0 else _FAIL,
            "derivative_ratio_vanishes": _PASS,
        }
        notes = "constant rate is diagnostics-only: its square has a divergent integral"
    elif kind == "custom-power":
        p = float(sched.exponent)
        integral_div = p <= 1.0
        v = {
            "integral_diverges": _PASS if integral_div else _FAIL,
            "square_integrable": _PASS if p > 0.5 else _FAIL,
            "damped_integral_bounded": _PASS if (gamma > 0 or not integral_div) else _FAIL,
            "derivative_ratio_vanishes": _PASS,
        }
        notes = f"power decay (1 + t)^(-{p:g}); compliant family needs p in (1/2, 1]"
    else:
        v = {name: _UNCHECKED for name in _CONDITIONS}
        notes = "schedule outside the built-in families; conditions not verified"

    return ScheduleComplianceReport(kind=kind, gamma=gamma, verdicts=v, notes=notes)


def write_report(path: str | Path, entries: dict) -> Path:
    """Write a flat key=value report file (deterministic ordering as given)."""
    lines = []
    for k, val in entries.items():
        if isinstance(val, float):
            lines.append(f"{k}={_FMT % val}")
        else:
            lines.append(f"{k}={val}")
    return atomic_write_text(path, "\n".join(lines) + "\n")
