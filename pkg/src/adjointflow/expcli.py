"""Experiment command line: INI configs in, run directories out.

Subcommands: ``run`` (online integration on the stock problem), ``baseline``
(offline adjoint descent), ``burgers`` (2D nonlinear identification),
``gradcheck`` (adjoint vs finite-difference gradient suite), ``rates``
(power-law fit over an existing trace CSV), ``schedule`` (learning-rate
compliance report).

Every run resolves its config against a per-subcommand schema (unknown
sections or keys are an error listing them, missing required keys
likewise), writes the effective config back into a run directory named by
the config hash, and emits artifacts (trace.csv, plot.svg, report.txt)
atomically. Exit status: 0 success, 2 a threshold check failed, 1 error.
"""

from __future__ import annotations

import argparse
import configparser
import hashlib
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .baseline import OfflineRunConfig, run_offline
from .burgers import BurgersProblem, BurgersRunConfig, run_burgers_online
from .diagnostics import TraceRecord, check_schedule, fit_rate, write_report
from .errors import AdjointFlowError, ConfigError
from .ioutil import atomic_write_text
from .linsolve import SolverConfig
from .objective import ThetaVector, adjoint_gradient, fd_gradient
from .online import OnlineRunConfig, Schedule, run_online
from .source import TanhBasisSource, sine_basis
from .stock import build_stock
from .svg import emit_svg

__all__ = ["main", "console_entry"]


# --- config schema ----------------------------------------------------------

_REQUIRED = object()


def _p_int(s):
    return int(s)


def _p_float(s):
    return float(s)


def _p_bool(s):
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _p_str(s):
    return s.strip()


def _p_floats(s):
    return np.array([float(x) for x in s.split(",")], dtype=np.float64)


def _p_strs(s):
    return tuple(x.strip() for x in s.split(",") if x.strip())


def _p_auto_float(s):
    return None if s.strip().lower() == "auto" else float(s)


def _p_auto_int(s):
    return None if s.strip().lower() == "auto" else int(s)


def _p_auto_floats(s):
    return None if s.strip().lower() == "auto" else _p_floats(s)


def _p_opt_float(s):
    return None if s.strip().lower() == "none" else float(s)


def _choice(*opts):
    def parse(s):
        v = s.strip()
        if v not in opts:
            raise ValueError(f"must be one of {opts}, got {v!r}")
        return v

    return parse


_OUTPUT = {
    "svg": ("true", _p_bool),
    "columns": ("theta_err,grad_norm", _p_strs),
    "guides": ("-0.5", _p_floats),
}

_SCHEMAS = {
    "run": {
        "grid": {"n": ("31", _p_int)},
        "source": {
            "d": ("3", _p_int),
            "theta_true": ("1.0,-0.6,0.3", _p_floats),
            "model": ("linear", _choice("linear", "tanh")),
            "gamma": ("0.01", _p_float),
        },
        "schedule": {
            "kind": ("inverse-linear", _choice("inverse-linear", "constant", "custom-power")),
            "c_alpha": ("auto", _p_auto_float),
            "exponent": ("1.0", _p_float),
        },
        "run": {
            "horizon": ("1e4", _p_float),
            "log_stride": ("auto", _p_auto_int),
            "theta0": ("auto", _p_auto_floats),
            "solver_tol": ("1e-10", _p_float),
        },
        "output": _OUTPUT,
    },
    "baseline": {
        "grid": {"n": ("31", _p_int)},
        "source": {
            "d": ("3", _p_int),
            "theta_true": ("1.0,-0.6,0.3", _p_floats),
            "gamma": ("0.01", _p_float),
        },
        "schedule": {
            "kind": ("constant", _choice("inverse-linear", "constant", "custom-power")),
            "c_alpha": ("auto", _p_auto_float),
            "exponent": ("1.0", _p_float),
        },
        "run": {
            "max_iters": ("100", _p_int),
            "grad_tol": ("none", _p_opt_float),
            "theta0": ("auto", _p_auto_floats),
            "solver_tol": ("1e-10", _p_float),
        },
        "output": _OUTPUT,
    },
    "burgers": {
        "burgers": {
            "n": ("64", _p_int),
            "theta_star": ("10,10", _p_floats),
            "theta0": ("0,0", _p_floats),
            "horizon": ("200", _p_float),
            "kind": ("inverse-linear", _choice("inverse-linear", "custom-power")),
            "c_alpha": ("auto", _p_auto_float),
            "exponent": ("1.0", _p_float),
            "log_stride": ("auto", _p_auto_int),
            "target_tol": ("1e-8", _p_float),
            "diag_tol": ("1e-6", _p_float),
            "final_err_max": ("0.1", _p_float),
            "cache": ("true", _p_bool),
        },
        "output": {
            "svg": ("true", _p_bool),
            "columns": ("theta_err", _p_strs),
            "guides": ("-0.5", _p_floats),
        },
    },
    "gradcheck": {
        "grid": {"n": ("255", _p_int)},
        "source": {
            "d": ("3", _p_int),
            "theta_true": ("1.0,-0.6,0.3", _p_floats),
            "gamma": ("0.01", _p_float),
        },
        "run": {
            "probes": ("10", _p_int),
            "fd_step": ("1e-5", _p_float),
            "tol": ("1e-6", _p_float),
            "solver_tol": ("1e-10", _p_float),
            "seed": ("0", _p_int),
        },
    },
    "rates": {
        "rates": {
            "trace": (_REQUIRED, _p_str),
            "column": ("theta_err", _p_str),
            "t_lo": ("auto", _p_auto_float),
            "t_hi": ("auto", _p_auto_float),
            "slope_max": ("none", _p_opt_float),
            "r2_min": ("none", _p_opt_float),
        },
        "output": {
            "svg": ("true", _p_bool),
            "guides": ("-0.5", _p_floats),
        },
    },
    "schedule": {
        "schedule": {
            "kind": ("inverse-linear", _choice("inverse-linear", "constant", "custom-power")),
            "c_alpha": ("1.0", _p_float),
            "exponent": ("1.0", _p_float),
            "gamma": ("0.01", _p_float),
            "require_compliant": ("true", _p_bool),
        },
    },
}


def _load_raw(path: str | None) -> dict:
    """Read an INI file into {section: {key: raw-string}}; None means empty."""
    if path is None:
        return {}
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        with open(path, "r") as fh:
            cp.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except configparser.Error as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from None
    return {sec: dict(cp[sec]) for sec in cp.sections()}


def _apply_overrides(raw: dict, overrides) -> dict:
    out = {sec: dict(kv) for sec, kv in raw.items()}
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form section.key=value")
        lhs, value = item.split("=", 1)
        if "." not in lhs:
            raise ConfigError(f"override {item!r} is not of the form section.key=value")
        sec, key = lhs.split(".", 1)
        out.setdefault(sec.strip(), {})[key.strip()] = value.strip()
    return out


def _resolve(command: str, raw: dict):
    """Validate against the schema; return (typed dict, canonical text)."""
    schema = _SCHEMAS[command]
    problems = []
    for sec in raw:
        if sec not in schema:
            problems.append(f"unknown section [{sec}] (allowed: {sorted(schema)})")
            continue
        for key in raw[sec]:
            if key not in schema[sec]:
                problems.append(
                    f"unknown key {sec}.{key} (allowed: {sorted(schema[sec])})"
                )
    if problems:
        raise ConfigError("; ".join(problems))

    typed: dict = {}
    lines = []
    for sec, keys in schema.items():
        typed[sec] = {}
        lines.append(f"[{sec}]")
        for key, (default, parser) in keys.items():
            if sec in raw and key in raw[sec]:
                text = raw[sec][key].strip()
            elif default is _REQUIRED:
                raise ConfigError(f"missing required key {sec}.{key}")
            else:
                text = default
            try:
                typed[sec][key] = parser(text)
            except ValueError as exc:
                raise ConfigError(f"bad value for {sec}.{key}: {exc}") from None
            lines.append(f"{key} = {text}")
        lines.append("")
    return typed, "\n".join(lines)


def _run_dir(command: str, text: str, out_dir: str) -> Path:
    digest = hashlib.sha256((command + "\n" + text).encode()).hexdigest()[:12]
    return Path(out_dir) / f"{command}-{digest}"


# --- subcommand implementations ---------------------------------------------


def _maybe_svg(cfg, trace: TraceRecord, rundir: Path, title: str):
    out = cfg.get("output", {})
    if out.get("svg"):
        emit_svg(
            trace,
            rundir / "plot.svg",
            columns=out.get("columns", ("theta_err",)),
            axes="log-log",
            guides=tuple(out.get("guides", ())),
            title=title,
        )


def _cmd_run(cfg: dict, rundir: Path, cfg_dir: Path):
    src = cfg["source"]
    stock = build_stock(cfg["grid"]["n"], src["d"], src["theta_true"], src["gamma"])
    if src["model"] == "linear":
        model = stock.model
        theta_star = stock.theta_star
    else:
        model = TanhBasisSource(sine_basis(src["d"]))
        theta_star = None  # no closed form for the bounded model

    sch = cfg["schedule"]
    c_alpha = sch["c_alpha"]
    if c_alpha is None:
        if src["model"] != "linear":
            raise ConfigError("schedule.c_alpha=auto needs the linear model's closed forms")
        c_alpha = stock.c_alpha
    schedule = Schedule(sch["kind"], c_alpha, sch["exponent"])

    run = cfg["run"]
    theta0 = run["theta0"] if run["theta0"] is not None else np.zeros(src["d"])
    ocfg = OnlineRunConfig(
        op=stock.op,
        model=model,
        target=stock.target,
        theta0=ThetaVector(theta0, src["gamma"]),
        schedule=schedule,
        horizon=run["horizon"],
        log_stride=run["log_stride"],
        theta_star=theta_star,
        solver=SolverConfig(tol=run["solver_tol"]),
        allow_noncompliant=sch["kind"] == "constant",
    )
    trace = run_online(ocfg)
    trace.to_csv(rundir / "trace.csv")
    _maybe_svg(cfg, trace, rundir, "run")
    entries = {
        "command": "run",
        "n_rows": trace.n_rows,
        "final_t": float(trace.t[-1]),
        "final_J": float(trace.j[-1]),
        "final_grad_norm": float(trace.grad_norm[-1]),
        "final_theta_err": float(trace.theta_err[-1]),
        "c_alpha": float(c_alpha),
    }
    return 0, entries


def _cmd_baseline(cfg: dict, rundir: Path, cfg_dir: Path):
    src = cfg["source"]
    stock = build_stock(cfg["grid"]["n"], src["d"], src["theta_true"], src["gamma"])
    sch = cfg["schedule"]
    schedule = None
    if not (sch["kind"] == "constant" and sch["c_alpha"] is None):
        c_alpha = sch["c_alpha"] if sch["c_alpha"] is not None else 1.0 / stock.big_l
        schedule = Schedule(sch["kind"], c_alpha, sch["exponent"])

    run = cfg["run"]
    theta0 = run["theta0"] if run["theta0"] is not None else np.zeros(src["d"])
    ocfg = OfflineRunConfig(
        op=stock.op,
        model=stock.model,
        target=stock.target,
        theta0=ThetaVector(theta0, src["gamma"]),
        max_iters=run["max_iters"],
        schedule=schedule,
        theta_star=stock.theta_star,
        grad_tol=run["grad_tol"],
        solver=SolverConfig(tol=run["solver_tol"]),
        allow_noncompliant=True,
    )
    trace = run_offline(ocfg)
    trace.to_csv(rundir / "trace.csv")
    _maybe_svg(cfg, trace, rundir, "baseline")
    entries = {
        "command": "baseline",
        "n_rows": trace.n_rows,
        "iterations": int(trace.t[-1]),
        "final_J": float(trace.j[-1]),
        "final_grad_norm": float(trace.grad_norm[-1]),
        "final_theta_err": float(trace.theta_err[-1]),
        "cum_inner_iters": float(trace.cum_inner_iters[-1]),
    }
    return 0, entries


def _cmd_burgers(cfg: dict, rundir: Path, cfg_dir: Path):
    b = cfg["burgers"]
    p = BurgersProblem.default(b["n"], tuple(b["theta_star"]))
    schedule = None
    if b["c_alpha"] is not None or b["kind"] != "inverse-linear":
        if b["c_alpha"] is None:
            raise ConfigError("burgers.c_alpha=auto is only supported for inverse-linear")
        schedule = Schedule(b["kind"], b["c_alpha"], b["exponent"])
    cache_dir = rundir.parent / "cache" if b["cache"] else None
    bcfg = BurgersRunConfig(
        problem=p,
        horizon=b["horizon"],
        theta0=tuple(b["theta0"]),
        schedule=schedule,
        c_alpha=b["c_alpha"],
        log_stride=b["log_stride"],
        target_tol=b["target_tol"],
        diag_tol=b["diag_tol"],
        cache_dir=cache_dir,
    )
    trace = run_burgers_online(bcfg)
    trace.to_csv(rundir / "trace.csv")
    _maybe_svg(cfg, trace, rundir, "burgers")
    final_err = float(trace.theta_err[-1])
    entries = {
        "command": "burgers",
        "n_rows": trace.n_rows,
        "final_t": float(trace.t[-1]),
        "final_theta_err": final_err,
        "final_theta": ",".join("%.17g" % v for v in trace.theta[-1]),
        "c_alpha": float(trace.alpha[0]),
        "final_err_max": b["final_err_max"],
    }
    code = 0 if final_err <= b["final_err_max"] else 2
    return code, entries


def _cmd_gradcheck(cfg: dict, rundir: Path, cfg_dir: Path):
    src = cfg["source"]
    run = cfg["run"]
    stock = build_stock(cfg["grid"]["n"], src["d"], src["theta_true"], src["gamma"])
    solver = SolverConfig(tol=run["solver_tol"])
    rng = np.random.default_rng(run["seed"])
    errs = []
    entries = {"command": "gradcheck", "probes": run["probes"]}
    for i in range(run["probes"]):
        theta = ThetaVector(rng.standard_normal(src["d"]), src["gamma"])
        g_adj = adjoint_gradient(stock.op, stock.model, theta, stock.target, solver)
        g_fd = fd_gradient(stock.op, stock.model, theta, stock.target, solver, run["fd_step"])
        rel = float(np.linalg.norm(g_adj - g_fd) / max(np.linalg.norm(g_adj), 1e-300))
        errs.append(rel)
        entries[f"rel_err_{i}"] = rel
    entries["max_rel_err"] = max(errs)
    entries["tol"] = run["tol"]
    code = 0 if max(errs) <= run["tol"] else 2
    return code, entries


def _cmd_rates(cfg: dict, rundir: Path, cfg_dir: Path):
    r = cfg["rates"]
    trace_path = Path(r["trace"])
    if not trace_path.is_absolute():
        trace_path = cfg_dir / trace_path
    trace = TraceRecord.from_csv(trace_path)
    window = None
    if r["t_lo"] is not None or r["t_hi"] is not None:
        window = (
            r["t_lo"] if r["t_lo"] is not None else -np.inf,
            r["t_hi"] if r["t_hi"] is not None else np.inf,
        )
    fit = fit_rate(trace.t, trace.column(r["column"]), window=window)
    out = cfg.get("output", {})
    if out.get("svg"):
        emit_svg(
            trace,
            rundir / "plot.svg",
            columns=(r["column"],),
            axes="log-log",
            guides=tuple(out.get("guides", ())),
            title="rates",
        )
    entries = {
        "command": "rates",
        "column": r["column"],
        "exponent": fit.exponent,
        "intercept": fit.intercept,
        "r_squared": fit.r_squared,
        "n_samples": fit.n_samples,
    }
    code = 0
    if r["slope_max"] is not None and fit.exponent > r["slope_max"]:
        code = 2
    if r["r2_min"] is not None and fit.r_squared < r["r2_min"]:
        code = 2
    entries["slope_max"] = "none" if r["slope_max"] is None else r["slope_max"]
    entries["r2_min"] = "none" if r["r2_min"] is None else r["r2_min"]
    return code, entries


def _cmd_schedule(cfg: dict, rundir: Path, cfg_dir: Path):
    s = cfg["schedule"]
    sched = Schedule(s["kind"], s["c_alpha"], s["exponent"])
    report = check_schedule(sched, s["gamma"])
    entries = {"command": "schedule", "kind": s["kind"], "gamma": s["gamma"]}
    for name, verdict in report.verdicts.items():
        entries[name] = verdict
    entries["compliant"] = str(report.compliant)
    if report.notes:
        entries["notes"] = report.notes
    code = 2 if (report.failed and s["require_compliant"]) else 0
    return code, entries


_DISPATCH = {
    "run": _cmd_run,
    "baseline": _cmd_baseline,
    "burgers": _cmd_burgers,
    "gradcheck": _cmd_gradcheck,
    "rates": _cmd_rates,
    "schedule": _cmd_schedule,
}


def _execute(task) -> int:
    command, cfg_path, out_dir, overrides = task
    try:
        raw = _load_raw(cfg_path)
        raw = _apply_overrides(raw, overrides)
        typed, text = _resolve(command, raw)
        rundir = _run_dir(command, text, out_dir)
        rundir.mkdir(parents=True, exist_ok=True)
        atomic_write_text(rundir / "config.ini", text)
        cfg_dir = Path(cfg_path).resolve().parent if cfg_path else Path.cwd()
        code, entries = _DISPATCH[command](typed, rundir, cfg_dir)
        entries["exit_code"] = code
        write_report(rundir / "report.txt", entries)
        print(f"{command}: artifacts in {rundir} (exit {code})")
        return code
    except (AdjointFlowError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="adjointflow",
        description="Experiment runner: online adjoint descent and its diagnostics.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _DISPATCH:
        p = sub.add_parser(name)
        p.add_argument("--config", action="append", default=None, metavar="PATH")
        p.add_argument("--out", default=None, metavar="DIR")
        p.add_argument("--jobs", type=int, default=1, metavar="N")
        p.add_argument(
            "--override",
            action="append",
            default=[],
            metavar="SECTION.KEY=VALUE",
        )
    args = parser.parse_args(argv)

    out_dir = args.out or os.environ.get("ADJOINT_FLOW_OUT") or "out"
    configs = args.config if args.config else [None]
    overrides = tuple(args.override)
    tasks = [(args.command, c, out_dir, overrides) for c in configs]

    jobs = max(1, args.jobs)
    if jobs == 1 or len(tasks) == 1:
        codes = [_execute(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            codes = list(pool.map(_execute, tasks))
    return max(codes)


def console_entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    console_entry()
