"""Command-line benchmark harness: ``saddlekit run|sweep|report``.

Config files are TOML::

    solver = "framework"        # am | ram | framework | catalyst_saga
    eps = 1e-4
    sigma = 0.0
    seed = 0

    [instance]                  # inline constants for problems.generate ...
    dims = [5, 5]
    L_f = 4.0
    mu_x = 0.5
    L_G = 1.0
    L_h = 1.0
    mu_y = 0.5
    # file = "instance.json"    # ... or a JSON instance, relative to the config

    [framework]                 # optional overrides for the framework plan
    order = "standard"          # standard | inverse
    sliding_h = "auto"          # auto | HgeG | HleG | ProxH | FiniteSumH
    sliding_f = "auto"          # auto | FgeG | FleG

    [budget]
    max_iter = 100000           # AM steps (am only)
    safety = 2.0

    [sweep]                     # sweep only
    param = "L_f"               # any [instance] key, or "eps"
    values = [1, 4, 16]
    seeds = [0, 1, 2]           # default: [seed]

am and ram minimize the instance's f alone; framework and catalyst_saga
solve the full saddle problem. Every trace row reports the exact gap
(closed form on these quadratic instances) and the cumulative oracle counts.

Exit codes: 0 certified success, 2 configuration error (nothing written),
3 budget exceeded (summary still written).
"""

from __future__ import annotations

import argparse
import copy
import csv
import io
import logging
import math
import os
import sys
import tempfile
import time
from pathlib import Path

import numpy as np
import tomli

from .am_solver import AMConfig, am_run, restarted_am
from .catalyst import prox_pipeline_solve
from .oracle_core import (CSV_FIELDS, BudgetExceeded, CallLedger, ContractError, OracleClass,
                          OracleSpec, SolverFailure, linear_oracle, quadratic_oracle)
from .problems import QuadraticSaddleInstance, brute_force_gap, generate
from .saddle_framework import Order, SlidingF, SlidingH, solve_saddle

log = logging.getLogger("saddlekit")

TRACE_COLUMNS = ["iter", "gap"] + list(CSV_FIELDS.values())
SUMMARY_COLUMNS = ["point", "param", "value", "seed", "solver", "status", "gap", "certified",
                   "iterations"] + list(CSV_FIELDS.values())
SOLVERS = ("am", "ram", "framework", "catalyst_saga")
INSTANCE_DEFAULTS = {"L_G": 1.0, "L_h": 1.0, "mu_y": 1.0}

EXIT_OK, EXIT_CONFIG, EXIT_BUDGET = 0, 2, 3


class ConfigError(Exception):
    """Invalid or incomplete experiment configuration."""


# ---------------------------------------------------------------------------
# config


def load_config(path, overrides: dict | None = None) -> dict:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        cfg = tomli.loads(path.read_text())
    except tomli.TOMLDecodeError as err:
        raise ConfigError(f"{path}: {err}") from err
    cfg["_base"] = str(path.resolve().parent)
    for k, v in (overrides or {}).items():
        if v is not None:
            cfg[k] = v
    return validate_config(cfg)


def validate_config(cfg: dict) -> dict:
    cfg = dict(cfg)
    cfg.setdefault("solver", "framework")
    cfg.setdefault("eps", 1e-4)
    cfg.setdefault("sigma", 0.0)
    cfg.setdefault("seed", 0)
    if cfg["solver"] not in SOLVERS:
        raise ConfigError(f"unknown solver {cfg['solver']!r}; pick one of {', '.join(SOLVERS)}")
    try:
        cfg["eps"] = float(cfg["eps"])
        cfg["sigma"] = float(cfg["sigma"])
        cfg["seed"] = int(cfg["seed"])
    except (TypeError, ValueError) as err:
        raise ConfigError(f"eps, sigma and seed must be numbers: {err}") from err
    if not cfg["eps"] > 0:
        raise ConfigError("eps must be positive")
    if not 0 <= cfg["sigma"] < 1:
        raise ConfigError("sigma must lie in [0, 1)")
    inst = cfg.get("instance")
    if not isinstance(inst, dict):
        raise ConfigError("missing [instance] table")
    if "file" in inst:
        f = Path(cfg.get("_base", ".")) / inst["file"]
        if not f.is_file():
            raise ConfigError(f"instance file not found: {f}")
        inst["file"] = str(f)
    else:
        missing = [k for k in ("dims", "L_f", "mu_x") if k not in inst]
        if missing:
            raise ConfigError(f"[instance] lacks {', '.join(missing)}")
    fw = cfg.setdefault("framework", {})
    try:
        if fw.get("order", "auto") != "auto":
            Order(fw["order"])
        if fw.get("sliding_h", "auto") != "auto":
            SlidingH(fw["sliding_h"])
        if fw.get("sliding_f", "auto") != "auto":
            SlidingF(fw["sliding_f"])
    except ValueError as err:
        raise ConfigError(f"[framework]: {err}") from err
    sweep = cfg.get("sweep")
    if sweep is not None:
        if "param" not in sweep or not sweep.get("values"):
            raise ConfigError("[sweep] needs param and a nonempty values list")
        if sweep["param"] != "eps" and "file" in inst:
            raise ConfigError("sweeps over instance constants need an inline [instance]")
    cfg.setdefault("budget", {})
    return cfg


def build_instance(cfg: dict) -> QuadraticSaddleInstance:
    inst = cfg["instance"]
    if "file" in inst:
        try:
            return QuadraticSaddleInstance.from_json(Path(inst["file"]).read_text())
        except (ValueError, KeyError) as err:
            raise ConfigError(f"bad instance file {inst['file']}: {err}") from err
    t = {**INSTANCE_DEFAULTS, **{k: v for k, v in inst.items() if k not in ("dims", "seed")}}
    try:
        return generate(tuple(inst["dims"]), t, int(inst.get("seed", cfg["seed"])))
    except ContractError as err:
        raise ConfigError(str(err)) from err


# ---------------------------------------------------------------------------
# solvers; each returns (status, gap, certified, iterations, ledger, trace rows)


def _row(k, gap, ledger: CallLedger):
    return [k, gap] + [ledger[c] for c in OracleClass]


def _run_am(inst, cfg, restarted):
    led = CallLedger()
    f = quadratic_oracle(inst.A, inst.a, oracle_class=OracleClass.GRAD_F, ledger=led)
    zero = linear_oracle(np.zeros(inst.dims[0]))
    L, mu = inst.constants["L_f"], inst.constants["mu_x"]
    x_star = np.linalg.solve(inst.A, -inst.a)
    f_star = inst.f(x_star)
    eps = cfg["eps"]
    x0 = np.zeros(inst.dims[0])
    R0 = float(np.linalg.norm(inst.A @ x0 + inst.a)) / mu
    trace = []
    cert = {"bound": math.inf}

    def certify(x, grad):
        cert["bound"] = float(grad @ grad) / (2.0 * mu)
        return cert["bound"]

    def prox(g, x_md, H):
        return x_md - g / H

    def callback(k, st, grad):
        trace.append(_row(k, inst.f(st.x_t) - f_star, led))
        return certify(st.x_t, grad) <= eps

    safety = float(cfg["budget"].get("safety", 2.0))
    status = "ok"
    if restarted:
        try:
            rep = restarted_am(f, zero, OracleSpec.exact(L, mu), prox, eps, cfg["sigma"], x0,
                               R0=max(R0, 1e-300), certify=certify, safety=safety,
                               callback=lambda k, st, g: trace.append(
                                   _row(k, inst.f(st.x_t) - f_star, led)) and False,
                               ledger=led)
            x, iters = rep.x_best, rep.iterations
        except BudgetExceeded as err:
            status, x, iters = "budget_exceeded", err.best, len(trace)
    else:
        H = 2.0 * L
        default = math.ceil(safety * math.sqrt(4.0 * H * R0**2 / eps)) + 1
        n = int(cfg["budget"].get("max_iter", default))
        rep = am_run(f, zero, prox, AMConfig(H=H, max_iter=n), x0, callback=callback, ledger=led)
        x, iters = rep.x_best, rep.iterations
        if cert["bound"] > eps:
            status = "budget_exceeded"
    return status, inst.f(x) - f_star, cert["bound"], iters, led, trace


def _run_saddle(inst, cfg, pipeline):
    p = inst.to_problem()
    trace = []

    def record(k, x, y, *_):
        trace.append(_row(k, brute_force_gap(inst, x, y), p.ledger))

    status, certified = "ok", math.nan
    try:
        if pipeline:
            sol = prox_pipeline_solve(p, cfg["eps"], cfg["sigma"], seed=cfg["seed"],
                                      callback=record)
            iters = sol.extras["stages1"]
        else:
            plan = {k: v for k, v in cfg["framework"].items()
                    if k in ("order", "sliding_h", "sliding_f") and v != "auto"}
            if "order" in plan:
                plan["order"] = Order(plan["order"])
            if "sliding_h" in plan:
                plan["sliding_h"] = SlidingH(plan["sliding_h"])
            if "sliding_f" in plan:
                plan["sliding_f"] = SlidingF(plan["sliding_f"])
            sol = solve_saddle(p, cfg["eps"], cfg["sigma"], plan=plan, callback=record)
            iters = sol.extras["loop1"]
        x, y = sol.x_hat, sol.y_hat
        certified = sol.eps_certified
        trace.append(_row(iters + 1 if trace else 1, brute_force_gap(inst, x, y), p.ledger))
    except (BudgetExceeded, SolverFailure) as err:
        log.warning("budget exceeded: %s", err)
        status = "budget_exceeded"
        iters = len(trace)
    except ContractError as err:
        raise ConfigError(str(err)) from err
    gap = trace[-1][1] if trace else math.nan
    return status, gap, certified, iters, p.ledger, trace


def run_once(cfg: dict):
    inst = build_instance(cfg)
    solver = cfg["solver"]
    if solver in ("am", "ram"):
        return _run_am(inst, cfg, solver == "ram")
    return _run_saddle(inst, cfg, solver == "catalyst_saga")


# ---------------------------------------------------------------------------
# output


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _csv_text(columns, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


def write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    with os.fdopen(fd, "w", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def run_experiment(cfg: dict, out: Path) -> int:
    """One run (or a sweep when cfg has [sweep]); writes CSVs under ``out``."""
    points = []
    sweep = cfg.get("sweep")
    if sweep is None:
        points.append((0, "", "", cfg["seed"], cfg))
    else:
        seeds = sweep.get("seeds", [cfg["seed"]])
        for i, v in enumerate(sweep["values"]):
            for s in seeds:
                c = copy.deepcopy(cfg)
                c["seed"] = int(s)
                if sweep["param"] == "eps":
                    c["eps"] = float(v)
                else:
                    c["instance"][sweep["param"]] = v
                    c["instance"].setdefault("seed", int(s))
                points.append((i, sweep["param"], v, int(s), c))
    # build every instance first so a bad grid point fails before anything is written
    for *_, c in points:
        build_instance(c)

    summary, timing, code = [], [], EXIT_OK
    for i, param, value, seed, c in points:
        t0 = time.perf_counter()
        status, gap, cert, iters, led, trace = run_once(c)
        wall = time.perf_counter() - t0
        name = "trace.csv" if sweep is None else f"trace_{i}_seed{seed}.csv"
        write_atomic(out / name, _csv_text(TRACE_COLUMNS, trace))
        summary.append([i, param, value, seed, c["solver"], status, gap, cert, iters]
                       + [led[k] for k in OracleClass])
        timing.append([i, seed, f"{wall:.3f}"])
        log.info("point %s=%s seed %d: %s gap=%.3e (%.2fs)", param or "-", value, seed, status, gap, wall)
        if status != "ok":
            code = EXIT_BUDGET
    write_atomic(out / "summary.csv", _csv_text(SUMMARY_COLUMNS, summary))
    write_atomic(out / "timing.csv", _csv_text(["point", "seed", "wall_seconds"], timing))
    return code


def report_scaling(summary_csv, x_field, y_field) -> float:
    """Least-squares slope of log(y) against log(x); rows sharing an x are averaged first."""
    with open(summary_csv, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows or x_field not in rows[0] or y_field not in rows[0]:
        raise ContractError(f"{summary_csv} lacks column {x_field!r} or {y_field!r}")
    groups: dict[float, list] = {}
    for r in rows:
        groups.setdefault(float(r[x_field]), []).append(float(r[y_field]))
    return fit_exponent(list(groups), [float(np.mean(v)) for v in groups.values()])


def fit_exponent(xs, ys) -> float:
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if x.size < 3 or np.unique(x).size < 3:
        raise ContractError("a scaling fit needs at least 3 distinct grid points")
    if np.any(x <= 0) or np.any(y <= 0):
        raise ContractError("a log-log fit needs positive values")
    slope, _ = np.polyfit(np.log(x), np.log(y), 1)
    return float(slope)


# ---------------------------------------------------------------------------
# entry point


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="saddlekit", description="saddle-point solver benchmarks")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, helptext in (("run", "run one configured experiment"),
                           ("sweep", "run the [sweep] grid of a config")):
        sp = sub.add_parser(name, help=helptext)
        sp.add_argument("--config", required=True, help="TOML experiment file")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out", default="out", help="output directory (default: out)")
        sp.add_argument("--eps", type=float)
        sp.add_argument("--sigma", type=float)
        sp.add_argument("--solver", choices=SOLVERS)
    rp = sub.add_parser("report", help="fit a log-log scaling exponent from a summary CSV")
    rp.add_argument("summary", help="summary.csv written by sweep")
    rp.add_argument("--x", default="value", help="column for the grid (default: value)")
    rp.add_argument("--y", default="grad_f", help="column to fit (default: grad_f)")
    return ap


def main(argv=None) -> int:
    level = os.environ.get("SADDLEKIT_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    args = _parser().parse_args(argv)
    try:
        if args.command == "report":
            print(f"{report_scaling(args.summary, args.x, args.y):.6f}")
            return EXIT_OK
        overrides = {"seed": args.seed, "eps": args.eps, "sigma": args.sigma, "solver": args.solver}
        cfg = load_config(args.config, overrides)
        if args.command == "sweep" and "sweep" not in cfg:
            raise ConfigError("sweep needs a [sweep] table in the config")
        if args.command == "run":
            cfg.pop("sweep", None)
        return run_experiment(cfg, Path(args.out))
    except (ConfigError, ContractError, OSError) as err:
        print(f"saddlekit: error: {err}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
