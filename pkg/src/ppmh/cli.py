"""Command-line experiment runner.

``ppmh run --config exp.json`` runs one solver and writes ``report.json``,
``errors.csv`` and ``solution.csv``; ``ppmh zsweep --config exp.json`` runs the
TP simplified Newton method over a range of linearization points and writes
``zsweep.csv``.  Exit status: 0 converged, 2 iteration cap, 1 any other error.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import algorithms
from .core import ConvergenceError, TimeGrid
from .linalg import BlockCyclicSystem
from .models import (KappaPiecewise, estimate_constants, load_linear_problem, nonlinear_diffusion_1d,
                     random_linear, rl_circuit_1d)
from .parallel import WORKERS_ENV
from .propagators import PropagatorConfig

log = logging.getLogger(__name__)

EXIT_OK, EXIT_ERROR, EXIT_CAP = 0, 1, 2

METHODS = ("sequential", "pp_ic", "pp_pc_jacobi", "pp_pc_mh", "linear_pp_pc_mh", "tp_mh", "splitting")
TOP_KEYS = {"problem", "method", "grid", "outer", "propagator", "z_choice", "z_sweep", "splitting",
            "workers", "out", "seed"}
GRID_KEYS = {"num_windows", "fine_steps_per_window", "fine_step"}
OUTER_KEYS = {"max_outer", "max_inner", "a_tol", "r_tol"}
PROPAGATOR_KEYS = {"newton_tol", "newton_max_iter", "per_step_solver", "coarse_scheme"}
SWEEP_KEYS = {"start", "stop", "step", "domain"}
SPLITTING_KEYS = {"mode", "diagonal"}


class ConfigError(ValueError):
    pass


def _check_keys(section, allowed, where):
    if not isinstance(section, dict):
        raise ConfigError(f"{where} must be an object")
    unknown = sorted(set(section) - allowed)
    if unknown:
        raise ConfigError(f"unknown key {where}.{unknown[0]}" if where else f"unknown key {unknown[0]}")


@dataclass
class ExperimentConfig:
    problem: str
    problem_params: dict
    method: str
    grid: TimeGrid
    outer: algorithms.OuterConfig
    propagator: PropagatorConfig
    z_sweep: dict = field(default_factory=dict)
    splitting: dict = field(default_factory=dict)
    workers: Optional[int] = None
    out: Optional[str] = None
    seed: int = 0

    @classmethod
    def from_dict(cls, data):
        _check_keys(data, TOP_KEYS, "")
        problem = data.get("problem", "rl1d")
        params = {}
        if isinstance(problem, dict):
            _check_keys(problem, {"name", "params"}, "problem")
            params = dict(problem.get("params", {}))
            problem = problem.get("name")
        if not isinstance(problem, str):
            raise ConfigError("problem must be a name or an object with a name")
        method = data.get("method", "sequential")
        if method not in METHODS:
            raise ConfigError(f"method: unknown method {method!r}; choose from {', '.join(METHODS)}")

        g = data.get("grid", {})
        _check_keys(g, GRID_KEYS, "grid")
        if "num_windows" not in g:
            raise ConfigError("grid.num_windows is required")
        if "fine_step" in g and "fine_steps_per_window" in g:
            raise ConfigError("grid.fine_step conflicts with grid.fine_steps_per_window")

        o = data.get("outer", {})
        _check_keys(o, OUTER_KEYS, "outer")
        z = data.get("z_choice", "zero")
        try:
            outer = algorithms.OuterConfig(z_choice=z, **o)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"outer/z_choice: {exc}") from exc

        p = data.get("propagator", {})
        _check_keys(p, PROPAGATOR_KEYS, "propagator")
        try:
            prop = PropagatorConfig(**p)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"propagator: {exc}") from exc

        sweep = data.get("z_sweep", {})
        _check_keys(sweep, SWEEP_KEYS, "z_sweep")
        split = data.get("splitting", {})
        _check_keys(split, SPLITTING_KEYS, "splitting")
        if split.get("mode", "pppc") not in ("pppc", "tp"):
            raise ConfigError("splitting.mode must be 'pppc' or 'tp'")
        if split.get("diagonal", "frozen_stiffness") not in ("frozen_stiffness", "newton"):
            raise ConfigError("splitting.diagonal must be 'frozen_stiffness' or 'newton'")
        workers = data.get("workers")
        if workers is not None and (not isinstance(workers, int) or workers < 1):
            raise ConfigError("workers must be a positive integer")
        return cls(problem, params, method, None, outer, prop, sweep, split, workers,
                   data.get("out"), int(data.get("seed", 0)))._with_grid(g)

    def _with_grid(self, g):
        period = build_problem(self.problem, self.problem_params, self.seed)[0].period
        N = g["num_windows"]
        try:
            if "fine_step" in g:
                self.grid = TimeGrid.from_fine_step(N, g["fine_step"], period)
            else:
                self.grid = TimeGrid(N, g.get("fine_steps_per_window", 1), period)
        except ValueError as exc:
            raise ConfigError(f"grid: {exc}") from exc
        return self


def build_problem(name, params=None, seed=0):
    """Problem and its scalar coefficient law (``None`` when not applicable)."""
    params = params or {}
    try:
        if name == "rl1d":
            problem = rl_circuit_1d(**params)
            return problem, params.get("kappa") or KappaPiecewise()
        if name.startswith("diffusion1d:"):
            return nonlinear_diffusion_1d(int(name.split(":", 1)[1]), **params), None
        if name.startswith("random_linear:"):
            return random_linear(int(name.split(":", 1)[1]), seed=seed, **params), None
        if name.startswith("linear:"):
            return load_linear_problem(name.split(":", 1)[1]), None
    except TypeError as exc:
        raise ConfigError(f"problem.params: {exc}") from exc
    raise ConfigError(f"problem: unknown problem {name!r}")


def _splitting_matrix(cfg, problem):
    grid = cfg.grid.fine_as_windows() if cfg.splitting.get("mode", "pppc") == "tp" else cfg.grid
    C = problem.mass / grid.coarse_step
    z = cfg.outer.linearization_point(problem.dim)
    if cfg.splitting.get("diagonal", "frozen_stiffness") == "newton":
        Q = C + problem.stiffness_jacobian(z)
    else:
        Q = C + problem.stiffness(z)
    return BlockCyclicSystem(Q, C, grid.num_windows)


def run_experiment(cfg, workers):
    problem, _ = build_problem(cfg.problem, cfg.problem_params, cfg.seed)
    args = (problem, cfg.grid)
    kw = dict(cfg=cfg.outer, prop_cfg=cfg.propagator, workers=workers)
    if cfg.method == "sequential":
        return algorithms.sequential_steady_state(*args, **kw)
    if cfg.method == "pp_ic":
        return algorithms.pp_ic(*args, **kw)
    if cfg.method == "pp_pc_jacobi":
        return algorithms.pp_pc_jacobi(*args, **kw)
    if cfg.method == "pp_pc_mh":
        return algorithms.pppc_mh_newton(*args, **kw)
    if cfg.method == "linear_pp_pc_mh":
        return algorithms.linear_pppc_mh(*args, **kw)
    if cfg.method == "tp_mh":
        return algorithms.tp_mh(*args, **kw)
    return algorithms.splitting_iteration(problem, cfg.grid, _splitting_matrix(cfg, problem),
                                          mode=cfg.splitting.get("mode", "pppc"), **kw)


def fmt(x):
    return f"{float(x):.16e}"


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\r\n")
        writer.writerow(header)
        writer.writerows(rows)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def write_report(report, out):
    os.makedirs(out, exist_ok=True)
    data = report.to_dict()
    data["extras"] = _jsonable({k: v for k, v in report.extras.items() if k != "inner_iterates"})
    with open(os.path.join(out, "report.json"), "w") as fh:
        json.dump(data, fh, indent=2, sort_keys=True)
        fh.write("\n")
    # PP-IC checks its starting iterate, so its history begins at iteration 0.
    first = 0 if report.method == "pp_ic" else 1
    inner = list(report.inner_iterations) if len(report.inner_iterations) == len(report.error_history) else []
    rows = []
    for i, e in enumerate(report.error_history):
        rows.append([i + first, fmt(e), inner[i] if inner and report.method not in ("tp_mh",) else ""])
    _write_csv(os.path.join(out, "errors.csv"), ["iteration", "error", "inner_iterations"], rows)
    sol = np.atleast_2d(report.solution)
    _write_csv(os.path.join(out, "solution.csv"),
               ["time"] + [f"u{i}" for i in range(sol.shape[1])],
               [[fmt(t)] + [fmt(v) for v in row] for t, row in zip(report.times, sol)])


def sweep_points(spec):
    domain = spec.get("domain", [-0.25, 0.25])
    start, stop, step = spec.get("start", -0.24), spec.get("stop", 0.24), spec.get("step", 0.01)
    if not step > 0 or stop < start:
        raise ConfigError("z_sweep: need step > 0 and stop >= start")
    if not (domain[0] < start and stop < domain[1]):
        raise ConfigError(f"z_sweep: range [{start}, {stop}] leaves the open domain {tuple(domain)}")
    count = int(np.floor((stop - start) / step + 1e-9)) + 1
    return np.round(start + step * np.arange(count), 12), tuple(domain)


def run_zsweep(cfg, workers, out):
    """One TP simplified Newton run per linearization point; returns the sweep rows."""
    problem, kappa = build_problem(cfg.problem, cfg.problem_params, cfg.seed)
    if kappa is None or problem.dim != 1:
        raise ConfigError("problem: the z sweep needs a scalar problem with a known coefficient law")
    zs, domain = sweep_points(cfg.z_sweep)
    rows = []
    for z in zs:
        try:
            rep = algorithms.tp_mh(problem, cfg.grid, cfg.outer, cfg.propagator, workers=workers, z=z)
            its, rho1, ok = rep.outer_iterations, rep.extras["rho1"], True
        except ConvergenceError as exc:
            its, rho1, ok = exc.iterations, float("nan"), False
        consts = estimate_constants(kappa, domain=domain, rho1=rho1)
        rows.append({"z": float(z), "newton_iterations": its, "rho1": rho1, "h0": consts.h0,
                     "rho": consts.rho, "converged": ok})
    os.makedirs(out, exist_ok=True)
    _write_csv(os.path.join(out, "zsweep.csv"), ["z", "newton_iterations", "rho1", "h0", "rho", "converged"],
               [[fmt(r["z"]), r["newton_iterations"], fmt(r["rho1"]), fmt(r["h0"]),
                 "" if r["rho"] is None else fmt(r["rho"]), str(r["converged"]).lower()] for r in rows])
    return rows


def _resolve_workers(flag, cfg):
    if flag is not None:
        return flag
    env = os.environ.get(WORKERS_ENV)
    if env:
        return int(env)
    return cfg.workers or 1


def load_config(path):
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return ExperimentConfig.from_dict(data)


def build_parser():
    parser = argparse.ArgumentParser(prog="ppmh", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in (("run", "run one solver"), ("zsweep", "sweep the Newton linearization point")):
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", required=True, help="JSON experiment file")
        p.add_argument("--workers", type=int, help=f"worker count (overrides config and ${WORKERS_ENV})")
        p.add_argument("--out", help="output directory (overrides config)")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        workers = _resolve_workers(args.workers, cfg)
        if workers < 1:
            raise ConfigError("workers must be >= 1")
        out = args.out or cfg.out or "ppmh-out"
        if args.command == "zsweep":
            rows = run_zsweep(cfg, workers, out)
            return EXIT_OK if all(r["converged"] for r in rows) else EXIT_CAP
        report = run_experiment(cfg, workers)
        write_report(report, out)
        if not report.converged:
            print(f"ppmh: {report.message}", file=sys.stderr)
            return EXIT_CAP
        return EXIT_OK
    except ConvergenceError as exc:
        print(f"ppmh: {exc}", file=sys.stderr)
        return EXIT_CAP
    except (ConfigError, OSError, ValueError, np.linalg.LinAlgError) as exc:
        print(f"ppmh: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
