"""Command-line driver: ``hybridpar {solve|optimize|diagnose|sweep-tau|print-config}``.

Exit codes: 0 success, 2 configuration error, 3 solver failure, 4 missing or
corrupt run artifacts.
"""

from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import __version__
from .controls import ControlField, read_control_csv, write_control_csv
from .diagnostics import (check_pontryagin, dump_json, fd_audit, hamiltonian_trace,
                          second_order_probe)
from .errors import HybridParError, InvalidParams, SolverFailure
from .fem1d import build_uniform_mesh
from .forward import SCHEMES, solve_state, write_trajectory_csv
from .optimize import BBOptions, CsvIterationLog, run_bb
from .problem import build_problem
from .reduced import cost_of_state, eval_gradient
from .timemap import PseudoTimeGrid

__all__ = ["RunConfig", "DEFAULT_CONFIG", "load_config", "main", "cmd_solve", "cmd_optimize",
           "cmd_diagnose", "cmd_sweep_tau", "ConfigError", "ArtifactError"]

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_ARTIFACT = 0, 2, 3, 4

DEFAULT_CONFIG = {
    "problem": {"name": "lotka_volterra", "params": {}},
    "mesh": {"n_nodes": 1001},
    "time": {"n_steps": 1000},
    "scheme": {"state": "CN", "adjoint": "paper", "adjoint_time": "IE"},
    "optimizer": {k: v for k, v in BBOptions().to_dict().items()
                  if k not in ("mode", "scheme", "adjoint_scheme", "optimize_tau")},
    "initial": {"u0": {"kind": "constant", "value": 0.0}, "tau0": 15.0},
    "diagnostics": {"delta": 0.0, "second_order_dirs": 8, "fd_dirs": 20, "fd_eps": 1e-5,
                    "fd_eps_sweep": [1e-3, 1e-4, 1e-5, 1e-6, 1e-7], "autonomous": False},
    "sweep": {"tau_grid": [10.0, 12.0, 13.6, 15.0, 18.0], "reoptimize": True},
    "output": {"dir": "out", "state_every": 10},
    "seed": 0,
}


class ConfigError(HybridParError, ValueError):
    pass


class ArtifactError(HybridParError, OSError):
    pass


def _merge(base, over, path=""):
    out = copy.deepcopy(base)
    for k, v in over.items():
        where = f"{path}{k}"
        if k not in base:
            raise ConfigError(f"unknown config field {where!r}")
        if isinstance(base[k], dict) and k not in ("params", "u0"):
            if not isinstance(v, dict):
                raise ConfigError(f"config field {where!r} must be an object")
            out[k] = _merge(base[k], v, where + ".")
        else:
            out[k] = copy.deepcopy(v)
    return out


@dataclass(frozen=True)
class RunConfig:
    """Validated run configuration; ``raw`` is the fully resolved JSON document."""

    raw: dict
    base_dir: str = "."

    @property
    def n_nodes(self):
        return self.raw["mesh"]["n_nodes"]

    @property
    def n_steps(self):
        return self.raw["time"]["n_steps"]

    @property
    def tau0(self):
        return float(self.raw["initial"]["tau0"])

    @property
    def seed(self):
        return int(self.raw["seed"])

    @property
    def out_dir(self):
        return self.raw["output"]["dir"]

    def canonical(self) -> str:
        return json.dumps(self.raw, sort_keys=True, separators=(",", ":"))

    @property
    def hash(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()[:16]

    def header(self) -> dict:
        return {"software": "hybridpar", "version": __version__, "config_hash": self.hash}

    def header_lines(self):
        return [f"hybridpar {__version__}", f"config_hash {self.hash}"]

    def problem(self):
        p = self.raw["problem"]
        return build_problem(p["name"], p.get("params") or {})

    def mesh(self):
        return build_uniform_mesh(self.n_nodes)

    def grid(self):
        return PseudoTimeGrid(self.n_steps)

    def bb_options(self, **extra) -> BBOptions:
        o = dict(self.raw["optimizer"])
        o["tau_bounds"] = tuple(o["tau_bounds"])
        s = self.raw["scheme"]
        return BBOptions(**o, mode=s["adjoint"], scheme=s["state"], adjoint_scheme=s["adjoint_time"],
                         **extra)

    def initial_control(self, problem, mesh, grid) -> ControlField:
        spec = self.raw["initial"]["u0"]
        if spec.get("kind") == "constant":
            return ControlField.constant(grid, problem.n_controls, mesh.n_nodes,
                                         float(spec.get("value", 0.0)))
        path = os.path.join(self.base_dir, spec["path"])
        try:
            return read_control_csv(path, grid, problem.n_controls, mesh)
        except (OSError, ValueError) as exc:
            raise ConfigError(f"initial.u0.path: {exc}") from None


def _require(cond, msg):
    if not cond:
        raise ConfigError(msg)


def validate(raw: dict, base_dir=".") -> RunConfig:
    n_nodes, n_steps = raw["mesh"]["n_nodes"], raw["time"]["n_steps"]
    _require(isinstance(n_nodes, int) and n_nodes >= 3, "mesh.n_nodes must be an integer >= 3")
    _require(isinstance(n_steps, int) and n_steps >= 2 and n_steps % 2 == 0,
             f"time.n_steps must be an even integer >= 2 (got {n_steps!r})")
    s = raw["scheme"]
    _require(str(s["state"]).upper() in SCHEMES, "scheme.state must be 'CN' or 'IE'")
    _require(str(s["adjoint_time"]).upper() in SCHEMES, "scheme.adjoint_time must be 'CN' or 'IE'")
    _require(s["adjoint"] in ("paper", "matched"), "scheme.adjoint must be 'paper' or 'matched'")
    u0 = raw["initial"]["u0"]
    _require(isinstance(u0, dict) and u0.get("kind") in ("constant", "file"),
             "initial.u0.kind must be 'constant' or 'file'")
    _require(u0.get("kind") != "file" or isinstance(u0.get("path"), str),
             "initial.u0.path is required for kind 'file'")
    _require(isinstance(raw["seed"], int), "seed must be an integer")
    _require(isinstance(raw["output"]["state_every"], int) and raw["output"]["state_every"] >= 1,
             "output.state_every must be a positive integer")
    cfg = RunConfig(raw, base_dir)
    try:
        problem = cfg.problem()
    except InvalidParams as exc:
        raise ConfigError(f"problem: {exc}") from None
    tau0 = raw["initial"]["tau0"]
    _require(isinstance(tau0, (int, float)) and 0.0 < tau0 < problem.T,
             f"initial.tau0 must lie in (0, {problem.T})")
    try:
        cfg.bb_options()
    except (InvalidParams, TypeError) as exc:
        raise ConfigError(f"optimizer: {exc}") from None
    return cfg


def load_config(path: str | None, overrides: dict | None = None) -> RunConfig:
    """Read a JSON config, fill defaults and validate."""
    doc = {}
    base = "."
    if path is not None:
        try:
            with open(path) as fh:
                doc = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
        if not isinstance(doc, dict):
            raise ConfigError("config root must be a JSON object")
        base = os.path.dirname(os.path.abspath(path))
    raw = _merge(DEFAULT_CONFIG, doc)
    if overrides:
        raw = _merge(raw, overrides)
    return validate(raw, base)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def _out(cfg, out_dir):
    d = out_dir or cfg.out_dir
    os.makedirs(d, exist_ok=True)
    return d


def cmd_solve(cfg: RunConfig, out_dir=None) -> dict:
    """Forward solve at the initial point; writes state.csv and cost.json."""
    d = _out(cfg, out_dir)
    problem, mesh, grid = cfg.problem(), cfg.mesh(), cfg.grid()
    u = cfg.initial_control(problem, mesh, grid)
    state = solve_state(problem, mesh, u, cfg.tau0, cfg.raw["scheme"]["state"])
    J = cost_of_state(problem, mesh, state, u, cfg.tau0)
    write_trajectory_csv(os.path.join(d, "state.csv"), state, mesh, cfg.header_lines(),
                         cfg.raw["output"]["state_every"])
    doc = {"J": J, "tau": cfg.tau0, "n_nodes": cfg.n_nodes, "n_steps": cfg.n_steps,
           "scheme": state.scheme, "newton_iterations": int(np.sum(state.newton_iterations))}
    dump_json(doc, os.path.join(d, "cost.json"), cfg.header())
    return doc


def _baseline(problem, mesh, grid, tau, scheme):
    u = ControlField.zeros(grid, problem.n_controls, mesh.n_nodes)
    return cost_of_state(problem, mesh, solve_state(problem, mesh, u, tau, scheme), u, tau)


def cmd_optimize(cfg: RunConfig, out_dir=None) -> dict:
    """Projected BB run; writes iterations.csv, final_control.csv and report.json."""
    d = _out(cfg, out_dir)
    problem, mesh, grid = cfg.problem(), cfg.mesh(), cfg.grid()
    u0 = cfg.initial_control(problem, mesh, grid)
    opts = cfg.bb_options()
    J0 = _baseline(problem, mesh, grid, cfg.tau0, opts.scheme)
    with open(os.path.join(d, "iterations.csv"), "w", newline="") as fh:
        rep = run_bb(problem, mesh, u0, cfg.tau0, opts, CsvIterationLog(fh, cfg.header_lines()))
    write_control_csv(os.path.join(d, "final_control.csv"), rep.u, mesh, rep.tau, problem.T,
                      cfg.header_lines())
    umax = np.max(np.abs(rep.u.values), axis=(0, 2))
    doc = {
        "tau_star": rep.tau,
        "J_star": rep.J,
        "J_baseline": J0,
        "baseline_tau": cfg.tau0,
        "improvement_percent": 100.0 * (J0 - rep.J) / abs(J0) if J0 != 0 else 0.0,
        "termination": rep.reason,
        "iterations": rep.iterations,
        "gradient_evaluations": rep.n_gradient_evals,
        "grad_u_norm": rep.history[-1].grad_u_norm,
        "grad_tau": rep.history[-1].grad_tau,
        "tau_scaling": rep.tau_scaling,
        "max_abs_control": umax.tolist(),
        "options": opts.to_dict(),
    }
    dump_json(doc, os.path.join(d, "report.json"), cfg.header())
    return doc


def _load_checkpoint(cfg, d, problem, mesh, grid):
    rp = os.path.join(d, "report.json")
    try:
        with open(rp) as fh:
            rep = json.load(fh)
        tau = float(rep["tau_star"])
    except OSError as exc:
        raise ArtifactError(f"missing artifact {rp}: {exc.strerror}") from None
    except (ValueError, KeyError, TypeError) as exc:
        raise ArtifactError(f"corrupt artifact {rp}: {exc}") from None
    if not 0.0 < tau < problem.T:
        raise ArtifactError(f"corrupt artifact {rp}: tau_star={tau} outside (0, {problem.T})")
    cp = os.path.join(d, "final_control.csv")
    try:
        u = read_control_csv(cp, grid, problem.n_controls, mesh)
    except OSError as exc:
        raise ArtifactError(f"missing artifact {cp}: {exc.strerror}") from None
    except ValueError as exc:
        raise ArtifactError(f"corrupt artifact {cp}: {exc}") from None
    return u, tau


def cmd_diagnose(cfg: RunConfig, out_dir=None) -> dict:
    """Optimality diagnostics at the optimizer's output found in ``out_dir``."""
    d = out_dir or cfg.out_dir
    problem, mesh, grid = cfg.problem(), cfg.mesh(), cfg.grid()
    u, tau = _load_checkpoint(cfg, d, problem, mesh, grid)
    dg = cfg.raw["diagnostics"]
    s = cfg.raw["scheme"]
    G = eval_gradient(problem, mesh, u, tau, mode=s["adjoint"], scheme=s["state"],
                      adjoint_scheme=s["adjoint_time"])
    pont = check_pontryagin(problem, mesh, G.state, G.costate, u, tau, dg["delta"], G.grad_tau)
    pdoc = {"tau": tau, "J": G.cost, "mode": s["adjoint"], **pont.summary()}
    dump_json(pdoc, os.path.join(d, "pontryagin.json"), cfg.header())
    trace = hamiltonian_trace(problem, mesh, G.state, G.costate, u, tau,
                              autonomous=bool(dg["autonomous"]))
    trace.to_csv(os.path.join(d, "hamiltonian.csv"), cfg.header_lines())
    audit = fd_audit(problem, mesh, u, tau, mode=s["adjoint"], n_dirs=dg["fd_dirs"],
                     seed=cfg.seed, eps=dg["fd_eps"], scheme=s["state"],
                     adjoint_scheme=s["adjoint_time"], eps_sweep=dg["fd_eps_sweep"])
    audit.to_json(os.path.join(d, "fd_audit.json"), cfg.header())
    doc = {"pontryagin": pdoc, "hamiltonian": trace.summary(), "fd_audit_passed": audit.passed}
    if problem.has_second_derivatives:
        probe = second_order_probe(problem, mesh, u, tau, dg["delta"], dg["second_order_dirs"],
                                   cfg.seed, s["state"])
        probe.to_json(os.path.join(d, "second_order.json"), cfg.header())
        doc["second_order"] = {k: v for k, v in probe.summary().items()
                               if k in ("min_quadratic", "min_ratio", "max_ratio")}
    else:
        dump_json({"skipped": "problem provides no second derivatives"},
                  os.path.join(d, "second_order.json"), cfg.header())
    return doc


SWEEP_COLUMNS = ("tau", "J", "status", "iterations", "termination", "message")


def _sweep_point(args):
    raw, base_dir, tau = args
    cfg = RunConfig(raw, base_dir)
    problem, mesh, grid = cfg.problem(), cfg.mesh(), cfg.grid()
    if not 0.0 < tau < problem.T:
        return (tau, float("nan"), "error", 0, "", f"tau outside (0, {problem.T})")
    try:
        u0 = cfg.initial_control(problem, mesh, grid)
        if raw["sweep"]["reoptimize"]:
            rep = run_bb(problem, mesh, u0, tau, cfg.bb_options(optimize_tau=False))
            return (tau, rep.J, "ok", rep.iterations, rep.reason, "")
        state = solve_state(problem, mesh, u0, tau, raw["scheme"]["state"])
        return (tau, cost_of_state(problem, mesh, state, u0, tau), "ok", 0, "fixed_control", "")
    except SolverFailure as exc:
        return (tau, float("nan"), "error", 0, "", str(exc))


def cmd_sweep_tau(cfg: RunConfig, out_dir=None, jobs: int = 1) -> list:
    """Cost over a grid of switching times, with ``u`` fixed or re-optimized per point."""
    d = _out(cfg, out_dir)
    taus = [float(t) for t in cfg.raw["sweep"]["tau_grid"]]
    work = [(cfg.raw, cfg.base_dir, t) for t in taus]
    if jobs > 1 and len(work) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            rows = list(ex.map(_sweep_point, work))
    else:
        rows = [_sweep_point(w) for w in work]
    with open(os.path.join(d, "sweep.csv"), "w", newline="") as fh:
        for line in cfg.header_lines():
            fh.write(f"# {line}\n")
        w = csv.writer(fh)
        w.writerow(SWEEP_COLUMNS)
        for tau, J, status, it, term, msg in rows:
            w.writerow([repr(tau), repr(float(J)), status, it, term, msg])
    return rows


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def _parser():
    p = argparse.ArgumentParser(prog="hybridpar",
                                description="Hybrid optimal control with an optimizable switching time.")
    p.add_argument("command", choices=["solve", "optimize", "diagnose", "sweep-tau", "print-config"])
    p.add_argument("--config", help="JSON run configuration (defaults are used when omitted)")
    p.add_argument("--out", help="output directory (overrides output.dir)")
    p.add_argument("--jobs", type=int, default=1, help="parallel workers for sweep-tau")
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.jobs < 1:
            raise ConfigError("--jobs must be >= 1")
        cfg = load_config(args.config)
        if args.command == "print-config":
            json.dump(cfg.raw, sys.stdout, indent=2)
            sys.stdout.write("\n")
            return EXIT_OK
        t0 = time.perf_counter()
        if args.command == "solve":
            doc = cmd_solve(cfg, args.out)
            msg = f"J = {doc['J']!r}"
        elif args.command == "optimize":
            doc = cmd_optimize(cfg, args.out)
            msg = (f"tau* = {doc['tau_star']!r}, J* = {doc['J_star']!r}, "
                   f"improvement {doc['improvement_percent']:.2f}% ({doc['termination']})")
        elif args.command == "diagnose":
            doc = cmd_diagnose(cfg, args.out)
            msg = (f"inactive max |D_u h| = {doc['pontryagin']['inactive_max_abs_duh']!r}, "
                   f"grad_tau = {doc['pontryagin']['grad_tau']!r}")
        else:
            rows = cmd_sweep_tau(cfg, args.out, args.jobs)
            msg = f"{len(rows)} sweep points"
        print(f"{args.command}: {msg} [{time.perf_counter() - t0:.1f} s]")
        return EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ArtifactError as exc:
        print(f"artifact error: {exc}", file=sys.stderr)
        return EXIT_ARTIFACT
    except SolverFailure as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
