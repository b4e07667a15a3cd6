"""Projected Barzilai-Borwein descent over ``(u, tau)``."""

from __future__ import annotations

import csv
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .controls import ControlField, control_bounds, control_weights
from .errors import InvalidParams, SolverFailure
from .reduced import Gradient, eval_gradient

__all__ = ["BBOptions", "IterationRecord", "OptimizationReport", "project", "project_tau",
           "run_bb", "CsvIterationLog"]


@dataclass(frozen=True)
class BBOptions:
    """Optimizer settings.

    ``tau_scaling`` is ``s`` in the combined variable ``(u, tau / sqrt(s))``,
    so that a step of length ``a`` moves ``tau`` by ``a * s * g_tau``.  ``None``
    picks ``||g_u|| / |g_tau|`` at the initial point and freezes it.
    ``nonmonotone_window`` > 0 accepts a BB step only if ``J`` lies below the
    largest of the last that-many accepted values plus the Armijo term; 0
    gives the plain (unsafeguarded) BB iteration.
    ``optimize_tau=False`` keeps ``tau`` fixed at ``tau0``.
    ``gtol`` optionally stops when the projected-gradient norm falls below
    ``gtol`` times its initial value (0 disables it).
    """

    max_iters: int = 1000
    stop_rel_gradient_change: float = 1e-12
    backtrack: float = 0.5
    armijo_c: float = 1e-4
    initial_step: float = 1.0
    tau_scaling: float | None = None
    bb_variant: str = "alternate"
    step_min: float = 1e-8
    step_max: float = 1e8
    tau_bounds: tuple = (0.02, 0.98)
    max_rejects: int = 10
    gtol: float = 0.0
    nonmonotone_window: int = 10
    optimize_tau: bool = True
    mode: str = "paper"
    scheme: str = "CN"
    adjoint_scheme: str = "IE"

    def __post_init__(self):
        for name in ("stop_rel_gradient_change", "backtrack", "armijo_c", "initial_step",
                     "step_min", "step_max"):
            if not getattr(self, name) > 0:
                raise InvalidParams(f"BBOptions.{name} must be positive")
        if self.max_iters < 0 or self.max_rejects < 1:
            raise InvalidParams("BBOptions.max_iters must be >= 0 and max_rejects >= 1")
        if not self.backtrack < 1:
            raise InvalidParams("BBOptions.backtrack must lie in (0, 1)")
        if self.step_min > self.step_max:
            raise InvalidParams("BBOptions.step_min exceeds step_max")
        if self.tau_scaling is not None and not self.tau_scaling > 0:
            raise InvalidParams("BBOptions.tau_scaling must be positive")
        if self.bb_variant not in ("alternate", "bb1", "bb2"):
            raise InvalidParams("BBOptions.bb_variant must be 'alternate', 'bb1' or 'bb2'")
        lo, hi = self.tau_bounds
        if not 0 < lo < hi < 1:
            raise InvalidParams("BBOptions.tau_bounds are fractions of T with 0 < lo < hi < 1")
        if self.nonmonotone_window < 0:
            raise InvalidParams("BBOptions.nonmonotone_window must be >= 0")
        if self.gtol < 0:
            raise InvalidParams("BBOptions.gtol must be nonnegative")

    def to_dict(self):
        d = asdict(self)
        d["tau_bounds"] = list(self.tau_bounds)
        return d


@dataclass(frozen=True)
class IterationRecord:
    iter: int
    J: float
    grad_u_norm: float
    grad_tau: float
    tau: float
    step: float


@dataclass(eq=False)
class OptimizationReport:
    history: list
    u: ControlField
    tau: float
    J: float
    reason: str
    wall_time: float
    tau_scaling: float
    gradient: Gradient | None = field(default=None, repr=False)
    n_gradient_evals: int = 0

    @property
    def iterations(self):
        return len(self.history) - 1


class CsvIterationLog:
    """Streams ``(iter, J, grad_u_norm, grad_tau, tau, step)`` rows to a file."""

    columns = ("iter", "J", "grad_u_norm", "grad_tau", "tau", "step")

    def __init__(self, fh, header_lines=()):
        self.fh = fh
        for line in header_lines:
            fh.write(f"# {line}\n")
        self.writer = csv.writer(fh)
        self.writer.writerow(self.columns)

    def __call__(self, rec: IterationRecord):
        self.writer.writerow([rec.iter] + [repr(float(getattr(rec, c))) for c in self.columns[1:]])
        self.fh.flush()


def project(u: ControlField, problem, mesh) -> ControlField:
    """Clamp ``u`` to the phase-wise bounds."""
    lo, hi = control_bounds(problem, mesh, u.grid)
    return u.with_values(np.clip(u.values, lo, hi))


def project_tau(tau, problem, frac=(0.02, 0.98)):
    return float(np.clip(tau, frac[0] * problem.T, frac[1] * problem.T))


def run_bb(problem, mesh, u0: ControlField, tau0: float, opts: BBOptions = BBOptions(),
           log=None) -> OptimizationReport:
    """Minimize the reduced cost over admissible ``(u, tau)``.

    Iteration 0 is a projected steepest-descent step with Armijo backtracking;
    later steps use Barzilai-Borwein lengths (non-monotone).  ``log`` receives
    one :class:`IterationRecord` per accepted iterate.
    """
    t_start = time.perf_counter()
    T = problem.T
    if not 0.0 < tau0 < T:
        raise InvalidParams(f"tau0={tau0} outside (0, {T})")
    W = control_weights(mesh, u0.grid)
    lo, hi = control_bounds(problem, mesh, u0.grid)
    tlo, thi = opts.tau_bounds[0] * T, opts.tau_bounds[1] * T
    n_evals = 0

    def grad(u, tau):
        nonlocal n_evals
        n_evals += 1
        g = eval_gradient(problem, mesh, u, tau, mode=opts.mode, scheme=opts.scheme,
                          adjoint_scheme=opts.adjoint_scheme)
        if not opts.optimize_tau:
            g = replace(g, grad_tau=0.0)
        return g

    def dot_u(a, b):
        return float(np.sum(W * a * b))

    u = np.clip(u0.values, lo, hi)
    tau = float(np.clip(tau0, tlo, thi)) if opts.optimize_tau else float(tau0)
    G = grad(u0.with_values(u), tau)
    gu, gt = G.grad_u.values, G.grad_tau
    gu_norm = np.sqrt(dot_u(gu, gu))
    if opts.tau_scaling is not None:
        s = float(opts.tau_scaling)
    elif not opts.optimize_tau:
        s = 1.0
    elif gu_norm > 0:
        s = gu_norm / max(abs(gt), 1e-300)
    else:
        s = 1.0
    c = np.sqrt(s)

    def full_norm(gu, gt):
        return np.sqrt(dot_u(gu, gu) + s * gt ** 2)

    def pg_norm(u, tau, gu, gt):
        du = np.clip(u - gu, lo, hi) - u
        dtau = np.clip(tau - s * gt, tlo, thi) - tau if opts.optimize_tau else 0.0
        return np.sqrt(dot_u(du, du) + (dtau / c) ** 2)

    history = []

    def record(k, J, gu, gt, tau, step):
        rec = IterationRecord(k, float(J), float(np.sqrt(dot_u(gu, gu))), float(gt), float(tau),
                              float(step))
        history.append(rec)
        if log is not None:
            log(rec)

    record(0, G.cost, gu, gt, tau, 0.0)
    gnorm = full_norm(gu, gt)
    pg0 = pg_norm(u, tau, gu, gt)

    def finish(reason):
        return OptimizationReport(history, u0.with_values(u), tau, float(G.cost), reason,
                                  time.perf_counter() - t_start, s, G, n_evals)

    if pg0 == 0.0:
        return finish("converged")
    if opts.max_iters == 0:
        return finish("max_iters")

    def trial(alpha):
        un = np.clip(u - alpha * gu, lo, hi)
        tn = float(np.clip(tau - alpha * s * gt, tlo, thi)) if opts.optimize_tau else tau
        return un, tn

    # iteration 0: Armijo backtracking along the projected steepest-descent path
    alpha = min(max(opts.initial_step / gnorm, opts.step_min), opts.step_max)
    rejects = 0
    while True:
        un, tn = trial(alpha)
        try:
            Gn = grad(u0.with_values(un), tn)
            ok = np.isfinite(Gn.cost)
        except SolverFailure:
            ok = False
        if ok:
            decrease = dot_u(gu, un - u) + gt * (tn - tau)
            if Gn.cost <= G.cost + opts.armijo_c * decrease:
                break
        rejects += 1
        alpha *= opts.backtrack
        if rejects >= opts.max_rejects or alpha < opts.step_min:
            return finish("stagnation")

    k = 0
    while True:
        k += 1
        su, st_ = un - u, (tn - tau) / c
        yu, yt = Gn.grad_u.values - gu, (Gn.grad_tau - gt) * c
        u, tau, G = un, tn, Gn
        gu, gt = G.grad_u.values, G.grad_tau
        record(k, G.cost, gu, gt, tau, alpha)
        new_norm = full_norm(gu, gt)
        if opts.gtol > 0 and pg_norm(u, tau, gu, gt) <= opts.gtol * pg0:
            return finish("converged")
        if gnorm > 0 and abs(new_norm - gnorm) / gnorm < opts.stop_rel_gradient_change:
            return finish("converged")
        if new_norm == 0.0:
            return finish("converged")
        gnorm = new_norm
        if k >= opts.max_iters:
            return finish("max_iters")
        ss = dot_u(su, su) + st_ ** 2
        sy = dot_u(su, yu) + st_ * yt
        yy = dot_u(yu, yu) + yt ** 2
        use_bb1 = opts.bb_variant == "bb1" or (opts.bb_variant == "alternate" and k % 2 == 1)
        if sy > 0:
            alpha = ss / sy if use_bb1 else sy / yy
        alpha = float(np.clip(alpha, opts.step_min, opts.step_max))
        rejects = 0
        while True:
            un, tn = trial(alpha)
            try:
                Gn = grad(u0.with_values(un), tn)
                ok = np.isfinite(Gn.cost)
            except SolverFailure:
                ok = False
            if ok and opts.nonmonotone_window > 0:
                ref = max(r.J for r in history[-opts.nonmonotone_window:])
                decrease = dot_u(gu, un - u) + gt * (tn - tau)
                ok = Gn.cost <= ref + opts.armijo_c * decrease
            if ok:
                break
            rejects += 1
            alpha *= opts.backtrack
            if rejects >= opts.max_rejects or alpha < opts.step_min:
                return finish("stagnation")
