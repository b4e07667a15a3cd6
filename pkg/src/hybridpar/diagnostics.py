"""Numerical checks of optimality: pointwise conditions, critical cones,
second-order probes, Hamiltonian constancy and finite-difference audits."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from ._scheme import Discretization, StepData
from .controls import ControlField, control_bounds, control_weights
from .errors import DimensionMismatch
from .reduced import (HessianAction, control_derivative_h, eval_cost, eval_gradient, inner,
                      interval_hamiltonian)
from .timemap import TimeMap

__all__ = [
    "OptimalityReport",
    "check_pontryagin",
    "project_critical",
    "HamiltonianTrace",
    "hamiltonian_trace",
    "ProbeReport",
    "second_order_probe",
    "AuditReport",
    "fd_audit",
    "FD_TOLERANCES",
]

FD_TOLERANCES = {"matched": 1e-6, "paper": 5e-2}
ACTIVITY_TOL = 1e-9


def _to_jsonable(obj):
    if isinstance(obj, dict):
        return {k: _to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _to_jsonable(obj.tolist())
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def dump_json(doc, path, header=None):
    """Write a report dictionary; ``header`` is stored under ``"header"``."""
    doc = dict(doc)
    if header is not None:
        doc = {"header": header, **doc}
    with open(path, "w") as fh:
        json.dump(_to_jsonable(doc), fh, indent=2, sort_keys=False)
        fh.write("\n")


# ---------------------------------------------------------------------------
# pointwise first-order conditions
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class OptimalityReport:
    """Pointwise first-order conditions for the minimization problem.

    At a lower-active point ``D_u h >= 0`` is required, at an upper-active point
    ``D_u h <= 0``, elsewhere ``D_u h = 0``.
    """

    duh: np.ndarray
    lower_active: np.ndarray
    upper_active: np.ndarray
    delta: float
    in_A_delta: np.ndarray
    inactive_max: float
    lower_violation: float
    upper_violation: float
    grad_tau: float
    scale: float
    term_scale: float

    @property
    def inactive(self):
        return ~(self.lower_active | self.upper_active)

    @property
    def active_fraction(self):
        return float(np.mean(self.lower_active | self.upper_active))

    @property
    def A_delta_fraction(self):
        return float(np.mean(self.in_A_delta))

    def summary(self):
        return {
            "delta": self.delta,
            "inactive_max_abs_duh": self.inactive_max,
            "lower_bound_violation": self.lower_violation,
            "upper_bound_violation": self.upper_violation,
            "grad_tau": self.grad_tau,
            "max_abs_duh": self.scale,
            "max_abs_term": self.term_scale,
            "active_fraction": self.active_fraction,
            "lower_active_fraction": float(np.mean(self.lower_active)),
            "upper_active_fraction": float(np.mean(self.upper_active)),
            "A_delta_fraction": self.A_delta_fraction,
        }

    def to_json(self, path, header=None):
        dump_json(self.summary(), path, header)


def _activity(problem, mesh, control):
    lo, hi = control_bounds(problem, mesh, control.grid)
    gap = hi - lo
    tol = ACTIVITY_TOL * np.where((gap > 0) & np.isfinite(gap), gap, 1.0)
    u = control.values
    lower = u <= lo + tol
    upper = u >= hi - tol
    return lower, upper


def check_pontryagin(problem, mesh, state, costate, control: ControlField, tau: float,
                     delta: float = 0.0, grad_tau: float | None = None) -> OptimalityReport:
    """Classify every (interval, node) against the bounds and evaluate the
    pointwise sign conditions on ``D_u h``."""
    if state.values.shape[0] != control.grid.n_steps + 1:
        raise DimensionMismatch("state and control live on different grids")
    if costate.values.shape != state.values.shape:
        raise DimensionMismatch("state and costate shapes differ")
    disc = Discretization(problem, mesh)
    duh = control_derivative_h(problem, mesh, state, costate, control, tau, disc)
    lower, upper = _activity(problem, mesh, control)
    inactive = ~(lower | upper)
    inactive_max = float(np.max(np.abs(duh[inactive]), initial=0.0))
    lower_v = float(np.max(np.maximum(-duh[lower & ~upper], 0.0), initial=0.0))
    upper_v = float(np.max(np.maximum(duh[upper & ~lower], 0.0), initial=0.0))
    # size of the two terms that cancel at an interior optimum
    lu = _ell_u(problem, mesh, state, control, tau)
    term_scale = float(max(np.max(np.abs(lu)), np.max(np.abs(duh - lu))))
    if grad_tau is None:
        from .reduced import gradient_from_costate
        _, grad_tau = gradient_from_costate(problem, mesh, state, costate, control, tau, disc)
    return OptimalityReport(duh, lower, upper, float(delta), np.abs(duh) > delta, inactive_max,
                            lower_v, upper_v, float(grad_tau), float(np.max(np.abs(duh))),
                            term_scale)


def _ell_u(problem, mesh, state, control, tau):
    grid = control.grid
    st = StepData.build(grid, TimeMap(tau, problem.T))
    Y, u = state.values, control.values
    out = np.empty(u.shape)
    for n in range(grid.n_steps):
        ybar = 0.5 * (Y[n] + Y[n + 1])
        out[n] = problem.ell_u(st.phase[n], st.tm[n], mesh.nodes, ybar, u[n])
    return out


def project_critical(v, report: OptimalityReport):
    """Project a direction onto the discrete critical cone ``C_delta``.

    Zero on ``A_delta``, nonnegative at lower-active and nonpositive at
    upper-active points; zero where both bounds are active.
    """
    v = np.array(v.values if isinstance(v, ControlField) else v, dtype=float)
    v[report.in_A_delta] = 0.0
    both = report.lower_active & report.upper_active
    v[both] = 0.0
    lo = report.lower_active & ~both
    hi = report.upper_active & ~both
    v[lo] = np.maximum(v[lo], 0.0)
    v[hi] = np.minimum(v[hi], 0.0)
    return v


# ---------------------------------------------------------------------------
# Hamiltonian constancy
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class HamiltonianTrace:
    """Integrated Hamiltonian per interval and the compensating integral ``xi``.

    ``times`` are physical interval midpoints; ``xi`` is evaluated there and
    ``xi_nodes`` at the pseudo-time nodes (``xi_nodes[0] = 0``).
    ``H_minus`` and ``H_plus`` are the values on the intervals adjacent to the
    switch.
    """

    times: np.ndarray
    s: np.ndarray
    H: np.ndarray
    xi: np.ndarray
    xi_nodes: np.ndarray
    H_minus: float
    H_plus: float
    ds: float

    @property
    def compensated(self):
        return self.H - self.xi

    @property
    def mean(self):
        return float(np.mean(self.compensated))

    @property
    def max_deviation(self):
        c = self.compensated
        return float(np.max(np.abs(c - np.mean(c))))

    @property
    def scale(self):
        return float(np.max(np.abs(self.H)))

    def constancy_ratio(self):
        """Deviation in units of ``ds * max|H|``."""
        sc = self.ds * self.scale
        return self.max_deviation / sc if sc > 0 else 0.0

    def summary(self):
        return {"mean": self.mean, "max_deviation": self.max_deviation, "scale": self.scale,
                "ds": self.ds, "constancy_ratio": self.constancy_ratio(),
                "H_minus": self.H_minus, "H_plus": self.H_plus}

    def to_csv(self, path, header_lines=()):
        with open(path, "w", newline="") as fh:
            for line in header_lines:
                fh.write(f"# {line}\n")
            w = csv.writer(fh)
            w.writerow(["s", "t", "H", "xi", "H_minus_xi"])
            for row in zip(self.s, self.times, self.H, self.xi, self.compensated):
                w.writerow([repr(float(v)) for v in row])


def hamiltonian_trace(problem, mesh, state, costate, control, tau,
                      autonomous: bool = False) -> HamiltonianTrace:
    """Hamiltonian per interval and ``xi``, the time integral of ``pi_dot * D_t H``.

    ``autonomous=True`` declares the data time-independent and sets ``xi = 0``.
    """
    disc = Discretization(problem, mesh)
    grid = control.grid
    st = StepData.build(grid, TimeMap(tau, problem.T))
    H, DtH = interval_hamiltonian(problem, mesh, state, costate, control, tau, disc)
    if autonomous:
        DtH = np.zeros_like(DtH)
    inc = grid.ds * st.pi_dot * DtH
    xi_nodes = np.concatenate([[0.0], np.cumsum(inc)])
    xi = xi_nodes[:-1] + 0.5 * inc
    h = grid.switch_index
    return HamiltonianTrace(st.tm, grid.midpoints, H, xi, xi_nodes, float(H[h - 1]), float(H[h]),
                            grid.ds)


# ---------------------------------------------------------------------------
# second-order probes
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class ProbeReport:
    seed: int
    delta: float
    quadratic: np.ndarray
    norms2: np.ndarray
    thetas: np.ndarray

    @property
    def ratios(self):
        return np.where(self.norms2 > 0, self.quadratic / np.where(self.norms2 > 0, self.norms2, 1), 0.0)

    def summary(self):
        r = self.ratios
        return {"seed": self.seed, "delta": self.delta, "n_dirs": int(r.size),
                "min_quadratic": float(np.min(self.quadratic)),
                "min_ratio": float(np.min(r)), "max_ratio": float(np.max(r)),
                "quadratic": self.quadratic.tolist(), "ratios": r.tolist()}

    def to_json(self, path, header=None):
        dump_json(self.summary(), path, header)


def second_order_probe(problem, mesh, u: ControlField, tau: float, delta: float = 0.0,
                       n_dirs: int = 8, seed: int = 0, scheme: str = "CN",
                       directions=None) -> ProbeReport:
    """Sample the Hessian quadratic form on random critical directions.

    Directions ``(v, theta)`` have standard normal entries, with ``v``
    projected onto the discrete critical cone.  ``directions`` may supply
    explicit ``(v_values, theta)`` pairs instead.
    """
    problem._need2()
    G = eval_gradient(problem, mesh, u, tau, mode="matched", scheme=scheme)
    rep = check_pontryagin(problem, mesh, G.state, G.costate, u, tau, delta, G.grad_tau)
    if directions is None:
        rng = np.random.default_rng(seed)
        directions = []
        for _ in range(n_dirs):
            v = project_critical(rng.standard_normal(u.values.shape), rep)
            directions.append((v, float(rng.standard_normal())))
    W = control_weights(mesh, u.grid)
    q, n2, th = [], [], []
    for v, theta in directions:
        act = HessianAction(problem, mesh, u, tau, u.with_values(v), theta, scheme)
        q.append(act.quadratic)
        n2.append(float(np.sum(W * v * v)) + theta ** 2)
        th.append(theta)
    return ProbeReport(int(seed), float(delta), np.array(q), np.array(n2), np.array(th))


# ---------------------------------------------------------------------------
# finite-difference audits
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class AuditReport:
    mode: str
    eps: float
    tolerance: float
    fd: np.ndarray
    analytic: np.ndarray
    sweep_eps: np.ndarray = field(default_factory=lambda: np.zeros(0))
    sweep_errors: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def rel_errors(self):
        return np.abs(self.fd - self.analytic) / np.maximum(np.abs(self.fd), 1e-300)

    @property
    def passed(self):
        return bool(np.all(self.rel_errors <= self.tolerance))

    def summary(self):
        d = {"mode": self.mode, "eps": self.eps, "tolerance": self.tolerance,
             "passed": self.passed, "max_rel_error": float(np.max(self.rel_errors)),
             "entries": [{"fd": float(f), "analytic": float(a), "rel_error": float(r),
                          "pass": bool(r <= self.tolerance)}
                         for f, a, r in zip(self.fd, self.analytic, self.rel_errors)]}
        if self.sweep_eps.size:
            d["eps_sweep"] = [{"eps": float(e), "rel_error": float(r)}
                              for e, r in zip(self.sweep_eps, self.sweep_errors)]
            d["eps_sweep_min"] = float(np.min(self.sweep_errors))
        return d

    def to_json(self, path, header=None):
        dump_json(self.summary(), path, header)


def fd_audit(problem, mesh, u: ControlField, tau: float, mode: str = "matched", n_dirs: int = 20,
             seed: int = 0, eps: float = 1e-5, scheme: str = "CN", adjoint_scheme: str = "IE",
             eps_sweep=()) -> AuditReport:
    """Compare central differences of the cost with gradient pairings.

    Directions have standard normal entries in ``u`` and ``tau``.  The
    optional ``eps_sweep`` is run on the first direction.
    """
    G = eval_gradient(problem, mesh, u, tau, mode=mode, scheme=scheme, adjoint_scheme=adjoint_scheme)
    rng = np.random.default_rng(seed)

    def cost(uu, tt):
        return eval_cost(problem, mesh, uu, tt, scheme)

    fds, ans, dirs = [], [], []
    for _ in range(n_dirs):
        du = u.with_values(rng.standard_normal(u.values.shape))
        dt = float(rng.standard_normal())
        dirs.append((du, dt))
        fd = (cost(u + eps * du, tau + eps * dt) - cost(u - eps * du, tau - eps * dt)) / (2 * eps)
        fds.append(fd)
        ans.append(inner(mesh, G.grad_u, du) + G.grad_tau * dt)
    sweep_e, sweep_r = [], []
    if len(eps_sweep) and dirs:
        du, dt = dirs[0]
        an = ans[0]
        for e in eps_sweep:
            fd = (cost(u + e * du, tau + e * dt) - cost(u - e * du, tau - e * dt)) / (2 * e)
            sweep_e.append(e)
            sweep_r.append(abs(fd - an) / max(abs(fd), 1e-300))
    return AuditReport(mode, eps, FD_TOLERANCES.get(mode, 5e-2), np.array(fds), np.array(ans),
                       np.array(sweep_e), np.array(sweep_r))
