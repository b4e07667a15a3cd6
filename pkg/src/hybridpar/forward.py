"""Time integration of the state, its linearization and the original-time system."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from ._scheme import Discretization, StepData
from .controls import ControlField
from .errors import DimensionMismatch, NewtonDiverged, NonFiniteState
from .timemap import PseudoTimeGrid, TimeMap

__all__ = [
    "StateTrajectory",
    "NewtonOptions",
    "solve_state",
    "solve_tangent",
    "solve_original_time",
    "tangent_march",
    "write_trajectory_csv",
    "SCHEMES",
]

SCHEMES = {"CN": 0.5, "IE": 1.0}
_ROUNDOFF = 64 * np.finfo(float).eps


@dataclass(frozen=True)
class NewtonOptions:
    """Per-step Newton settings.

    A step has converged when the scaled residual is below ``tol`` or below
    roundoff relative to the size of its terms.  Plain Newton is tried first.  If it fails and ``fallback_iter`` > 0, the
    step is retried from the old state with residual-norm backtracking.
    """

    tol: float = 1e-11
    max_iter: int = 25
    fallback_iter: int = 200


@dataclass(frozen=True, eq=False)
class StateTrajectory:
    """``values[time_node, species, space_node]``.

    ``times`` holds pseudo-time nodes for reparameterized solves and physical
    times for original-time solves.
    """

    times: np.ndarray
    values: np.ndarray
    tau: float
    scheme: str
    reparameterized: bool = True
    newton_iterations: np.ndarray = field(default=None, repr=False)

    @property
    def n_steps(self):
        return self.values.shape[0] - 1

    @property
    def switch_index(self):
        return self.n_steps // 2

    def at_switch(self):
        return self.values[self.switch_index]

    def final(self):
        return self.values[-1]


def _theta(scheme):
    try:
        return SCHEMES[scheme.upper()]
    except (KeyError, AttributeError):
        raise ValueError(f"unknown scheme {scheme!r}; use 'CN' or 'IE'") from None


def _march(disc, steps_phase, dt, t0, t1, u, y0, theta, newton):
    """Generic theta-scheme march.

    ``dt[n]`` is the effective step (``ds * pi_dot`` or the physical step).
    """
    n_steps = dt.size
    Y = np.empty((n_steps + 1,) + y0.shape)
    Y[0] = y0
    iters = np.zeros(n_steps, dtype=int)
    sl = disc.sl
    for n in range(n_steps):
        ph = steps_phase[n]
        un = u[n]
        yold = Y[n]
        c = dt[n]
        const = -disc.mass(yold[:, sl])
        if theta < 1.0:
            const += c * (1.0 - theta) * disc.N(ph, t0[n], yold, un)
        def residual(y):
            A = disc.mass(y[:, sl])
            B = c * theta * disc.N(ph, t1[n], y, un)
            R = A + B + const
            # roundoff floor relative to the size of the summed terms
            size = np.max((np.abs(A) + np.abs(B) + np.abs(const)) / disc.lumped)
            return R, np.max(np.abs(R) / disc.lumped), _ROUNDOFF * size

        def jac_step(y, R):
            J = disc.Mb + c * theta * disc.NJ(ph, t1[n], y, un)
            return J.solve(R.T).T

        y = yold.copy()
        failed = None
        for it in range(newton.max_iter + 1):
            R, res, floor = residual(y)
            if not np.isfinite(res):
                failed = res
                break
            if res <= max(newton.tol, floor):
                break
            if it == newton.max_iter:
                failed = res
                break
            y[:, sl] -= jac_step(y, R)
        if failed is not None:
            if newton.fallback_iter <= 0:
                if not np.isfinite(failed):
                    raise NonFiniteState(n)
                raise NewtonDiverged(n, failed)
            y, it = _damped_newton(yold.copy(), residual, jac_step, sl, newton, n)
        iters[n] = it
        Y[n + 1] = y
    return Y, iters


def _damped_newton(y, residual, jac_step, sl, newton, n):
    R, res, floor = residual(y)
    for it in range(newton.fallback_iter):
        if res <= max(newton.tol, floor):
            return y, it
        d = jac_step(y, R)
        lam = 1.0
        while lam > 1e-10:
            yt = y.copy()
            yt[:, sl] -= lam * d
            Rt, rt, ft = residual(yt)
            if np.isfinite(rt) and rt < (1.0 - 1e-4 * lam) * res:
                break
            lam *= 0.5
        else:
            raise NewtonDiverged(n, res)
        y, R, res, floor = yt, Rt, rt, ft
    if res <= max(newton.tol, floor):
        return y, newton.fallback_iter
    raise NewtonDiverged(n, res)


def solve_state(problem, mesh, control: ControlField, tau: float, scheme: str = "CN",
                newton: NewtonOptions = NewtonOptions()) -> StateTrajectory:
    """Solve the reparameterized state equation on ``control.grid``."""
    grid = control.grid
    _check_control(problem, mesh, control)
    theta = _theta(scheme)
    tmap = TimeMap(tau, problem.T)
    st = StepData.build(grid, tmap)
    disc = Discretization(problem, mesh)
    y0 = np.asarray(problem.initial_state(mesh.nodes), dtype=float).copy()
    y0[:, mesh.dirichlet_mask] = 0.0
    Y, iters = _march(disc, st.phase, grid.ds * st.pi_dot, st.t0, st.t1, control.values,
                      y0, theta, newton)
    return StateTrajectory(grid.nodes, Y, float(tau), scheme.upper(), True, iters)


def _check_control(problem, mesh, control):
    if control.values.shape[1:] != (problem.n_controls, mesh.n_nodes):
        raise DimensionMismatch(
            f"control layout {control.values.shape[1:]} does not match "
            f"({problem.n_controls}, {mesh.n_nodes})")


def tangent_march(disc, st, grid, state, u, theta, source):
    """March the discrete linearization of the theta-scheme.

    ``source(n)`` returns the interior right-hand side (dual vector) added at
    step ``n``.  Returns the full-length tangent trajectory.
    """
    sl = disc.sl
    N = grid.n_steps
    Z = np.zeros_like(state.values)
    ds = grid.ds
    for n in range(N):
        ph = st.phase[n]
        c = ds * st.pi_dot[n]
        y0, y1 = state.values[n], state.values[n + 1]
        rhs = source(n).copy()
        rhs += disc.mass(Z[n][:, sl])
        if theta < 1.0:
            B = disc.NJ(ph, st.t0[n], y0, u[n])
            rhs -= c * (1.0 - theta) * B.matvec(Z[n][:, sl].T).T
        A = disc.Mb + c * theta * disc.NJ(ph, st.t1[n], y1, u[n])
        Z[n + 1][:, sl] = A.solve(rhs.T).T
    return Z


def _control_tau_source(disc, st, grid, state, u, du, dtau, theta):
    """Right-hand side of the tangent equation for a perturbation ``(du, dtau)``."""
    sl = disc.sl
    ds = grid.ds

    def source(n):
        ph = st.phase[n]
        y0, y1 = state.values[n], state.values[n + 1]
        out = np.zeros((disc.m, disc.ni))
        if du is not None:
            g = theta * np.einsum("icn,cn->in", disc.Gu(ph, st.t1[n], y1, u[n]), du[n][:, sl])
            if theta < 1.0:
                g += (1.0 - theta) * np.einsum("icn,cn->in", disc.Gu(ph, st.t0[n], y0, u[n]),
                                               du[n][:, sl])
            out += ds * st.pi_dot[n] * disc.mass(g)
        if dtau:
            dR = ds * st.pi_dot_tau[n] * theta * disc.N(ph, st.t1[n], y1, u[n])
            gt = theta * disc.Gt(ph, st.t1[n], y1, u[n]) * st.pt1[n]
            if theta < 1.0:
                dR += ds * st.pi_dot_tau[n] * (1.0 - theta) * disc.N(ph, st.t0[n], y0, u[n])
                gt += (1.0 - theta) * disc.Gt(ph, st.t0[n], y0, u[n]) * st.pt0[n]
            dR -= ds * st.pi_dot[n] * disc.mass(gt)
            out -= dtau * dR
        return out

    return source


def solve_tangent(problem, mesh, base: StateTrajectory, control: ControlField, tau: float,
                  delta_u: ControlField | None, delta_tau: float = 0.0) -> StateTrajectory:
    """Derivative of the discrete state in direction ``(delta_u, delta_tau)``.

    Linearizes exactly the scheme used for ``base`` so that it matches finite
    differences of :func:`solve_state`.
    """
    grid = control.grid
    if base.values.shape[0] != grid.n_steps + 1:
        raise DimensionMismatch("base trajectory and control live on different grids")
    if delta_u is not None and delta_u.values.shape != control.values.shape:
        raise DimensionMismatch("delta_u does not match the control layout")
    theta = _theta(base.scheme)
    st = StepData.build(grid, TimeMap(tau, problem.T))
    disc = Discretization(problem, mesh)
    du = None if delta_u is None else delta_u.values
    src = _control_tau_source(disc, st, grid, base, control.values, du, delta_tau, theta)
    Z = tangent_march(disc, st, grid, base, control.values, theta, src)
    return StateTrajectory(base.times, Z, float(tau), base.scheme, True)


def _physical_grid(T, n_steps, tau):
    """Uniform nodes on ``[0, T]`` with ``tau`` added as a node when it is not one.

    Returns ``(t, k, src)``: the nodes, the index of the switch node and, per
    interval, the uniform interval it came from.
    """
    t = np.linspace(0.0, T, n_steps + 1)
    k = int(np.searchsorted(t, tau))
    if abs(t[k] - tau) > 1e-12 * T:
        t = np.insert(t, k, tau)
    src = np.minimum(np.floor(0.5 * (t[:-1] + t[1:]) * n_steps / T).astype(int), n_steps - 1)
    return t, k, src


def solve_original_time(problem, mesh, v: np.ndarray, tau: float, n_steps: int,
                        scheme: str = "CN", newton: NewtonOptions = NewtonOptions()):
    """Solve the hybrid system in physical time on a uniform grid of ``(0, T)``.

    ``v[interval, control, node]`` holds piecewise-constant controls.  When
    ``tau`` is not a grid node the interval containing it is split, so the
    dynamics switch exactly at ``tau``.

    Returns ``(trajectory, switch_index)``.
    """
    theta = _theta(scheme)
    T = problem.T
    if not 0.0 < tau < T:
        raise ValueError(f"tau={tau} outside (0, {T})")
    v = np.asarray(v, dtype=float)
    if v.shape != (n_steps, problem.n_controls, mesh.n_nodes):
        raise DimensionMismatch(f"control shape {v.shape} does not match the physical grid")
    t, k, src = _physical_grid(T, n_steps, tau)
    phase = np.where(np.arange(t.size - 1) < k, 1, 2)
    disc = Discretization(problem, mesh)
    y0 = np.asarray(problem.initial_state(mesh.nodes), dtype=float).copy()
    y0[:, mesh.dirichlet_mask] = 0.0
    Y, iters = _march(disc, phase, np.diff(t), t[:-1], t[1:], v[src], y0, theta, newton)
    return StateTrajectory(t, Y, float(tau), scheme.upper(), False, iters), k


def original_time_cost(problem, mesh, traj: StateTrajectory, v: np.ndarray, switch_index: int):
    """Cost of an original-time trajectory (midpoint rule in time).

    ``v`` is given on the uniform grid passed to :func:`solve_original_time`.
    """
    disc = Discretization(problem, mesh)
    t = traj.times
    Y = traj.values
    n_uniform = np.asarray(v).shape[0]
    src = np.minimum(np.floor(0.5 * (t[:-1] + t[1:]) * n_uniform / problem.T).astype(int),
                     n_uniform - 1)
    J = 0.0
    for n in range(t.size - 1):
        ph = 1 if n < switch_index else 2
        ybar = 0.5 * (Y[n] + Y[n + 1])
        J += (t[n + 1] - t[n]) * disc.ell(ph, 0.5 * (t[n] + t[n + 1]), ybar, v[src[n]])
    J += disc.phi1(traj.tau, Y[switch_index]) + disc.phi2(Y[-1])
    return J


def write_trajectory_csv(path, traj: StateTrajectory, mesh, header_lines=(), every: int = 1):
    """Write ``(s_or_t, x, species, value)`` rows, one per node and species.

    Every ``every``-th time node is written; the final node always is.
    """
    label = "s" if traj.reparameterized else "t"
    with open(path, "w", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        w = csv.writer(fh)
        w.writerow([label, "x", "species", "value"])
        rows = list(range(0, traj.values.shape[0], every))
        if rows[-1] != traj.values.shape[0] - 1:
            rows.append(traj.values.shape[0] - 1)
        for k in rows:
            for i, row in enumerate(traj.values[k]):
                for x, val in zip(mesh.nodes, row):
                    w.writerow([repr(float(traj.times[k])), repr(float(x)), i + 1, repr(float(val))])
