"""Backward costate solves, the switch jump, and the dual operator K*.

Two discretizations are offered:

``paper``
    A theta-scheme (implicit Euler by default) for the continuous costate
    equation on the pseudo-time grid, with nodal terminal value and jump.
``matched``
    The exact transpose of the discrete tangent solver.  Its step multipliers
    give machine-precision gradients and duality.

Terminal values and the jump are represented by lumped nodal vectors: the
dual gradient of a spatially integrated cost divided by the nodal quadrature
weights.  For costs integrated over the whole domain this is the nodal vector
of the pointwise derivative.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from ._scheme import Discretization, StepData
from .errors import DimensionMismatch, NonFiniteState
from .forward import SCHEMES, StateTrajectory, tangent_march
from .timemap import TimeMap

__all__ = [
    "CostateTrajectory",
    "solve_costate",
    "apply_k",
    "apply_kstar",
    "duality_pairings",
    "write_costate_csv",
    "MODES",
]

MODES = ("paper", "matched")


@dataclass(frozen=True, eq=False)
class CostateTrajectory:
    """Costate on the pseudo-time grid.

    ``values[k]`` are nodal values at time node ``k``; at the switch node the
    right limit is stored and both one-sided limits are kept in ``p_minus`` and
    ``p_plus``.  ``interval_values[n]`` is the costate used on interval ``n``
    (the one-sided limits are used next to the switch).  In matched mode
    ``multipliers[n]`` is the Lagrange multiplier of step ``n``.
    """

    times: np.ndarray
    values: np.ndarray
    p_minus: np.ndarray
    p_plus: np.ndarray
    interval_values: np.ndarray
    mode: str
    scheme: str
    multipliers: np.ndarray | None = None

    @property
    def jump(self):
        return self.p_plus - self.p_minus

    @property
    def switch_index(self):
        return (self.values.shape[0] - 1) // 2


def _check_state(state, control):
    if state.values.shape[0] != control.grid.n_steps + 1:
        raise DimensionMismatch("state and control live on different grids")
    if not state.reparameterized:
        raise DimensionMismatch("costates are defined for reparameterized trajectories")


def _running_duals(disc, st, state, u):
    """Dual gradients of the integrated running cost per interval, at the midpoint state."""
    Y = state.values
    out = np.empty((st.phase.size, disc.m, disc.ni))
    for n in range(st.phase.size):
        ybar = 0.5 * (Y[n] + Y[n + 1])
        out[n] = disc.ell_y(st.phase[n], st.tm[n], ybar, u[n])
    return out


def _matched_backward(disc, st, grid, state, u, theta, rhs):
    """Solve the transposed tangent recursion ``A_{k-1}^T lam^k = rhs_k - B_k^T lam^{k+1}``.

    ``rhs(k)`` gives the interior dual load at time node ``k`` (1..N).
    Returns ``lam`` with ``lam[n]`` the multiplier of step ``n``.
    """
    N = grid.n_steps
    ds = grid.ds
    Y = state.values
    lam = np.zeros((N, disc.m, disc.ni))
    nxt = None
    for k in range(N, 0, -1):
        b = rhs(k).copy()
        if nxt is not None:
            # B_k^T lam^{k+1}; B_k = -M + c (1 - theta) NJ(t0_k, y^k)
            b += disc.mass(nxt)
            if theta < 1.0:
                Bj = disc.NJ(st.phase[k], st.t0[k], Y[k], u[k])
                b -= ds * st.pi_dot[k] * (1.0 - theta) * Bj.T.matvec(nxt.T).T
        n = k - 1
        A = disc.Mb + ds * st.pi_dot[n] * theta * disc.NJ(st.phase[n], st.t1[n], Y[k], u[n])
        lam[n] = A.T.solve(b.T).T
        if not np.all(np.isfinite(lam[n])):
            raise NonFiniteState(k)
        nxt = lam[n]
    return lam


def _lumped(disc, dual):
    return dual / disc.lumped


def solve_costate(problem, mesh, state: StateTrajectory, control, tau: float,
                  mode: str = "paper", scheme: str = "IE") -> CostateTrajectory:
    """Costate of the reduced cost at ``(control, tau)``.

    ``scheme`` selects the backward scheme in paper mode; matched mode always
    transposes the scheme of ``state``.
    """
    _check_state(state, control)
    if mode not in MODES:
        raise ValueError(f"unknown adjoint mode {mode!r}; use one of {MODES}")
    grid = control.grid
    st = StepData.build(grid, TimeMap(tau, problem.T))
    disc = Discretization(problem, mesh)
    u = control.values
    Y = state.values
    N, half = grid.n_steps, grid.switch_index
    dphi1 = disc.phi1_y(tau, Y[half])
    dphi2 = disc.phi2_y(Y[N])
    if mode == "matched":
        theta = SCHEMES[state.scheme]
        dl = _running_duals(disc, st, state, u)

        def rhs(k):
            c = 0.5 * grid.ds * st.pi_dot[k - 1] * dl[k - 1]
            if k < N:
                c = c + 0.5 * grid.ds * st.pi_dot[k] * dl[k]
            if k == half:
                c = c + dphi1
            if k == N:
                c = c + dphi2
            return c

        lam = _matched_backward(disc, st, grid, state, u, theta, rhs)
        nodes = np.empty((N + 1, disc.m, disc.ni))
        nodes[0] = lam[0]
        for k in range(1, N):
            nodes[k] = lam[k] if theta == 1.0 else 0.5 * (lam[k - 1] + lam[k])
        nodes[N] = _lumped(disc, dphi2)
        p_plus = lam[half]
        nodes[half] = p_plus
        p_minus = p_plus + _lumped(disc, dphi1)
        return CostateTrajectory(grid.nodes, disc.full(nodes), disc.full(p_minus),
                                 disc.full(p_plus), disc.full(lam), "matched",
                                 state.scheme, disc.full(lam))

    theta = SCHEMES[scheme.upper()] if isinstance(scheme, str) and scheme.upper() in SCHEMES else None
    if theta is None:
        raise ValueError(f"unknown scheme {scheme!r}; use 'CN' or 'IE'")
    return _paper_costate(problem, disc, st, grid, state, u, tau, theta, scheme.upper(),
                          dphi1, dphi2)


def _paper_costate(problem, disc, st, grid, state, u, tau, theta, scheme, dphi1, dphi2):
    """Theta-scheme for ``-dp/ds = -pi_dot [nu K p - M DG^T p] + pi_dot dl`` backward in s."""
    N, half = grid.n_steps, grid.switch_index
    ds = grid.ds
    Y = state.values
    nodes = np.empty((N + 1, disc.m, disc.ni))
    nodes[N] = _lumped(disc, dphi2)
    nxt = nodes[N]
    p_minus = p_plus = None

    def op(n, t, y):
        # nu K - M DG^T at (t, y) with the data of interval n
        return disc.Kb - disc.Gy(st.phase[n], t, y, u[n]).T.left_tri(disc.M)

    for k in range(N - 1, -1, -1):
        ph = st.phase[k]
        c = ds * st.pi_dot[k]
        rhs = disc.mass(nxt) + c * theta * disc.ell_y(ph, st.t0[k], Y[k], u[k])
        if theta < 1.0:
            rhs -= c * (1.0 - theta) * op(k, st.t1[k], Y[k + 1]).matvec(nxt.T).T
            rhs += c * (1.0 - theta) * disc.ell_y(ph, st.t1[k], Y[k + 1], u[k])
        A = disc.Mb + c * theta * op(k, st.t0[k], Y[k])
        nodes[k] = A.solve(rhs.T).T
        if not np.all(np.isfinite(nodes[k])):
            raise NonFiniteState(k)
        nxt = nodes[k]
        if k == half:
            p_plus = nodes[k]
            p_minus = p_plus + _lumped(disc, dphi1)
            nxt = p_minus
    right = nodes[1:].copy()
    right[half - 1] = p_minus
    interval = 0.5 * (nodes[:-1] + right)
    return CostateTrajectory(grid.nodes, disc.full(nodes), disc.full(p_minus), disc.full(p_plus),
                             disc.full(interval), "paper", scheme)


def _as_interior(disc, a, name):
    a = np.asarray(a, dtype=float)
    if a.shape == (disc.m, disc.mesh.n_nodes):
        return a[:, disc.sl]
    if a.shape == (disc.m, disc.ni):
        return a
    raise DimensionMismatch(f"{name} has shape {a.shape}")


def _as_interval_field(disc, xi, n_steps, name):
    xi = np.asarray(xi, dtype=float)
    if xi.shape == (n_steps, disc.m, disc.mesh.n_nodes):
        return xi[:, :, disc.sl]
    if xi.shape == (n_steps, disc.m, disc.ni):
        return xi
    raise DimensionMismatch(f"{name} has shape {xi.shape}")


def apply_k(problem, mesh, state: StateTrajectory, control, tau: float, xi) -> StateTrajectory:
    """Linearized state driven by the space-time source ``xi[interval, species, node]``.

    Solves the discrete tangent equation with right-hand side ``ds M xi_n``
    and zero initial value.
    """
    _check_state(state, control)
    grid = control.grid
    disc = Discretization(problem, mesh)
    st = StepData.build(grid, TimeMap(tau, problem.T))
    src = _as_interval_field(disc, xi, grid.n_steps, "xi")
    theta = SCHEMES[state.scheme]
    Z = tangent_march(disc, st, grid, state, control.values, theta,
                      lambda n: grid.ds * disc.mass(src[n]))
    return StateTrajectory(state.times, Z, float(tau), state.scheme, True)


def apply_kstar(problem, mesh, state: StateTrajectory, control, tau: float, a, b, xi) -> CostateTrajectory:
    """Matched discrete adjoint of :func:`apply_k`.

    ``a`` acts at the switch, ``b`` at the final time and ``xi[interval]`` is
    the distributed source.  ``multipliers[n]`` of the result satisfies

        <(a, b, xi), K eta> = sum_n ds q_n^T M eta_n

    where the left pairing is ``a^T M z(1) + b^T M z(2) + sum_n ds xi_n^T M zbar_n``.
    """
    _check_state(state, control)
    grid = control.grid
    disc = Discretization(problem, mesh)
    st = StepData.build(grid, TimeMap(tau, problem.T))
    N, half = grid.n_steps, grid.switch_index
    a = _as_interior(disc, a, "a")
    b = _as_interior(disc, b, "b")
    w = _as_interval_field(disc, xi, N, "xi")
    Ma, Mb_, Mw = disc.mass(a), disc.mass(b), np.array([disc.mass(x) for x in w])
    theta = SCHEMES[state.scheme]

    def rhs(k):
        c = 0.5 * grid.ds * Mw[k - 1]
        if k < N:
            c = c + 0.5 * grid.ds * Mw[k]
        if k == half:
            c = c + Ma
        if k == N:
            c = c + Mb_
        return c

    lam = _matched_backward(disc, st, grid, state, control.values, theta, rhs)
    nodes = np.empty((N + 1, disc.m, disc.ni))
    nodes[0] = lam[0]
    for k in range(1, N):
        nodes[k] = lam[k] if theta == 1.0 else 0.5 * (lam[k - 1] + lam[k])
    nodes[N] = b
    p_plus = lam[half]
    nodes[half] = p_plus
    return CostateTrajectory(grid.nodes, disc.full(nodes), disc.full(p_plus + a),
                             disc.full(p_plus), disc.full(lam), "matched", state.scheme,
                             disc.full(lam))


def duality_pairings(problem, mesh, grid, z: StateTrajectory, q: CostateTrajectory, a, b, w, xi):
    """Both sides of the discrete duality identity, computed independently."""
    disc = Discretization(problem, mesh)
    a = _as_interior(disc, a, "a")
    b = _as_interior(disc, b, "b")
    w = _as_interval_field(disc, w, grid.n_steps, "w")
    xi = _as_interval_field(disc, xi, grid.n_steps, "xi")
    Z = z.values[:, :, disc.sl]
    half = grid.switch_index
    lhs = np.sum(a * disc.mass(Z[half])) + np.sum(b * disc.mass(Z[-1]))
    zbar = 0.5 * (Z[:-1] + Z[1:])
    lhs += grid.ds * sum(np.sum(w[n] * disc.mass(zbar[n])) for n in range(grid.n_steps))
    lam = q.multipliers[:, :, disc.sl]
    rhs = grid.ds * sum(np.sum(lam[n] * disc.mass(xi[n])) for n in range(grid.n_steps))
    return float(lhs), float(rhs)


def write_costate_csv(path, costate: CostateTrajectory, mesh, header_lines=(), every: int = 1):
    """Costate snapshots as ``(s_or_t, x, species, value)`` rows plus a jump file.

    Values at the switch node are right limits.  A one-row record with the
    size of the jump goes to ``<path stem>_jump.csv``.
    """
    from pathlib import Path

    path = Path(path)
    with open(path, "w", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        wr = csv.writer(fh)
        wr.writerow(["s", "x", "species", "value"])
        for k in range(0, costate.values.shape[0], every):
            for i, row in enumerate(costate.values[k]):
                for x, val in zip(mesh.nodes, row):
                    wr.writerow([repr(float(costate.times[k])), repr(float(x)), i + 1,
                                 repr(float(val))])
    jpath = path.with_name(path.stem + "_jump.csv")
    jump = costate.jump
    with open(jpath, "w", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        wr = csv.writer(fh)
        wr.writerow(["s", "max_abs_jump", "max_abs_jump_per_species"])
        per = ";".join(repr(float(v)) for v in np.max(np.abs(jump), axis=1))
        wr.writerow([repr(1.0), repr(float(np.max(np.abs(jump)))), per])
    return path, jpath
