"""Reduced cost ``J(u, tau)``, its gradient and second-derivative actions.

Time quadrature of the running cost is the midpoint rule per interval with the
averaged state.  Gradients are Riesz representatives for the control inner
product ``<a, b> = sum_n ds sum_j w_j a[n, :, j] . b[n, :, j]`` where ``w`` are
the nodal quadrature weights, plus the ordinary product for ``tau``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._scheme import Discretization, StepData
from .adjoint import CostateTrajectory, solve_costate
from .controls import ControlField, control_weights
from .errors import DimensionMismatch
from .forward import (SCHEMES, StateTrajectory, original_time_cost, solve_original_time,
                      solve_state, solve_tangent)
from .timemap import TimeMap

__all__ = [
    "ControlField",
    "Gradient",
    "eval_cost",
    "cost_of_state",
    "eval_gradient",
    "gradient_from_costate",
    "control_derivative_h",
    "interval_hamiltonian",
    "HessianAction",
    "hessian_vector",
    "hessian_form",
    "inner",
    "transport_cost_pair",
]


@dataclass(frozen=True, eq=False)
class Gradient:
    grad_u: ControlField
    grad_tau: float
    cost: float
    state: StateTrajectory
    costate: CostateTrajectory
    mode: str

    def norm_u(self, mesh):
        return float(np.sqrt(inner(mesh, self.grad_u, self.grad_u)))


def inner(mesh, a: ControlField, b: ControlField) -> float:
    """Discrete L2 inner product of two control fields."""
    w = control_weights(mesh, a.grid)
    return float(np.sum(w * a.values * b.values))


def cost_of_state(problem, mesh, state: StateTrajectory, control: ControlField, tau: float,
                  disc=None) -> float:
    disc = disc or Discretization(problem, mesh)
    grid = control.grid
    st = StepData.build(grid, TimeMap(tau, problem.T))
    Y = state.values
    u = control.values
    J = 0.0
    for n in range(grid.n_steps):
        ybar = 0.5 * (Y[n] + Y[n + 1])
        J += grid.ds * st.pi_dot[n] * disc.ell(st.phase[n], st.tm[n], ybar, u[n])
    J += disc.phi1(tau, Y[grid.switch_index]) + disc.phi2(Y[-1])
    return float(J)


def eval_cost(problem, mesh, u: ControlField, tau: float, scheme: str = "CN") -> float:
    """Reduced cost: solve the state, then integrate the costs."""
    state = solve_state(problem, mesh, u, tau, scheme)
    return cost_of_state(problem, mesh, state, u, tau)




def control_derivative_h(problem, mesh, state, costate, control, tau, disc=None):
    """Pointwise ``D_u h`` per interval and node, ``(N, n_controls, n_nodes)``.

    Paper mode uses the interval costate; matched mode uses the step
    multipliers so that ``pi_dot * D_u h`` is the exact discrete gradient.
    """
    disc = disc or Discretization(problem, mesh)
    grid = control.grid
    st = StepData.build(grid, TimeMap(tau, problem.T))
    P, x = problem, mesh.nodes
    Y, u = state.values, control.values
    out = np.empty(u.shape)
    if costate.mode == "matched":
        theta = SCHEMES[state.scheme]
        lam = costate.multipliers[:, :, disc.sl]
    for n in range(grid.n_steps):
        ph = st.phase[n]
        ybar = 0.5 * (Y[n] + Y[n + 1])
        d = np.array(P.ell_u(ph, st.tm[n], x, ybar, u[n]), dtype=float)
        if costate.mode == "matched":
            Ml = disc.mass(lam[n])
            fu = theta * P.f_u(ph, st.t1[n], x, Y[n + 1], u[n])
            if theta < 1.0:
                fu = fu + (1.0 - theta) * P.f_u(ph, st.t0[n], x, Y[n], u[n])
            d[:, disc.sl] += np.einsum("in,icn->cn", Ml, fu[:, :, disc.sl]) / disc.w[disc.sl]
        else:
            p = costate.interval_values[n]
            d += np.einsum("in,icn->cn", p, P.f_u(ph, st.tm[n], x, ybar, u[n]))
        out[n] = d
    return out


def interval_hamiltonian(problem, mesh, state, costate, control, tau, disc=None):
    """Integrated Hamiltonian and its explicit time derivative per interval.

    ``H_n = <1, l> + <p, nu y_xx + F>`` at the interval midpoint, with the
    diffusion pairing taken in weak form.  Returns ``(H, DtH)``.
    """
    disc = disc or Discretization(problem, mesh)
    grid = control.grid
    st = StepData.build(grid, TimeMap(tau, problem.T))
    P, x = problem, mesh.nodes
    Y, u = state.values, control.values
    p = costate.interval_values[:, :, disc.sl]
    H = np.empty(grid.n_steps)
    DtH = np.empty(grid.n_steps)
    for n in range(grid.n_steps):
        ph, t = st.phase[n], st.tm[n]
        ybar = 0.5 * (Y[n] + Y[n + 1])
        H[n] = disc.ell(ph, t, ybar, u[n]) - float(np.sum(p[n] * disc.N(ph, t, ybar, u[n])))
        DtH[n] = float(disc.w @ P.ell_t(ph, t, x, ybar, u[n])) + float(
            np.sum(p[n] * disc.mass(disc.Gt(ph, t, ybar, u[n]))))
    return H, DtH


def gradient_from_costate(problem, mesh, state, costate, control, tau, disc=None):
    """``(grad_u values, grad_tau)`` from a solved state and costate."""
    disc = disc or Discretization(problem, mesh)
    grid = control.grid
    st = StepData.build(grid, TimeMap(tau, problem.T))
    duh = control_derivative_h(problem, mesh, state, costate, control, tau, disc)
    grad_u = st.pi_dot[:, None, None] * duh
    Y = state.values
    phi_tau = disc.phi1_tau(tau, Y[grid.switch_index])
    if costate.mode == "paper":
        H, DtH = interval_hamiltonian(problem, mesh, state, costate, control, tau, disc)
        g_tau = grid.ds * float(np.sum(st.pi_dot_tau * H + st.pi_dot * DtH * st.ptm)) + phi_tau
        return grad_u, float(g_tau)
    # matched: differentiate the discrete Lagrangian in tau
    theta = SCHEMES[state.scheme]
    lam = costate.multipliers[:, :, disc.sl]
    P, x, u = problem, mesh.nodes, control.values
    g = phi_tau
    for n in range(grid.n_steps):
        ph = st.phase[n]
        ybar = 0.5 * (Y[n] + Y[n + 1])
        g += grid.ds * (st.pi_dot_tau[n] * disc.ell(ph, st.tm[n], ybar, u[n])
                        + st.pi_dot[n] * st.ptm[n] * float(disc.w @ P.ell_t(ph, st.tm[n], x, ybar, u[n])))
        dR = theta * (st.pi_dot_tau[n] * disc.N(ph, st.t1[n], Y[n + 1], u[n])
                      - st.pi_dot[n] * st.pt1[n] * disc.mass(disc.Gt(ph, st.t1[n], Y[n + 1], u[n])))
        if theta < 1.0:
            dR += (1.0 - theta) * (st.pi_dot_tau[n] * disc.N(ph, st.t0[n], Y[n], u[n])
                                   - st.pi_dot[n] * st.pt0[n] * disc.mass(disc.Gt(ph, st.t0[n], Y[n], u[n])))
        g -= grid.ds * float(np.sum(lam[n] * dR))
    return grad_u, float(g)


def eval_gradient(problem, mesh, u: ControlField, tau: float, mode: str = "paper",
                  scheme: str = "CN", adjoint_scheme: str = "IE") -> Gradient:
    """Cost and gradient at ``(u, tau)``.

    ``mode='paper'`` uses the costate discretization of :func:`solve_costate`
    (``adjoint_scheme``); ``mode='matched'`` gives the exact derivative of the
    discrete cost.
    """
    disc = Discretization(problem, mesh)
    state = solve_state(problem, mesh, u, tau, scheme)
    J = cost_of_state(problem, mesh, state, u, tau, disc)
    costate = solve_costate(problem, mesh, state, u, tau, mode=mode, scheme=adjoint_scheme)
    gu, gt = gradient_from_costate(problem, mesh, state, costate, u, tau, disc)
    return Gradient(u.with_values(gu), gt, J, state, costate, mode)


# ---------------------------------------------------------------------------
# second derivatives
# ---------------------------------------------------------------------------

def _phi_second(problem, disc, tau, y_half, y_end, za, zb, ta, tb):
    P, x = problem, disc.x
    h, e = za[0], zb[0]
    ha, hb = za[1], zb[1]
    q = np.einsum("lkn,ln,kn->n", P.phi1_yy(tau, x, y_half), h, e)
    tauy = P.phi1_tauy(tau, x, y_half)
    q = q + ta * np.einsum("ln,ln->n", tauy, e) + tb * np.einsum("ln,ln->n", tauy, h)
    q = q + ta * tb * P.phi1_tautau(tau, x, y_half)
    q2 = np.einsum("lkn,ln,kn->n", P.phi2_yy(x, y_end), ha, hb)
    return float(disc.w_phi @ q) + float(disc.w_phi @ q2)


class HessianAction:
    """Second derivative of the discrete reduced cost applied to one direction.

    ``pair(du, dtau)`` evaluates the bilinear form against any other
    direction; ``quadratic`` is the form on the direction itself.
    """

    def __init__(self, problem, mesh, u, tau, delta_u, delta_tau, scheme="CN"):
        problem._need2()
        self.problem, self.mesh, self.u, self.tau = problem, mesh, u, float(tau)
        self.disc = Discretization(problem, mesh)
        self.state = solve_state(problem, mesh, u, tau, scheme)
        self.costate = solve_costate(problem, mesh, self.state, u, tau, mode="matched")
        self.theta = SCHEMES[self.state.scheme]
        self.st = StepData.build(u.grid, TimeMap(tau, problem.T))
        self.direction = self._tangent(delta_u, delta_tau)
        self.quadratic = self._form(*self.direction, *self.direction)

    def _tangent(self, du, dtau):
        if du is None:
            du = ControlField.zeros(self.u.grid, self.u.n_controls, self.u.n_nodes)
        if du.values.shape != self.u.values.shape:
            raise DimensionMismatch("direction does not match the control layout")
        z = solve_tangent(self.problem, self.mesh, self.state, self.u, self.tau, du, dtau)
        return du.values, float(dtau), z.values

    def pair(self, delta_u, delta_tau=0.0) -> float:
        va, ta, za = self.direction
        vb, tb, zb = self._tangent(delta_u, delta_tau)
        return self._form(va, ta, za, vb, tb, zb)

    def _form(self, va, ta, za, vb, tb, zb):
        disc, st, P = self.disc, self.st, self.problem
        grid = self.u.grid
        ds, th = grid.ds, self.theta
        Y, u = self.state.values, self.u.values
        lam = self.costate.multipliers[:, :, disc.sl]
        Q = 0.0
        for n in range(grid.n_steps):
            ph = st.phase[n]
            ybar = 0.5 * (Y[n] + Y[n + 1])
            A = (ta * st.ptm[n], 0.5 * (za[n] + za[n + 1]), va[n])
            B = (tb * st.ptm[n], 0.5 * (zb[n] + zb[n + 1]), vb[n])
            q = st.pi_dot[n] * disc.ell2(ph, st.tm[n], ybar, u[n], A, B)
            q += st.pi_dot_tau[n] * (ta * disc.ell1(ph, st.tm[n], ybar, u[n], B)
                                     + tb * disc.ell1(ph, st.tm[n], ybar, u[n], A))
            for wgt, t, pt, k in ((th, st.t1[n], st.pt1[n], n + 1),
                                  (1.0 - th, st.t0[n], st.pt0[n], n)):
                if wgt == 0.0:
                    continue
                Ak = (ta * pt, za[k], va[n])
                Bk = (tb * pt, zb[k], vb[n])
                d2 = -st.pi_dot[n] * disc.mass(disc.G2(ph, t, Y[k], u[n], Ak, Bk))
                d2 = d2 + st.pi_dot_tau[n] * (ta * disc.N1(ph, t, Y[k], u[n], Bk)
                                              + tb * disc.N1(ph, t, Y[k], u[n], Ak))
                q -= wgt * float(np.sum(lam[n] * d2))
            Q += ds * q
        h = grid.switch_index
        Q += _phi_second(P, disc, self.tau, Y[h], Y[-1], (za[h], za[-1]), (zb[h], zb[-1]), ta, tb)
        return float(Q)


def hessian_vector(problem, mesh, u: ControlField, tau: float, delta_u: ControlField | None,
                   delta_theta: float = 0.0, scheme: str = "CN") -> HessianAction:
    """Hessian of the discrete reduced cost applied to ``(delta_u, delta_theta)``."""
    return HessianAction(problem, mesh, u, tau, delta_u, delta_theta, scheme)


def hessian_form(problem, mesh, u, tau, d1, d2, scheme: str = "CN") -> float:
    """Bilinear form ``D^2 J (d1, d2)`` with ``d = (delta_u, delta_tau)``."""
    act = HessianAction(problem, mesh, u, tau, d1[0], d1[1], scheme)
    return act.pair(d2[0], d2[1])


def transport_cost_pair(problem, mesh, v_func, tau, n_steps_pseudo, n_steps_phys, scheme="CN"):
    """Costs of one physical-time control through both formulations.

    ``v_func(t, x) -> (n_controls, n_nodes)`` is sampled at physical interval
    midpoints for the original-time solve and at ``pi(s_mid, tau)`` for the
    reparameterized solve.  Returns ``(J_reparameterized, J_original)``.
    """
    from .timemap import PseudoTimeGrid

    grid = PseudoTimeGrid(n_steps_pseudo)
    tmap = TimeMap(tau, problem.T)
    u = ControlField(grid, np.array([v_func(t, mesh.nodes) for t in tmap.pi(grid.midpoints)]))
    J = eval_cost(problem, mesh, u, tau, scheme)
    t = np.linspace(0.0, problem.T, n_steps_phys + 1)
    tm = 0.5 * (t[:-1] + t[1:])
    v = np.array([v_func(tt, mesh.nodes) for tt in tm])
    traj, k = solve_original_time(problem, mesh, v, tau, n_steps_phys, scheme)
    J0 = original_time_cost(problem, mesh, traj, v, k)
    return J, J0
