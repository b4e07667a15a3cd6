"""Constancy of the Hamiltonian along a computed optimum.

For time-independent data the Hamiltonian is constant along an optimal
trajectory.  Discretely it drifts by O(ds); the drift is measured here on a
linear-quadratic tracking problem, in units of ds * max|H|, for both
gradient modes.  The matched multipliers make it constant to roundoff
within each phase; the implicit-Euler costate gives a ratio near one.
"""

import numpy as np

from hybridpar import (BBOptions, ControlField, HybridProblem, PseudoTimeGrid,
                       build_uniform_mesh, hamiltonian_trace, run_bb)


class Tracking(HybridProblem):
    """y' = 0.1 y'' + u with cost 2 (y - 2 sin(pi x))^2 + u^2 / 4 - g u and a switch penalty."""

    name = "tracking"
    T = 2.0
    nu = (0.1,)

    def initial_state(self, x):
        y = np.sin(np.pi * x)[None, :].copy()
        y[:, [0, -1]] = 0.0
        return y

    def bounds(self, phase, x):
        return np.full((1, x.size), -np.inf), np.full((1, x.size), np.inf)

    def f(self, phase, t, x, y, u):
        return np.array(u, dtype=float).reshape(1, -1)

    def f_u(self, phase, t, x, y, u):
        return np.ones((1, 1, x.size))

    def ell(self, phase, t, x, y, u):
        g = np.sin(np.pi * x) + 0.5
        return 2.0 * (y[0] - 2 * np.sin(np.pi * x)) ** 2 + 0.25 * u[0] ** 2 - g * u[0]

    def ell_y(self, phase, t, x, y, u):
        return 4.0 * (y - 2 * np.sin(np.pi * x)[None, :])

    def ell_u(self, phase, t, x, y, u):
        return (0.5 * u[0] - np.sin(np.pi * x) - 0.5)[None, :]

    def phi1(self, tau, x, y):
        return np.full(x.size, 0.25 * (tau - 1.0) ** 2)

    def phi1_tau(self, tau, x, y):
        return np.full(x.size, 0.5 * (tau - 1.0))


def main():
    P = Tracking()
    mesh = build_uniform_mesh(41)
    print("n_steps  mode      tau*      deviation   ratio")
    for n in (40, 80, 160):
        for mode in ("matched", "paper"):
            rep = run_bb(P, mesh, ControlField.zeros(PseudoTimeGrid(n), 1, 41), 1.3,
                         BBOptions(mode=mode, max_iters=500))
            G = rep.gradient
            tr = hamiltonian_trace(P, mesh, G.state, G.costate, rep.u, rep.tau)
            print(f"{n:7d}  {mode:8s} {rep.tau:.5f}   {tr.max_deviation:.3e}   "
                  f"{tr.constancy_ratio():.3f}")


if __name__ == "__main__":
    main()
