"""Spatial discretization shared by the state, tangent and adjoint solvers.

Unknowns live on interior nodes.  The semi-discrete state equation reads

    M dy/ds + pi_dot * N(t, y, u) = 0,    N(t, y, u) = nu K y - M G(t, y, u),

where ``G`` is the nodal reaction rate minus the centered advection term
``beta * y * dy/dx``.  Interior arrays are ``(n_species, n_interior)``;
:class:`BlockBand` operators use the transposed ``(n_interior, n_species)``
layout.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._banded import BlockBand
from .fem1d import assemble_mass, assemble_stiffness, subdomain_weight_vector
from .timemap import PseudoTimeGrid, TimeMap


class Discretization:
    def __init__(self, problem, mesh):
        self.problem = problem
        self.mesh = mesh
        self.x = mesh.nodes
        self.m = problem.n_species
        self.nc = problem.n_controls
        inner = np.flatnonzero(mesh.interior)
        if inner.size == 0 or np.any(np.diff(inner) != 1) or inner[0] != 1 or inner[-1] != mesh.n_nodes - 2:
            raise ValueError("only meshes with Dirichlet nodes at both ends are supported")
        self.sl = slice(1, mesh.n_nodes - 1)
        self.ni = inner.size
        M_full = assemble_mass(mesh)
        self.M_full = M_full
        self.M = M_full.restrict(mesh.interior)
        self.K = assemble_stiffness(mesh).restrict(mesh.interior)
        self.nu = np.asarray(problem.nu, dtype=float)
        self.beta = float(problem.beta)
        self.w = M_full.matvec(np.ones(mesh.n_nodes))
        region = problem.phi_region
        self.w_phi = self.w if region is None else subdomain_weight_vector(mesh, region)
        self.h2 = self.x[2:] - self.x[:-2]
        self.lumped = self.M.matvec(np.ones(self.ni))
        self.Mb = BlockBand.kron_tri(self.M, self.m)
        self.Kb = BlockBand.kron_tri(self.K, self.m, self.nu)

    # -- layout helpers -------------------------------------------------------
    def full(self, yi):
        out = np.zeros(yi.shape[:-1] + (self.mesh.n_nodes,))
        out[..., self.sl] = yi
        return out

    def interior(self, y):
        return y[..., self.sl]

    def mass(self, yi):
        return self.M.matvec(yi.T).T

    def stiff(self, yi):
        return self.nu[:, None] * self.K.matvec(yi.T).T

    def mass_solve(self, yi):
        from .fem1d import tridiag_solve
        return tridiag_solve(self.M, yi.T).T

    # -- nonlinear operator -----------------------------------------------------
    def _dx(self, y):
        return (y[:, 2:] - y[:, :-2]) / self.h2

    def G(self, phase, t, y, u):
        g = self.problem.f(phase, t, self.x, y, u)[:, self.sl]
        if self.beta:
            g = g - self.beta * y[:, self.sl] * self._dx(y)
        return g

    def Gy(self, phase, t, y, u):
        fy = self.problem.f_y(phase, t, self.x, y, u)[:, :, self.sl]
        op = BlockBand.from_blocks(fy)
        if self.beta:
            yi = y[:, self.sl]
            c = self.beta / self.h2
            adv = BlockBand.from_species_tridiag(-c * yi, self._dx(y) * self.beta, c * yi)
            # from_species_tridiag expects sub = coupling to j-1: d/dy_{j-1} = -y_j/h2
            op = op - adv
        return op

    def Gu(self, phase, t, y, u):
        return self.problem.f_u(phase, t, self.x, y, u)[:, :, self.sl]

    def Gt(self, phase, t, y, u):
        return self.problem.f_t(phase, t, self.x, y, u)[:, self.sl]

    def N(self, phase, t, y, u):
        return self.stiff(y[:, self.sl]) - self.mass(self.G(phase, t, y, u))

    def NJ(self, phase, t, y, u):
        return self.Kb - self.Gy(phase, t, y, u).left_tri(self.M)

    def G2(self, phase, t, y, u, a, b):
        """Second variation of ``G`` along ``a = (dt, z, v)`` and ``b``.

        ``z`` are full-length state directions, ``v`` control directions.
        """
        P = self.problem
        x = self.x
        dta, za, va = a
        dtb, zb, vb = b
        args = (phase, t, x, y, u)
        out = np.einsum("ilkn,ln,kn->in", P.f_yy(*args), za, zb)
        fyu = P.f_yu(*args)
        out += np.einsum("ilcn,ln,cn->in", fyu, za, vb)
        out += np.einsum("ilcn,ln,cn->in", fyu, zb, va)
        out += np.einsum("icdn,cn,dn->in", P.f_uu(*args), va, vb)
        if dta or dtb:
            fty = P.f_ty(*args)
            ftu = P.f_tu(*args)
            out += dta * (np.einsum("iln,ln->in", fty, zb) + np.einsum("icn,cn->in", ftu, vb))
            out += dtb * (np.einsum("iln,ln->in", fty, za) + np.einsum("icn,cn->in", ftu, va))
            out += dta * dtb * P.f_tt(*args)
        out = out[:, self.sl]
        if self.beta:
            out = out - self.beta * (za[:, self.sl] * self._dx(zb) + zb[:, self.sl] * self._dx(za))
        return out

    # -- running cost, integrated in space ------------------------------------------
    def ell(self, phase, t, y, u):
        return float(self.w @ self.problem.ell(phase, t, self.x, y, u))

    def ell_y(self, phase, t, y, u):
        """Dual gradient (interior) of the integrated running cost in ``y``."""
        return (self.w * self.problem.ell_y(phase, t, self.x, y, u))[:, self.sl]

    def ell2(self, phase, t, y, u, a, b):
        P = self.problem
        x = self.x
        dta, za, va = a
        dtb, zb, vb = b
        args = (phase, t, x, y, u)
        dens = np.einsum("lkn,ln,kn->n", P.ell_yy(*args), za, zb)
        lyu = P.ell_yu(*args)
        dens += np.einsum("lcn,ln,cn->n", lyu, za, vb) + np.einsum("lcn,ln,cn->n", lyu, zb, va)
        dens += np.einsum("cdn,cn,dn->n", P.ell_uu(*args), va, vb)
        if dta or dtb:
            lty = P.ell_ty(*args)
            ltu = P.ell_tu(*args)
            dens += dta * (np.einsum("ln,ln->n", lty, zb) + np.einsum("cn,cn->n", ltu, vb))
            dens += dtb * (np.einsum("ln,ln->n", lty, za) + np.einsum("cn,cn->n", ltu, va))
            dens += dta * dtb * P.ell_tt(*args)
        return float(self.w @ dens)

    def ell1(self, phase, t, y, u, a):
        """First variation of the integrated running cost along ``a = (dt, z, v)``."""
        P = self.problem
        dt, z, v = a
        args = (phase, t, self.x, y, u)
        dens = np.einsum("ln,ln->n", P.ell_y(*args), z) + np.einsum("cn,cn->n", P.ell_u(*args), v)
        if dt:
            dens = dens + dt * P.ell_t(*args)
        return float(self.w @ dens)

    def N1(self, phase, t, y, u, a):
        """First variation of ``N`` along ``a = (dt, z, v)`` (interior result)."""
        dt, z, v = a
        g = self.Gy(phase, t, y, u).matvec(z[:, self.sl].T).T
        g += np.einsum("icn,cn->in", self.Gu(phase, t, y, u), v[:, self.sl])
        if dt:
            g += dt * self.Gt(phase, t, y, u)
        return self.stiff(z[:, self.sl]) - self.mass(g)

    # -- switch / terminal costs -----------------------------------------------------
    def phi1(self, tau, y):
        return float(self.w_phi @ self.problem.phi1(tau, self.x, y))

    def phi2(self, y):
        return float(self.w_phi @ self.problem.phi2(self.x, y))

    def phi1_y(self, tau, y):
        return (self.w_phi * self.problem.phi1_y(tau, self.x, y))[:, self.sl]

    def phi2_y(self, y):
        return (self.w_phi * self.problem.phi2_y(self.x, y))[:, self.sl]

    def phi1_tau(self, tau, y):
        return float(self.w_phi @ self.problem.phi1_tau(tau, self.x, y))


@dataclass(frozen=True)
class StepData:
    """Per-interval time-map quantities for a given switching time."""

    phase: np.ndarray
    pi_dot: np.ndarray
    pi_dot_tau: np.ndarray
    t0: np.ndarray
    t1: np.ndarray
    tm: np.ndarray
    pt0: np.ndarray
    pt1: np.ndarray
    ptm: np.ndarray

    @classmethod
    def build(cls, grid: PseudoTimeGrid, tmap: TimeMap):
        s = grid.nodes
        mid = grid.midpoints
        phase = grid.phases
        return cls(
            phase=phase,
            pi_dot=np.where(phase == 1, tmap.tau, tmap.T - tmap.tau),
            pi_dot_tau=np.where(phase == 1, 1.0, -1.0),
            t0=tmap.pi(s[:-1]), t1=tmap.pi(s[1:]), tm=tmap.pi(mid),
            pt0=tmap.pi_tau(s[:-1]), pt1=tmap.pi_tau(s[1:]), ptm=tmap.pi_tau(mid),
        )
