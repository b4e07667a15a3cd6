"""Problem data: phase-wise dynamics, costs and their pointwise derivatives.

Every evaluator acts node-wise on arrays laid out as ``y[species, node]`` and
``u[control, node]``; ``x`` holds the node coordinates.  Jacobians carry the
output component first, e.g. ``f_y[i, l, node] = d f_i / d y_l``.  Second
derivatives follow the same convention with one more axis.
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace
from typing import Callable, NamedTuple

import numpy as np

from .errors import DimensionMismatch, InvalidParams, RequiresSecondDerivatives

__all__ = [
    "HybridProblem",
    "LVParams",
    "LotkaVolterra",
    "HeatProblem",
    "lotka_volterra",
    "heat_problem",
    "eval_dynamics",
    "eval_derivatives",
    "Derivatives",
    "BUILTINS",
    "build_problem",
]


def _zeros(*shape):
    return np.zeros(shape)


class HybridProblem:
    """Base bundle: zero dynamics, zero costs, unbounded-ish controls.

    Subclasses override what they need.  Second-order evaluators raise
    :class:`RequiresSecondDerivatives` unless ``has_second_derivatives`` is set
    and the subclass provides them (the zero defaults below are only valid
    when the matching first-order evaluator is the zero default too).
    """

    name = "zero"
    n_species = 1
    n_controls = 1
    T = 1.0
    nu = (1.0,)
    beta = 0.0
    autonomous = True
    # integration window of the switch and terminal costs; None = whole domain
    phi_region = None
    has_second_derivatives = False

    # -- data ---------------------------------------------------------------
    def initial_state(self, x):
        return np.zeros((self.n_species, x.size))

    def bounds(self, phase, x):
        n = x.size
        return -np.inf * np.ones((self.n_controls, n)), np.inf * np.ones((self.n_controls, n))

    # -- dynamics -----------------------------------------------------------
    def f(self, phase, t, x, y, u):
        return _zeros(self.n_species, x.size)

    def f_y(self, phase, t, x, y, u):
        return _zeros(self.n_species, self.n_species, x.size)

    def f_u(self, phase, t, x, y, u):
        return _zeros(self.n_species, self.n_controls, x.size)

    def f_t(self, phase, t, x, y, u):
        return _zeros(self.n_species, x.size)

    # -- running cost ----------------------------------------------------------
    def ell(self, phase, t, x, y, u):
        return _zeros(x.size)

    def ell_y(self, phase, t, x, y, u):
        return _zeros(self.n_species, x.size)

    def ell_u(self, phase, t, x, y, u):
        return _zeros(self.n_controls, x.size)

    def ell_t(self, phase, t, x, y, u):
        return _zeros(x.size)

    # -- switch and terminal costs ---------------------------------------------
    def phi1(self, tau, x, y):
        return _zeros(x.size)

    def phi1_y(self, tau, x, y):
        return _zeros(self.n_species, x.size)

    def phi1_tau(self, tau, x, y):
        return _zeros(x.size)

    def phi2(self, x, y):
        return _zeros(x.size)

    def phi2_y(self, x, y):
        return _zeros(self.n_species, x.size)

    # -- second order ----------------------------------------------------------
    def _need2(self):
        if not self.has_second_derivatives:
            raise RequiresSecondDerivatives(f"problem {self.name!r} has no second derivatives")

    def f_yy(self, phase, t, x, y, u):
        self._need2()
        m = self.n_species
        return _zeros(m, m, m, x.size)

    def f_yu(self, phase, t, x, y, u):
        self._need2()
        return _zeros(self.n_species, self.n_species, self.n_controls, x.size)

    def f_uu(self, phase, t, x, y, u):
        self._need2()
        return _zeros(self.n_species, self.n_controls, self.n_controls, x.size)

    def f_ty(self, phase, t, x, y, u):
        self._need2()
        return _zeros(self.n_species, self.n_species, x.size)

    def f_tu(self, phase, t, x, y, u):
        self._need2()
        return _zeros(self.n_species, self.n_controls, x.size)

    def f_tt(self, phase, t, x, y, u):
        self._need2()
        return _zeros(self.n_species, x.size)

    def ell_yy(self, phase, t, x, y, u):
        self._need2()
        return _zeros(self.n_species, self.n_species, x.size)

    def ell_yu(self, phase, t, x, y, u):
        self._need2()
        return _zeros(self.n_species, self.n_controls, x.size)

    def ell_uu(self, phase, t, x, y, u):
        self._need2()
        return _zeros(self.n_controls, self.n_controls, x.size)

    def ell_ty(self, phase, t, x, y, u):
        self._need2()
        return _zeros(self.n_species, x.size)

    def ell_tu(self, phase, t, x, y, u):
        self._need2()
        return _zeros(self.n_controls, x.size)

    def ell_tt(self, phase, t, x, y, u):
        self._need2()
        return _zeros(x.size)

    def phi1_yy(self, tau, x, y):
        self._need2()
        return _zeros(self.n_species, self.n_species, x.size)

    def phi1_tauy(self, tau, x, y):
        self._need2()
        return _zeros(self.n_species, x.size)

    def phi1_tautau(self, tau, x, y):
        self._need2()
        return _zeros(x.size)

    def phi2_yy(self, x, y):
        self._need2()
        return _zeros(self.n_species, self.n_species, x.size)

    def __repr__(self):
        return f"<{type(self).__name__} {self.name!r} T={self.T}>"


# ---------------------------------------------------------------------------
# Lotka-Volterra prey/predator system
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LVParams:
    T: float = 30.0
    nu1: float = 0.001
    nu2: float = 0.001
    a: float = 0.3
    r: float = 0.2
    c1: float = 0.05
    c2: float = 0.05
    q1: float = 0.1   # q = b before the switch
    q2: float = 0.07  # q = b after the switch
    alpha: float = 1e-6
    beta: float = 0.0005
    actuator1: tuple = (0.0, 0.25)
    actuator2: tuple = (0.75, 1.0)
    observation: tuple = (0.48, 0.52)
    u_lower: float = -50.0
    u_upper: float = 50.0

    @classmethod
    def from_dict(cls, d: dict) -> "LVParams":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise InvalidParams(f"unknown Lotka-Volterra parameters: {sorted(unknown)}")
        d = {k: tuple(v) if isinstance(v, list) else v for k, v in d.items()}
        return replace(cls(), **d)


class LotkaVolterra(HybridProblem):
    """Prey/predator system whose interaction rates change at the switch.

    The stored cost is the negative of the harvested prey objective, so the
    problem is a minimization.
    """

    name = "lotka_volterra"
    n_species = 2
    n_controls = 2
    has_second_derivatives = True

    def __init__(self, params: LVParams):
        p = params
        if p.T <= 0:
            raise InvalidParams("horizon T must be positive")
        if p.nu1 < 0 or p.nu2 < 0:
            raise InvalidParams("diffusivities must be nonnegative")
        if p.alpha <= 0:
            raise InvalidParams("control cost alpha must be positive")
        if p.u_lower > p.u_upper:
            raise InvalidParams("u_lower must not exceed u_upper")
        self.params = p
        self.T = p.T
        self.nu = (p.nu1, p.nu2)
        self.beta = p.beta
        self.phi_region = p.observation

    def rates(self, phase):
        """Interaction coefficients ``(q, b)`` of a phase."""
        v = self.params.q1 if phase == 1 else self.params.q2
        return v, v

    def initial_state(self, x):
        e = np.exp
        y1 = 10.0 * (1.0 - e(-(1.0 - x))) * (e(-(1.0 - x)) - e(-1.0))
        y2 = 20.0 * (1.0 - e(-x)) * (e(-x) - e(-1.0))
        y = np.array([y1, y2])
        y[:, [0, -1]] = 0.0
        return y

    def bounds(self, phase, x):
        lo = np.full((2, x.size), self.params.u_lower)
        hi = np.full((2, x.size), self.params.u_upper)
        return lo, hi

    def _chi(self, x):
        p = self.params
        c1 = ((x > p.actuator1[0]) & (x < p.actuator1[1])).astype(float)
        c2 = ((x > p.actuator2[0]) & (x < p.actuator2[1])).astype(float)
        return c1, c2

    def _parts(self, phase, x, y, u):
        p = self.params
        q, b = self.rates(phase)
        chi1, chi2 = self._chi(x)
        y1, y2 = y
        g1 = y1 * (1.0 - p.c1 * y1)
        g2 = y2 * (1.0 - p.c2 * y2)
        A1 = p.a - b * y2 + u[0] * chi1
        A2 = q * y1 - p.r + u[1] * chi2
        return q, b, chi1, chi2, g1, g2, A1, A2

    def f(self, phase, t, x, y, u):
        *_, g1, g2, A1, A2 = self._parts(phase, x, y, u)
        return np.array([g1 * A1, g2 * A2])

    def f_y(self, phase, t, x, y, u):
        p = self.params
        q, b, _, _, g1, g2, A1, A2 = self._parts(phase, x, y, u)
        y1, y2 = y
        out = np.empty((2, 2, x.size))
        out[0, 0] = (1.0 - 2.0 * p.c1 * y1) * A1
        out[0, 1] = -b * g1
        out[1, 0] = q * g2
        out[1, 1] = (1.0 - 2.0 * p.c2 * y2) * A2
        return out

    def f_u(self, phase, t, x, y, u):
        _, _, chi1, chi2, g1, g2, _, _ = self._parts(phase, x, y, u)
        out = np.zeros((2, 2, x.size))
        out[0, 0] = g1 * chi1
        out[1, 1] = g2 * chi2
        return out

    def f_yy(self, phase, t, x, y, u):
        p = self.params
        q, b, _, _, _, _, A1, A2 = self._parts(phase, x, y, u)
        y1, y2 = y
        out = np.zeros((2, 2, 2, x.size))
        out[0, 0, 0] = -2.0 * p.c1 * A1
        out[0, 0, 1] = out[0, 1, 0] = -b * (1.0 - 2.0 * p.c1 * y1)
        out[1, 1, 1] = -2.0 * p.c2 * A2
        out[1, 0, 1] = out[1, 1, 0] = q * (1.0 - 2.0 * p.c2 * y2)
        return out

    def f_yu(self, phase, t, x, y, u):
        p = self.params
        chi1, chi2 = self._chi(x)
        y1, y2 = y
        out = np.zeros((2, 2, 2, x.size))
        out[0, 0, 0] = (1.0 - 2.0 * p.c1 * y1) * chi1
        out[1, 1, 1] = (1.0 - 2.0 * p.c2 * y2) * chi2
        return out

    def f_uu(self, phase, t, x, y, u):
        return np.zeros((2, 2, 2, x.size))

    def f_ty(self, phase, t, x, y, u):
        return np.zeros((2, 2, x.size))

    def f_tu(self, phase, t, x, y, u):
        return np.zeros((2, 2, x.size))

    def f_tt(self, phase, t, x, y, u):
        return np.zeros((2, x.size))

    def ell(self, phase, t, x, y, u):
        return 0.5 * self.params.alpha * (u[0] ** 2 + u[1] ** 2)

    def ell_u(self, phase, t, x, y, u):
        return self.params.alpha * np.asarray(u, dtype=float)

    def ell_yy(self, phase, t, x, y, u):
        return np.zeros((2, 2, x.size))

    def ell_yu(self, phase, t, x, y, u):
        return np.zeros((2, 2, x.size))

    def ell_uu(self, phase, t, x, y, u):
        out = np.zeros((2, 2, x.size))
        out[0, 0] = out[1, 1] = self.params.alpha
        return out

    def ell_ty(self, phase, t, x, y, u):
        return np.zeros((2, x.size))

    def ell_tu(self, phase, t, x, y, u):
        return np.zeros((2, x.size))

    def ell_tt(self, phase, t, x, y, u):
        return np.zeros(x.size)

    # phi densities are integrated over the observation window only
    def phi1(self, tau, x, y):
        return -0.5 * y[0] ** 2

    def phi1_y(self, tau, x, y):
        return np.array([-y[0], np.zeros(x.size)])

    def phi1_yy(self, tau, x, y):
        out = np.zeros((2, 2, x.size))
        out[0, 0] = -1.0
        return out

    def phi1_tauy(self, tau, x, y):
        return np.zeros((2, x.size))

    def phi1_tautau(self, tau, x, y):
        return np.zeros(x.size)

    # the terminal cost is the same observation as the switch cost
    def phi2(self, x, y):
        return self.phi1(None, x, y)

    def phi2_y(self, x, y):
        return self.phi1_y(None, x, y)

    def phi2_yy(self, x, y):
        return self.phi1_yy(None, x, y)


def lotka_volterra(params: LVParams | None = None, **overrides) -> LotkaVolterra:
    params = params or LVParams()
    if overrides:
        params = replace(params, **overrides)
    return LotkaVolterra(params)


class HeatProblem(HybridProblem):
    """Pure diffusion with zero costs; the initial profile is a sine mode."""

    name = "heat"
    has_second_derivatives = True

    def __init__(self, nu=1.0, T=0.1, mode=1):
        if T <= 0 or nu < 0:
            raise InvalidParams("heat problem needs T > 0 and nu >= 0")
        self.nu = (float(nu),)
        self.T = float(T)
        self.mode = int(mode)

    def initial_state(self, x):
        y = np.sin(self.mode * np.pi * x)[None, :]
        y[:, [0, -1]] = 0.0
        return y


def heat_problem(nu=1.0, T=0.1, mode=1) -> HeatProblem:
    return HeatProblem(nu=nu, T=T, mode=mode)


BUILTINS: dict[str, Callable[..., HybridProblem]] = {
    "lotka_volterra": lambda **kw: lotka_volterra(LVParams.from_dict(kw)),
    "heat": heat_problem,
}


def build_problem(name: str, params: dict | None = None) -> HybridProblem:
    try:
        factory = BUILTINS[name]
    except KeyError:
        raise InvalidParams(f"unknown problem {name!r}; choose from {sorted(BUILTINS)}") from None
    try:
        return factory(**(params or {}))
    except TypeError as exc:
        raise InvalidParams(str(exc)) from None


# ---------------------------------------------------------------------------
# evaluation helpers
# ---------------------------------------------------------------------------

class Derivatives(NamedTuple):
    f_y: np.ndarray
    f_u: np.ndarray
    f_t: np.ndarray
    ell_y: np.ndarray
    ell_u: np.ndarray
    ell_t: np.ndarray


def _check(problem, mesh, phase, y, u):
    if phase not in (1, 2):
        raise ValueError(f"phase must be 1 or 2, got {phase}")
    n = mesh.n_nodes
    y = np.asarray(y, dtype=float)
    u = np.asarray(u, dtype=float)
    if y.shape != (problem.n_species, n):
        raise DimensionMismatch(f"state has shape {y.shape}, expected {(problem.n_species, n)}")
    if u.shape != (problem.n_controls, n):
        raise DimensionMismatch(f"control has shape {u.shape}, expected {(problem.n_controls, n)}")
    return y, u


def eval_dynamics(problem, mesh, phase, t, y, u):
    """Nodal reaction rates, zero on Dirichlet nodes."""
    y, u = _check(problem, mesh, phase, y, u)
    out = np.array(problem.f(phase, t, mesh.nodes, y, u), dtype=float)
    out[:, mesh.dirichlet_mask] = 0.0
    return out


def eval_derivatives(problem, mesh, phase, t, y, u) -> Derivatives:
    y, u = _check(problem, mesh, phase, y, u)
    x = mesh.nodes
    args = (phase, t, x, y, u)
    return Derivatives(problem.f_y(*args), problem.f_u(*args), problem.f_t(*args),
                       problem.ell_y(*args), problem.ell_u(*args), problem.ell_t(*args))
