import csv

import numpy as np
import pytest

from oracles import QuadraticProblem
from hybridpar.adjoint import (apply_k, apply_kstar, duality_pairings, solve_costate,
                               write_costate_csv)
from hybridpar.controls import ControlField
from hybridpar.errors import DimensionMismatch
from hybridpar.fem1d import assemble_mass, build_uniform_mesh, subdomain_weight_vector
from hybridpar.forward import solve_original_time, solve_state
from hybridpar.problem import heat_problem, lotka_volterra
from hybridpar.timemap import PseudoTimeGrid

N_NODES = 31
N_STEPS = 40
TAU = 14.0
DUALITY_TOL = 1e-9


def lv_case(seed=0):
    P = lotka_volterra()
    mesh = build_uniform_mesh(N_NODES)
    grid = PseudoTimeGrid(N_STEPS)
    rng = np.random.default_rng(seed)
    u = ControlField(grid, 0.3 * rng.standard_normal((N_STEPS, 2, N_NODES)))
    return P, mesh, grid, u, solve_state(P, mesh, u, TAU)


def interior_lumped(mesh):
    return assemble_mass(mesh).matvec(np.ones(mesh.n_nodes))[1:-1]


class PhaseWeighted(QuadraticProblem):
    """Tracking weight that differs between the phases."""

    def ell(self, phase, t, x, y, u):
        return (3.0 if phase == 1 else 1.0) * super().ell(phase, t, x, y, u)

    def ell_y(self, phase, t, x, y, u):
        return (3.0 if phase == 1 else 1.0) * super().ell_y(phase, t, x, y, u)

    def ell_u(self, phase, t, x, y, u):
        return (3.0 if phase == 1 else 1.0) * super().ell_u(phase, t, x, y, u)


@pytest.mark.parametrize("mode", ["paper", "matched"])
def test_zero_costs_give_zero_costate(mode):
    P = heat_problem()
    mesh = build_uniform_mesh(21)
    grid = PseudoTimeGrid(20)
    u = ControlField.zeros(grid, 1, 21)
    state = solve_state(P, mesh, u, 0.05)
    p = solve_costate(P, mesh, state, u, 0.05, mode=mode)
    assert np.all(p.values == 0.0)
    assert np.all(p.jump == 0.0)


@pytest.mark.parametrize("mode", ["paper", "matched"])
def test_terminal_value_and_jump(mode):
    # phi = -(1/2) int_obs y1^2, so the lumped nodal derivative is -w_obs y1 / lumped
    P, mesh, grid, u, state = lv_case()
    p = solve_costate(P, mesh, state, u, TAU, mode=mode)
    w = subdomain_weight_vector(mesh, P.params.observation)[1:-1]
    lump = interior_lumped(mesh)
    yN = state.final()[0, 1:-1]
    y1 = state.at_switch()[0, 1:-1]
    np.testing.assert_allclose(p.values[-1, 0, 1:-1] * lump, -w * yN, atol=1e-14)
    assert np.all(p.values[-1, 1] == 0.0)
    np.testing.assert_allclose(p.jump[0, 1:-1] * lump, w * y1, atol=1e-14)
    assert np.all(p.jump[1] == 0.0)


def test_costate_vanishes_on_boundary():
    P, mesh, grid, u, state = lv_case()
    for mode in ("paper", "matched"):
        p = solve_costate(P, mesh, state, u, TAU, mode=mode)
        assert np.all(p.values[:, :, [0, -1]] == 0.0)


@pytest.mark.parametrize("mode", ["paper", "matched"])
def test_costate_after_switch_ignores_phase_one_costs(mode):
    mesh = build_uniform_mesh(21)
    grid = PseudoTimeGrid(20)
    kw = dict(gamma=4.0, yd=lambda x: np.sin(np.pi * x), y0=lambda x: np.sin(np.pi * x))
    u = ControlField.constant(grid, 1, 21, 0.2)
    plain, weighted = QuadraticProblem(**kw), PhaseWeighted(**kw)
    state = solve_state(plain, mesh, u, 1.0)
    a = solve_costate(plain, mesh, state, u, 1.0, mode=mode)
    b = solve_costate(weighted, mesh, state, u, 1.0, mode=mode)
    h = grid.switch_index
    np.testing.assert_array_equal(a.values[h:], b.values[h:])
    assert not np.allclose(a.values[0], b.values[0])


def test_kstar_of_zero_is_zero():
    P, mesh, grid, u, state = lv_case()
    zero = np.zeros((2, N_NODES))
    q = apply_kstar(P, mesh, state, u, TAU, zero, zero, np.zeros((N_STEPS, 2, N_NODES)))
    assert np.all(q.multipliers == 0.0)


def test_duality_identity():
    P, mesh, grid, u, state = lv_case()
    rng = np.random.default_rng(11)
    for _ in range(3):
        a, b = rng.standard_normal((2, 2, N_NODES))
        w = rng.standard_normal((N_STEPS, 2, N_NODES))
        xi = rng.standard_normal((N_STEPS, 2, N_NODES))
        z = apply_k(P, mesh, state, u, TAU, xi)
        q = apply_kstar(P, mesh, state, u, TAU, a, b, w)
        lhs, rhs = duality_pairings(P, mesh, grid, z, q, a, b, w, xi)
        assert abs(lhs - rhs) <= DUALITY_TOL * max(abs(lhs), abs(rhs))


def test_apply_k_is_linear():
    P, mesh, grid, u, state = lv_case()
    rng = np.random.default_rng(3)
    x1, x2 = rng.standard_normal((2, N_STEPS, 2, N_NODES))
    z1 = apply_k(P, mesh, state, u, TAU, x1).values
    z2 = apply_k(P, mesh, state, u, TAU, x2).values
    z = apply_k(P, mesh, state, u, TAU, 0.5 * x1 + 2.0 * x2).values
    assert np.max(np.abs(z - 0.5 * z1 - 2.0 * z2)) <= 1e-12 * np.max(np.abs(z))
    assert np.all(z1[0] == 0.0)


def test_paper_mode_converges_to_matched():
    gaps = []
    for n in (40, 80, 160):
        P = lotka_volterra()
        mesh = build_uniform_mesh(N_NODES)
        u = ControlField.zeros(PseudoTimeGrid(n), 2, N_NODES)
        state = solve_state(P, mesh, u, TAU)
        pp = solve_costate(P, mesh, state, u, TAU, mode="paper")
        pm = solve_costate(P, mesh, state, u, TAU, mode="matched")
        gaps.append(np.max(np.abs(pp.values[0] - pm.values[0])) / np.max(np.abs(pm.values[0])))
    assert gaps[2] < gaps[1] < gaps[0]
    assert gaps[1] / gaps[2] >= 1.5


def test_rejects_bad_inputs():
    P, mesh, grid, u, state = lv_case()
    with pytest.raises(ValueError):
        solve_costate(P, mesh, state, u, TAU, mode="exact")
    with pytest.raises(ValueError):
        solve_costate(P, mesh, state, u, TAU, mode="paper", scheme="RK4")
    other = ControlField.zeros(PseudoTimeGrid(20), 2, N_NODES)
    with pytest.raises(DimensionMismatch):
        solve_costate(P, mesh, state, other, TAU)
    phys, _ = solve_original_time(P, mesh, u.values, TAU, N_STEPS)
    with pytest.raises(DimensionMismatch):
        solve_costate(P, mesh, phys, u, TAU)
    with pytest.raises(DimensionMismatch):
        apply_k(P, mesh, state, u, TAU, np.zeros((N_STEPS, 3, N_NODES)))


def test_costate_csv(tmp_path):
    P, mesh, grid, u, state = lv_case()
    p = solve_costate(P, mesh, state, u, TAU)
    path, jpath = write_costate_csv(tmp_path / "costate.csv", p, mesh, every=10)
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 5 * 2 * N_NODES
    with open(jpath) as fh:
        jump = list(csv.DictReader(fh))
    assert float(jump[0]["max_abs_jump"]) == pytest.approx(np.max(np.abs(p.jump)))
