import json

import numpy as np
import pytest

from oracles import QuadraticProblem, quadratic_tracking_case
from hybridpar.controls import ControlField
from hybridpar.diagnostics import (check_pontryagin, dump_json, fd_audit, hamiltonian_trace,
                                   project_critical, second_order_probe)
from hybridpar.fem1d import build_uniform_mesh
from hybridpar.optimize import BBOptions, run_bb
from hybridpar.problem import heat_problem, lotka_volterra
from hybridpar.reduced import eval_cost, eval_gradient
from hybridpar.timemap import PseudoTimeGrid, TimeMap

ALPHA = 0.5
N_NODES = 21
N_STEPS = 20
COERCIVITY_TOL = 0.05
TAUTAU_TOL = 1e-4


class Clocked(QuadraticProblem):
    """Running cost plus the physical time itself, so D_t l = 1."""

    def ell(self, phase, t, x, y, u):
        return super().ell(phase, t, x, y, u) + t

    def ell_t(self, phase, t, x, y, u):
        return np.ones(x.size)


def tracking_problem(**kw):
    return QuadraticProblem(alpha=ALPHA, gamma=4.0, yd=lambda x: 2 * np.sin(np.pi * x),
                            y0=lambda x: np.sin(np.pi * x), **kw)


def solved(P, mesh, u, tau, mode="matched"):
    G = eval_gradient(P, mesh, u, tau, mode=mode)
    return G, G.state, G.costate


def boxed_lq_optimum():
    case = quadratic_tracking_case(alpha=ALPHA)
    P = case.build(bounds=(0.0, 2.0))
    mesh = build_uniform_mesh(N_NODES)
    grid = PseudoTimeGrid(N_STEPS)
    rep = run_bb(P, mesh, ControlField.zeros(grid, 1, N_NODES), 0.5, BBOptions(mode="matched"))
    return P, mesh, rep


def test_trivial_problem_satisfies_conditions():
    P = heat_problem()
    mesh = build_uniform_mesh(N_NODES)
    u = ControlField.zeros(PseudoTimeGrid(N_STEPS), 1, N_NODES)
    G, y, p = solved(P, mesh, u, 0.05)
    rep = check_pontryagin(P, mesh, y, p, u, 0.05)
    assert np.all(rep.duh == 0.0)
    assert rep.inactive_max == 0.0
    assert rep.lower_violation == rep.upper_violation == 0.0


def test_boxed_lq_optimum_passes():
    P, mesh, opt = boxed_lq_optimum()
    G = opt.gradient
    rep = check_pontryagin(P, mesh, G.state, G.costate, opt.u, opt.tau)
    assert rep.inactive_max <= 1e-6
    assert rep.lower_violation == 0.0 and rep.upper_violation == 0.0
    assert 0.0 < rep.active_fraction < 1.0
    assert rep.summary()["upper_active_fraction"] == pytest.approx(rep.active_fraction)


def test_injected_violation_is_detected():
    # u = 0 sits on the lower bound while D_u h = alpha u - g = -g < 0 pushes it up
    P, mesh, opt = boxed_lq_optimum()
    u = ControlField.zeros(opt.u.grid, 1, N_NODES)
    G, y, p = solved(P, mesh, u, opt.tau)
    rep = check_pontryagin(P, mesh, y, p, u, opt.tau)
    assert np.all(rep.lower_active)
    assert rep.lower_violation == pytest.approx(np.max(P.g(mesh.nodes)), rel=1e-12)
    assert rep.upper_violation == 0.0


def test_a_delta_nesting():
    P = lotka_volterra()
    mesh = build_uniform_mesh(N_NODES)
    u = ControlField.zeros(PseudoTimeGrid(N_STEPS), 2, N_NODES)
    G, y, p = solved(P, mesh, u, 14.0)
    sets = [check_pontryagin(P, mesh, y, p, u, 14.0, delta=d).in_A_delta for d in (0.0, 1e-4, 1e-2, 1.0)]
    for small, large in zip(sets, sets[1:]):
        assert np.all(large <= small)


def test_critical_cone_membership():
    P, mesh, opt = boxed_lq_optimum()
    G = opt.gradient
    rep = check_pontryagin(P, mesh, G.state, G.costate, opt.u, opt.tau, delta=1e-3)
    v = project_critical(np.random.default_rng(0).standard_normal(opt.u.values.shape), rep)
    assert np.all(v[rep.in_A_delta] == 0.0)
    assert np.all(v[rep.lower_active] >= 0.0)
    assert np.all(v[rep.upper_active] <= 0.0)
    assert np.array_equal(project_critical(v, rep), v)


def test_zero_problem_hamiltonian():
    P = heat_problem()
    mesh = build_uniform_mesh(N_NODES)
    u = ControlField.zeros(PseudoTimeGrid(N_STEPS), 1, N_NODES)
    G, y, p = solved(P, mesh, u, 0.05)
    tr = hamiltonian_trace(P, mesh, y, p, u, 0.05)
    assert np.all(tr.H == 0.0) and np.all(tr.xi == 0.0)
    assert tr.constancy_ratio() == 0.0


@pytest.mark.parametrize("mode", ["matched", "paper"])
def test_xi_integrates_explicit_time_dependence(mode):
    # D_t H = int_Omega 1 = 1, so xi at the nodes is the physical time
    P = Clocked(alpha=ALPHA)
    mesh = build_uniform_mesh(N_NODES)
    grid = PseudoTimeGrid(N_STEPS)
    u = ControlField.constant(grid, 1, N_NODES, 0.3)
    G, y, p = solved(P, mesh, u, 0.8, mode)
    tr = hamiltonian_trace(P, mesh, y, p, u, 0.8)
    assert tr.xi_nodes[0] == 0.0
    np.testing.assert_allclose(tr.xi_nodes, TimeMap(0.8, P.T).pi(grid.nodes), atol=1e-12)
    assert np.all(np.diff(tr.xi) > 0)
    assert np.max(np.abs(tr.compensated - tr.compensated[0])) <= 1e-12


def test_autonomous_flag_zeroes_xi():
    P = Clocked(alpha=ALPHA)
    mesh = build_uniform_mesh(N_NODES)
    u = ControlField.constant(PseudoTimeGrid(N_STEPS), 1, N_NODES, 0.3)
    G, y, p = solved(P, mesh, u, 0.8)
    tr = hamiltonian_trace(P, mesh, y, p, u, 0.8, autonomous=True)
    assert np.all(tr.xi == 0.0)
    np.testing.assert_array_equal(tr.compensated, tr.H)


def test_matched_hamiltonian_constant_within_each_phase():
    # tau is not optimal here, so only the jump at the switch remains
    P = tracking_problem()
    mesh = build_uniform_mesh(N_NODES)
    grid = PseudoTimeGrid(40)
    u = ControlField.constant(grid, 1, N_NODES, 0.2)
    G, y, p = solved(P, mesh, u, 1.3)
    tr = hamiltonian_trace(P, mesh, y, p, u, 1.3)
    h = grid.switch_index
    assert np.ptp(tr.H[:h]) <= 1e-12 * tr.scale
    assert np.ptp(tr.H[h:]) <= 1e-12 * tr.scale
    assert tr.H_minus != tr.H_plus


def test_paper_hamiltonian_deviation_is_first_order():
    P = tracking_problem(kappa=ALPHA)
    mesh = build_uniform_mesh(N_NODES)
    devs = []
    for n in (40, 80):
        rep = run_bb(P, mesh, ControlField.zeros(PseudoTimeGrid(n), 1, N_NODES), 1.3,
                     BBOptions(mode="paper", max_iters=500))
        G = rep.gradient
        devs.append(hamiltonian_trace(P, mesh, G.state, G.costate, rep.u, rep.tau).max_deviation)
    assert devs[0] / devs[1] == pytest.approx(2.0, rel=0.15)


def test_probe_is_deterministic():
    P = lotka_volterra()
    mesh = build_uniform_mesh(N_NODES)
    u = ControlField.zeros(PseudoTimeGrid(N_STEPS), 2, N_NODES)
    a = second_order_probe(P, mesh, u, 14.0, n_dirs=3, seed=5)
    b = second_order_probe(P, mesh, u, 14.0, n_dirs=3, seed=5)
    np.testing.assert_array_equal(a.quadratic, b.quadratic)
    c = second_order_probe(P, mesh, u, 14.0, n_dirs=3, seed=6)
    assert not np.array_equal(a.quadratic, c.quadratic)


def test_tau_tau_curvature_against_finite_differences():
    P = lotka_volterra()
    mesh = build_uniform_mesh(N_NODES)
    u = ControlField.constant(PseudoTimeGrid(N_STEPS), 2, N_NODES, 0.1)
    tau, eps = 14.0, 1e-3
    zero = np.zeros(u.values.shape)
    rep = second_order_probe(P, mesh, u, tau, directions=[(zero, 1.0)])
    fd = (eval_cost(P, mesh, u, tau + eps) - 2 * eval_cost(P, mesh, u, tau)
          + eval_cost(P, mesh, u, tau - eps)) / eps ** 2
    assert rep.quadratic[0] == pytest.approx(fd, rel=TAUTAU_TOL)


def test_lq_coercivity_ratios():
    case = quadratic_tracking_case(alpha=ALPHA)
    P = case.build()
    mesh = build_uniform_mesh(N_NODES)
    grid = PseudoTimeGrid(N_STEPS)
    u_star = ControlField(grid, np.broadcast_to(case.reference["u_star"](mesh.nodes),
                                                (N_STEPS, 1, N_NODES)))
    rep = second_order_probe(P, mesh, u_star, 1.0, n_dirs=6, seed=1)
    np.testing.assert_allclose(rep.ratios, case.reference["coercivity"], rtol=COERCIVITY_TOL)


def test_fd_audit_matched_passes():
    P = lotka_volterra()
    mesh = build_uniform_mesh(N_NODES)
    u = ControlField.constant(PseudoTimeGrid(N_STEPS), 2, N_NODES, 0.1)
    rep = fd_audit(P, mesh, u, 14.0, mode="matched", n_dirs=4, eps_sweep=(1e-3, 1e-5))
    assert rep.passed
    s = rep.summary()
    assert len(s["entries"]) == 4 and len(s["eps_sweep"]) == 2


def test_json_reports_are_reproducible(tmp_path):
    P = lotka_volterra()
    mesh = build_uniform_mesh(N_NODES)
    u = ControlField.zeros(PseudoTimeGrid(N_STEPS), 2, N_NODES)
    paths = []
    for name in ("a.json", "b.json"):
        rep = second_order_probe(P, mesh, u, 14.0, n_dirs=2, seed=3)
        paths.append(tmp_path / name)
        rep.to_json(paths[-1], header={"config_hash": "x"})
    assert paths[0].read_bytes() == paths[1].read_bytes()
    doc = json.loads(paths[0].read_text())
    assert doc["header"] == {"config_hash": "x"} and doc["n_dirs"] == 2


def test_dump_json_converts_numpy(tmp_path):
    path = tmp_path / "x.json"
    dump_json({"a": np.float64(1.5), "b": np.arange(3), "c": np.bool_(True)}, path)
    assert json.loads(path.read_text()) == {"a": 1.5, "b": [0, 1, 2], "c": True}
