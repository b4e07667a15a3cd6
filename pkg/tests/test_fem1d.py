import numpy as np
import pytest
from scipy.integrate import trapezoid

from hybridpar.errors import InvalidInterval, InvalidMesh, SingularOperator
from hybridpar.fem1d import (OperatorKind, TriDiagOperator, assemble_mass, assemble_stiffness,
                             build_uniform_mesh, subdomain_weight_vector, tridiag_solve)

SEED = 1234
SOLVE_RTOL = 1e-12
N_RANDOM = 20


def test_uniform_mesh_three_nodes():
    m = build_uniform_mesh(3, 0.0, 1.0)
    np.testing.assert_allclose(m.nodes, [0.0, 0.5, 1.0])
    np.testing.assert_allclose(m.widths, 0.5)
    assert m.dirichlet_mask.tolist() == [True, False, True]


def test_uniform_mesh_paper_size():
    m = build_uniform_mesh(1001)
    assert m.n_nodes == 1001
    np.testing.assert_allclose(m.widths, 0.001, rtol=1e-12)


@pytest.mark.parametrize("args", [(2, 0.0, 1.0), (5, 1.0, 1.0), (5, 1.0, 0.0)])
def test_invalid_mesh(args):
    with pytest.raises(InvalidMesh):
        build_uniform_mesh(*args)


def test_mass_interior_row():
    h = 0.1
    M = assemble_mass(build_uniform_mesh(11))
    assert M.kind is OperatorKind.MASS
    np.testing.assert_allclose([M.sub[5], M.diag[5], M.sup[5]], [h / 6, 2 * h / 3, h / 6])
    np.testing.assert_allclose(M.sub[5] + M.diag[5] + M.sup[5], h)


def test_stiffness_interior_row():
    h = 0.1
    K = assemble_stiffness(build_uniform_mesh(11))
    np.testing.assert_allclose([K.sub[5], K.diag[5], K.sup[5]], [-1 / h, 2 / h, -1 / h])


def test_stiffness_annihilates_linear_functions_inside():
    m = build_uniform_mesh(17, -1.0, 2.0)
    K = assemble_stiffness(m)
    r = K.matvec(3.0 * m.nodes - 0.7)
    np.testing.assert_allclose(r[1:-1], 0.0, atol=1e-12)
    np.testing.assert_allclose(K.matvec(np.ones(m.n_nodes)), 0.0, atol=1e-12)


def test_assembled_operators_are_symmetric():
    m = build_uniform_mesh(9)
    for op in (assemble_mass(m), assemble_stiffness(m)):
        np.testing.assert_array_equal(op.sub[1:], op.sup[:-1])
        D = op.to_dense()
        np.testing.assert_array_equal(D, D.T)


def test_mass_quadratic_form_positive():
    rng = np.random.default_rng(SEED)
    M = assemble_mass(build_uniform_mesh(31))
    for _ in range(N_RANDOM):
        v = rng.standard_normal(31)
        assert v @ M.matvec(v) > 0


def test_stiffness_positive_semidefinite():
    rng = np.random.default_rng(SEED)
    K = assemble_stiffness(build_uniform_mesh(31))
    for _ in range(N_RANDOM):
        v = rng.standard_normal(31)
        assert v @ K.matvec(v) >= -1e-12


def test_dirichlet_elimination_gives_identity_rows():
    m = build_uniform_mesh(7)
    M = assemble_mass(m).with_dirichlet(m.dirichlet_mask)
    D = M.to_dense()
    np.testing.assert_array_equal(D[0], np.eye(7)[0])
    np.testing.assert_array_equal(D[:, -1], np.eye(7)[:, -1])
    assert np.all(np.linalg.eigvalsh(D) > 0)


def test_stiffness_energy_of_sine_converges_at_second_order():
    # exact value: int_0^1 (pi cos(pi x))^2 dx = pi^2 / 2
    errs = []
    for n in (11, 21, 41, 81):
        m = build_uniform_mesh(n)
        v = np.sin(np.pi * m.nodes)
        errs.append(abs(v @ assemble_stiffness(m).matvec(v) - np.pi ** 2 / 2))
    rates = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(rates > 1.9)


def test_tridiag_solve_identity():
    n = 6
    I = TriDiagOperator(np.zeros(n), np.ones(n), np.zeros(n))
    r = np.arange(n, dtype=float)
    np.testing.assert_array_equal(tridiag_solve(I, r), r)


def test_tridiag_solve_inverts_mass():
    rng = np.random.default_rng(SEED)
    M = assemble_mass(build_uniform_mesh(50))
    v = rng.standard_normal(50)
    x = tridiag_solve(M, M.matvec(v))
    assert np.max(np.abs(x - v)) <= SOLVE_RTOL * np.max(np.abs(v)) * 10


def test_tridiag_solve_random_spd_residual():
    rng = np.random.default_rng(SEED)
    for _ in range(N_RANDOM):
        n = 40
        off = rng.uniform(-1, 1, n)
        diag = np.abs(off) + np.abs(np.roll(off, 1)) + rng.uniform(0.5, 2.0, n)
        sub = np.roll(off, 1)
        sub[0] = 0.0
        sup = off.copy()
        sup[-1] = 0.0
        op = TriDiagOperator(sub, diag, sup)
        rhs = rng.standard_normal(n)
        x = tridiag_solve(op, rhs)
        assert np.max(np.abs(op.matvec(x) - rhs)) <= SOLVE_RTOL * np.max(np.abs(rhs))


def test_tridiag_zero_diagonal_raises():
    op = TriDiagOperator(np.zeros(4), np.zeros(4), np.zeros(4))
    with pytest.raises(SingularOperator):
        tridiag_solve(op, np.ones(4))


def test_subdomain_whole_domain_integrates_one():
    m = build_uniform_mesh(13, 0.0, 2.0)
    w = subdomain_weight_vector(m, (0.0, 2.0))
    np.testing.assert_allclose(w @ np.ones(13), 2.0, rtol=1e-14)


def test_subdomain_observation_window_paper_mesh():
    m = build_uniform_mesh(1001)
    w = subdomain_weight_vector(m, (0.48, 0.52))
    np.testing.assert_allclose(w @ np.ones(1001), 0.04, rtol=1e-12)


def test_subdomain_inside_one_element_linear_function():
    m = build_uniform_mesh(5)
    a, b = 0.3, 0.45
    y = 2.0 * m.nodes + 1.0
    exact = (b ** 2 + b) - (a ** 2 + a)
    np.testing.assert_allclose(subdomain_weight_vector(m, (a, b)) @ y, exact, rtol=1e-14)


def test_subdomain_partial_elements_piecewise_linear():
    rng = np.random.default_rng(SEED)
    m = build_uniform_mesh(9)
    y = rng.standard_normal(9)
    a, b = 0.17, 0.71
    # exact integral of the interpolant by fine trapezoid on a refinement that contains all kinks
    xs = np.union1d(np.linspace(a, b, 2001), m.nodes[(m.nodes > a) & (m.nodes < b)])
    exact = trapezoid(np.interp(xs, m.nodes, y), xs)
    np.testing.assert_allclose(subdomain_weight_vector(m, (a, b)) @ y, exact, rtol=1e-12)


@pytest.mark.parametrize("iv", [(0.5, 0.5), (0.6, 0.2), (-0.1, 0.5), (0.5, 1.2)])
def test_subdomain_invalid(iv):
    with pytest.raises(InvalidInterval):
        subdomain_weight_vector(build_uniform_mesh(5), iv)
