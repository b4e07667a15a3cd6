import numpy as np
import pytest

from hybridpar.errors import OutOfRange
from hybridpar.timemap import PseudoTimeGrid, TimeMap, evaluate

T = 30.0
TAU_PAPER = 13.5919


def test_switch_node_maps_to_tau():
    v = evaluate(TimeMap(TAU_PAPER, T), 1.0)
    assert v.pi == pytest.approx(TAU_PAPER, rel=1e-15)
    assert v.pi_tau == 1.0


def test_end_maps_to_horizon():
    for tau in (0.5, 10.0, 29.0):
        v = evaluate(TimeMap(tau, T), 2.0)
        assert v.pi == pytest.approx(T)
        assert v.pi_tau == 0.0


def test_second_phase_hand_values():
    v = evaluate(TimeMap(10.0, T), 1.5)
    assert v.pi_dot == 20.0
    assert v.pi_dot_tau == -1.0
    assert v.pi_tau == 0.5
    assert v.pi == pytest.approx(20.0)


def test_left_limit_at_switch_and_explicit_phase():
    tm = TimeMap(10.0, T)
    assert evaluate(tm, 1.0).pi_dot == 10.0
    assert evaluate(tm, 1.0, phase=2).pi_dot == 20.0
    assert evaluate(tm, 1.0, phase=2).pi_dot_tau == -1.0


@pytest.mark.parametrize("s", [-0.1, 2.0001])
def test_out_of_range(s):
    with pytest.raises(OutOfRange):
        evaluate(TimeMap(10.0, T), s)


@pytest.mark.parametrize("tau", [0.0, T, -1.0])
def test_tau_must_be_inside_horizon(tau):
    with pytest.raises(OutOfRange):
        TimeMap(tau, T)


def test_integral_of_pi_dot_is_horizon():
    for tau in np.linspace(0.3, 29.7, 11):
        tm = TimeMap(tau, T)
        assert tm.pi_dot(1) * 1.0 + tm.pi_dot(2) * 1.0 == pytest.approx(T)


def test_pi_continuous_and_increasing():
    s = np.linspace(0.0, 2.0, 4001)
    for tau in (0.7, 13.0, 28.0):
        p = TimeMap(tau, T).pi(s)
        assert np.all(np.diff(p) > 0)
        assert abs(float(TimeMap(tau, T).pi(1.0 + 1e-12)) - tau) < 1e-9


def test_pi_tau_matches_central_difference():
    s = np.linspace(0.0, 2.0, 41)
    tau, eps = 12.3, 1e-3
    fd = (TimeMap(tau + eps, T).pi(s) - TimeMap(tau - eps, T).pi(s)) / (2 * eps)
    np.testing.assert_allclose(fd, TimeMap(tau, T).pi_tau(s), atol=1e-10)


def test_inverse_round_trip():
    tm = TimeMap(7.0, T)
    s = np.linspace(0, 2, 17)
    np.testing.assert_allclose(tm.inverse(tm.pi(s)), s, atol=1e-14)


def test_grid_has_node_at_switch():
    g = PseudoTimeGrid(10)
    assert g.ds == pytest.approx(0.2)
    assert g.nodes[g.switch_index] == 1.0
    assert g.phases.tolist() == [1] * 5 + [2] * 5


@pytest.mark.parametrize("n", [0, 3, 7])
def test_grid_rejects_odd_or_tiny(n):
    with pytest.raises(ValueError):
        PseudoTimeGrid(n)
