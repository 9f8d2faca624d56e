import numpy as np
import pytest
from hypothesis import given, strategies as st

from snlab import Conformal, FlatNorm, FourierSeries, euclidean, rotational
from snlab.geodesic_flow import (
    GeodesicState,
    classify_monodromy,
    flow_with_jacobian,
    integrate_geodesic,
    linearize_along,
    liouville_determinant,
    monodromy_of_closed,
)
from snlab.loop_minimizer import init_loop
from snlab.metrics import MetricError

ROT = rotational(2.0, 1.0)
CONF = Conformal(FourierSeries(2, (((0, 1), 0.1, 0.0),), 2.0))
CONF2 = Conformal(FourierSeries(2, (((1, 0), 0.3, 0.0), ((1, 1), 0.0, 0.2)), 2.0))
ANISO = FlatNorm(np.array([[2.0, 0.3], [0.3, 1.0]]), np.zeros(2))
DRIFT = FlatNorm(np.eye(2), np.array([0.5, 0.0]))
BUILTIN = [euclidean(), ANISO, DRIFT, ROT, CONF2]


def test_euclidean_straight_line():
    tr = integrate_geodesic(euclidean(), GeodesicState((0, 0), (1, 0)), 1.0)
    assert np.allclose(tr.x[-1], [1.0, 0.0], atol=1e-12)
    assert np.allclose(tr.v[-1], [1.0, 0.0], atol=1e-12)


def test_invariant_circle():
    tr = integrate_geodesic(ROT, GeodesicState((0, 0.5), (1, 0)), 5.0)
    assert np.max(np.abs(tr.x[:, 1] - 0.5)) < 1e-10


def test_conformal_energy_drift():
    tr = integrate_geodesic(CONF, GeodesicState((0.1, 0.2), (0.6, 0.8)), 10.0, 1e-3)
    assert tr.energy_drift < 1e-8


@pytest.mark.parametrize("spec", BUILTIN, ids=["euc", "aniso", "drift", "rot", "conf"])
def test_energy_conservation_long(spec):
    tr = integrate_geodesic(spec, GeodesicState((0.13, 0.71), (0.3, 0.9)), 20.0, 1e-3)
    assert tr.energy_drift <= 1e-7


def test_zero_velocity_rejected():
    with pytest.raises(MetricError):
        integrate_geodesic(ROT, GeodesicState((0, 0), (0, 0)), 1.0)


@pytest.mark.parametrize("spec", [euclidean(), DRIFT], ids=["euc", "drift"])
def test_flat_fundamental_matrix(spec):
    t = 1.7
    tr = integrate_geodesic(spec, GeodesicState((0.2, 0.3), (0.6, 0.8)), t, 1e-2)
    Phi = linearize_along(spec, tr)
    assert np.allclose(Phi[:2, :2], np.eye(2), atol=1e-10)
    assert np.allclose(Phi[2:, :2], 0.0, atol=1e-10)
    assert np.allclose(Phi[2:, 2:], np.eye(2), atol=1e-10)
    if spec.reversible:
        assert np.allclose(Phi[:2, 2:], t * np.eye(2), atol=1e-10)
    else:
        # x-independent metric: the upper-right block grows linearly in t
        half = linearize_along(spec, integrate_geodesic(spec, tr.state(0), t / 2, 1e-2))
        assert np.allclose(Phi[:2, 2:], 2 * half[:2, 2:], atol=1e-9)


def test_jacobian_matches_finite_difference():
    x0, v0, T = np.array([0.0, 0.5]), np.array([1.0, 0.0]), 1.0
    _, Phi = flow_with_jacobian(ROT, GeodesicState(x0, v0), T, 1e-3)
    y0 = np.concatenate([x0, v0])
    h = 1e-6
    J = np.zeros((4, 4))
    for i in range(4):
        e = np.zeros(4)
        e[i] = h
        a = flow_with_jacobian(ROT, GeodesicState((y0 + e)[:2], (y0 + e)[2:]), T, 1e-3)[0]
        b = flow_with_jacobian(ROT, GeodesicState((y0 - e)[:2], (y0 - e)[2:]), T, 1e-3)[0]
        J[:, i] = (np.concatenate([a.x, a.v]) - np.concatenate([b.x, b.v])) / (2 * h)
    assert np.max(np.abs(J - Phi)) <= 1e-4 * np.max(np.abs(Phi))


@pytest.mark.parametrize("spec", [ROT, CONF2, ANISO], ids=["rot", "conf", "aniso"])
def test_liouville_determinant(spec):
    s0 = GeodesicState((0.1, 0.3), (0.4, 0.7))
    end, Phi = flow_with_jacobian(spec, s0, 3.0, 1e-3)
    pred = liouville_determinant(spec, s0.x, s0.v, end.x, end.v)
    assert abs(np.linalg.det(Phi) - pred) <= 1e-6


def test_euclidean_parabolic():
    rep = monodromy_of_closed(euclidean(), init_loop((1, 0), (0, 0.3), 32))
    assert rep.classification == "parabolic"
    assert abs(rep.mu - 1) < 1e-6
    assert rep.residual <= 1e-6


def test_rotational_minimum_circle_hyperbolic():
    rep = monodromy_of_closed(ROT, init_loop((1, 0), (0, 0.5), 64))
    assert rep.classification == "hyperbolic"
    assert rep.mu.real > 1.0 + 1e-4
    assert rep.lyapunov > 0
    assert rep.residual <= 1e-6


def test_rotational_maximum_circle_elliptic():
    rep = monodromy_of_closed(ROT, init_loop((1, 0), (0, 0.0), 64))
    assert rep.classification == "elliptic"
    assert abs(abs(rep.mu) - 1) < 1e-4
    assert abs(rep.mu.imag) > 1e-3


def test_classify_monodromy_patterns():
    def block(mu):
        return np.diag([1.0, 1.0, mu, 1.0 / mu])

    assert classify_monodromy(block(3.0), 1.0).classification == "hyperbolic"
    th = 0.4
    R = np.eye(4)
    R[2:, 2:] = [[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]]
    assert classify_monodromy(R, 1.0).classification == "elliptic"
    assert classify_monodromy(np.diag([2.0, 1.0, 3.0, 1.0 / 3.0]), 1.0).classification == "degenerate"
    rep = classify_monodromy(block(np.e), 2.0)
    assert rep.lyapunov == pytest.approx(0.5)


@given(st.floats(0, 1), st.floats(0, 1), st.floats(0, 2 * np.pi))
def test_flow_reversal(a, b, th):
    T = 1.5
    s0 = GeodesicState((a, b), (np.cos(th), np.sin(th)))
    end, _ = flow_with_jacobian(ROT, s0, T, 1e-2)
    back, _ = flow_with_jacobian(ROT, GeodesicState(end.x, -end.v), T, 1e-2)
    assert np.allclose(back.x, s0.x, atol=1e-6)
    assert np.allclose(back.v, -s0.v, atol=1e-6)


def test_step_halving_order():
    s0 = GeodesicState((0.1, 0.2), (0.6, 0.8))
    ends = [integrate_geodesic(CONF2, s0, 2.0, h).x[-1] for h in (0.04, 0.02, 0.01)]
    ratio = np.linalg.norm(ends[0] - ends[1]) / np.linalg.norm(ends[1] - ends[2])
    assert 8 <= ratio <= 32


def test_trajectory_csv(tmp_path):
    tr = integrate_geodesic(ROT, GeodesicState((0, 0.5), (1, 0)), 0.01, 1e-3)
    p = tmp_path / "tr.csv"
    tr.to_csv(p)
    lines = p.read_text().splitlines()
    assert lines[0] == "t,x1,x2,v1,v2,F"
    assert len(lines) == len(tr) + 1
