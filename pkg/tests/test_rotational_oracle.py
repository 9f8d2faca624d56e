import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from snlab import FourierSeries, rotational
from snlab.loop_minimizer import sigma_of_class
from snlab.rotational_oracle import (
    OracleError,
    alpha_level_set,
    g_identity_residual,
    oracle_point,
    oracle_sigma,
    oracle_unit_circle,
)

F_TEST = FourierSeries.cosine(2.0, 1.0)


def _int_sqrt_f(f):
    return quad(lambda s: math.sqrt(float(f(s))), 0.0, 1.0, epsabs=0, epsrel=1e-13)[0]


@pytest.mark.parametrize("c", [1.0, 2.5])
@pytest.mark.parametrize("t", [0.0, 0.3, -0.7])
def test_constant_factor_point(c, t):
    p = oracle_point(FourierSeries.cosine(c), t).point
    assert np.allclose(p, np.array([t, math.sqrt(c - t * t)]) / c, atol=1e-10)


def test_t_zero_point():
    p = oracle_point(F_TEST, 0.0).point
    assert p[0] == 0.0
    assert p[1] == pytest.approx(1.0 / _int_sqrt_f(F_TEST), rel=1e-10)


def test_endpoint_limit_and_domain():
    assert np.allclose(oracle_point(F_TEST, 1.0).point, [1.0, 0.0])
    # the second coordinate vanishes only logarithmically in the gap
    ys = [oracle_point(F_TEST, 1.0 - 10.0 ** -k).point[1] for k in (2, 4, 8, 12)]
    assert all(a > b > 0 for a, b in zip(ys, ys[1:]))
    with pytest.raises(OracleError):
        oracle_point(F_TEST, 1.01)


def test_point_error_estimate():
    for t in np.linspace(-0.999, 0.999, 9):
        assert oracle_point(F_TEST, t).error < 1e-8


def test_unit_circle_constant_factor():
    c = oracle_unit_circle(FourierSeries.cosine(1.0), M=64)
    assert c.radial_deviation(1.0) < 1e-9
    c4 = oracle_unit_circle(FourierSeries.cosine(4.0), M=32)
    assert c4.radial_deviation(0.5) < 1e-9


def test_unit_circle_convex_symmetric():
    c = oracle_unit_circle(F_TEST, M=64)
    assert c.is_convex()
    assert c.points[c.points[:, 1] > 1e-12].shape[0] > 0
    # reversible metric: -p is on the curve whenever p is
    P = c.points
    for p in P[::7]:
        assert np.min(np.linalg.norm(P + p, axis=1)) < 1e-12
    with pytest.raises(OracleError):
        oracle_unit_circle(F_TEST, M=16)


def test_sigma_near_flat_direction():
    # sigma(1, eps) = 1 + eps int sqrt(f - min f) for small eps
    slope = 2 * math.sqrt(2) / math.pi
    for eps in (1e-300, 1e-8, 1e-3):
        assert oracle_sigma(F_TEST, (1.0, eps)) == pytest.approx(1.0 + slope * eps, rel=1e-13)


def test_sigma_examples():
    assert oracle_sigma(F_TEST, (0.0, 1.0)) == pytest.approx(_int_sqrt_f(F_TEST), rel=1e-10)
    assert oracle_sigma(F_TEST, (1.0, 0.0)) == pytest.approx(1.0, abs=1e-14)
    assert oracle_sigma(F_TEST, (-3.0, 0.0)) == pytest.approx(3.0)
    with pytest.raises(OracleError):
        oracle_sigma(F_TEST, (0.0, 0.0))


def test_sigma_matches_curve():
    c = oracle_unit_circle(F_TEST, M=64)
    for p in c.points[1:-1:5]:
        assert oracle_sigma(F_TEST, p) == pytest.approx(1.0, abs=1e-8)


@settings(max_examples=15)
@given(st.floats(-1.0, 1.0), st.floats(-1.0, 1.0), st.floats(0.1, 10.0))
def test_sigma_homogeneous_even(a, b, lam):
    if math.hypot(a, b) < 1e-3:
        return
    s = oracle_sigma(F_TEST, (a, b))
    assert oracle_sigma(F_TEST, (lam * a, lam * b)) == pytest.approx(lam * s, rel=1e-9)
    assert oracle_sigma(F_TEST, (-a, -b)) == pytest.approx(s, rel=1e-12)


def test_sigma_triangle_inequality():
    rng = np.random.default_rng(3)
    for _ in range(8):
        u, v = rng.normal(size=(2, 2))
        assert oracle_sigma(F_TEST, u + v) <= oracle_sigma(F_TEST, u) + oracle_sigma(F_TEST, v) + 1e-10


@pytest.mark.parametrize("t", [0.0, 0.4, 0.9, 0.999])
def test_g_identity(t):
    assert g_identity_residual(F_TEST, t) < 1e-7


def test_alpha_level_set_constant():
    L = alpha_level_set(FourierSeries.cosine(1.0), 0.5, M=48)
    assert np.allclose(np.linalg.norm(L.classes, axis=1), 1.0, atol=1e-10)


def test_alpha_level_set_scaling():
    a = alpha_level_set(F_TEST, 0.5, M=32)
    b = alpha_level_set(F_TEST, 2.0, M=32)
    assert np.allclose(b.classes, 2.0 * a.classes, rtol=1e-10, atol=1e-12)


def test_alpha_gradients_on_unit_sphere():
    L = alpha_level_set(F_TEST, 0.5, M=48)
    for g in L.gradients:
        assert oracle_sigma(F_TEST, g) == pytest.approx(1.0, abs=1e-6)


def test_sigma_matches_minimizer():
    spec = rotational(2.0, 1.0)
    r = sigma_of_class(spec, (1, 1))
    assert r.sigma == pytest.approx(oracle_sigma(spec, (1.0, 1.0)), rel=2e-3)
