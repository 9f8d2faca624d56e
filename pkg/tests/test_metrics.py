import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from snlab.metrics import (Conformal, FlatNorm, FourierSeries, MetricError, eval_dF, eval_F,
                           eval_lagrangian, euclidean, rotational, spec_from_dict, spec_hash,
                           validate_spec)

finite = st.floats(-3, 3, allow_nan=False)
vel = st.tuples(finite, finite).filter(lambda v: math.hypot(*v) > 1e-3)


def conformal():
    return Conformal(FourierSeries(2, (((1, 0), 0.1, 0.0), ((1, 1), 0.05, 0.02)), 2.0))


def builtin():
    return [euclidean(), FlatNorm(np.array([[2.0, 0.3], [0.3, 1.0]]), np.array([0.2, -0.1])),
            rotational(2.0, 1.0), conformal()]


def test_euclidean_examples():
    assert eval_F(euclidean(), (0, 0), (3, 4)) == pytest.approx(5.0, abs=1e-15)
    Fx, Fv = eval_dF(euclidean(), (0, 0), (3, 4))
    np.testing.assert_allclose(Fv, (0.6, 0.8), atol=1e-15)
    np.testing.assert_array_equal(Fx, (0, 0))
    L, Lx, Lv, Lvv = eval_lagrangian(euclidean(), (0, 0), (1, 0))
    assert L == 0.5
    np.testing.assert_allclose(Lvv, np.eye(2), atol=1e-15)


def test_rotational_and_drift_examples(rot, drift):
    assert eval_F(rot, (0.3, 0.5), (1, 0)) == pytest.approx(1.0, abs=1e-15)
    Fx, _ = eval_dF(rot, (0.0, 0.0), (0, 1))
    assert abs(Fx[1]) < 1e-15
    assert eval_F(drift, (0, 0), (1, 0)) == pytest.approx(1.5)
    assert eval_F(drift, (0, 0), (-1, 0)) == pytest.approx(0.5)
    const = rotational(3.0)
    np.testing.assert_allclose(eval_lagrangian(const, (0.1, 0.2), (1, 2))[3], 3 * np.eye(2))


def test_zero_velocity_rejected(rot):
    with pytest.raises(MetricError):
        eval_F(rot, (0, 0), (0, 0))
    with pytest.raises(MetricError):
        eval_dF(euclidean(), (0, 0), (0, 0))


def test_validate_examples():
    rep = validate_spec(rotational(2.0, 1.0))
    assert rep.valid and rep.min_f == pytest.approx(1.0)
    assert not validate_spec(rotational(0.5, 1.0)).valid
    bad = FlatNorm(np.eye(2), np.array([1.0, 0.0]))
    rep = validate_spec(bad)
    assert not rep.valid and rep.randers_margin == pytest.approx(0.0)
    with pytest.raises(MetricError, match="Randers"):
        validate_spec(bad, strict=True)


def test_conformal_hessian_grid():
    spec = Conformal(FourierSeries(2, (((1, 0), 0.1, 0.0),), 2.0))
    g = (np.arange(64) + 0.5) / 64
    X = np.stack(np.meshgrid(g, g), -1).reshape(-1, 2)
    V = np.tile([1.0, 0.3], (len(X), 1))
    H = spec.lagrangian(X, V)[3]
    assert np.linalg.eigvalsh(H).min() > 1.8


@given(x=st.tuples(finite, finite), v=vel, a=st.sampled_from([0.5, 2.0, 7.0]))
def test_homogeneity_euler_periodicity(x, v, a):
    for spec in builtin():
        F = float(spec.F(np.array(x), np.array(v)))
        assert abs(float(spec.F(np.array(x), a * np.array(v))) - a * F) <= 1e-12 * a * F
        _, Fv = spec.dF(np.array(x), np.array(v))
        assert abs(float(Fv @ np.array(v)) - F) <= 1e-10 * max(1.0, F)
        shifted = float(spec.F(np.array(x) + np.array([2.0, -3.0]), np.array(v)))
        assert shifted == pytest.approx(F, rel=1e-13)
        L = spec.lagrangian(np.array(x), np.array(v))[0]
        assert float(spec.lagrangian(np.array(x), a * np.array(v))[0]) == pytest.approx(a * a * L, rel=1e-12)


@given(x=st.tuples(finite, finite), v=vel)
def test_derivatives_match_central_differences(x, v):
    h = 1e-4
    x, v = np.array(x), np.array(v)
    for spec in builtin():
        Fx, Fv = spec.dF(x, v)
        L, Lx, Lv, Lvv = spec.lagrangian(x, v)
        scale = float(spec.F(x, v))
        for i in range(2):
            e = np.zeros(2)
            e[i] = h
            fdx = (spec.F(x + e, v) - spec.F(x - e, v)) / (2 * h)
            fdv = (spec.F(x, v + e) - spec.F(x, v - e)) / (2 * h)
            assert abs(Fx[i] - fdx) <= 1e-6 * max(1.0, scale)
            assert abs(Fv[i] - fdv) <= 1e-6 * max(1.0, scale)
            lvv = (spec.lagrangian(x, v + e)[2] - spec.lagrangian(x, v - e)[2]) / (2 * h)
            np.testing.assert_allclose(Lvv[:, i], lvv, atol=1e-6 * max(1.0, scale))
        np.testing.assert_allclose(Lvv, Lvv.T, atol=1e-14)
        assert np.linalg.eigvalsh(Lvv).min() > 0


def test_fourier_series_derivatives():
    s = FourierSeries(2, (((1, 2), 0.3, -0.2), ((0, 1), 0.1, 0.05)), 1.5)
    x = np.array([0.23, 0.71])
    h = 1e-5
    g = s.grad(x)
    for i in range(2):
        e = np.zeros(2)
        e[i] = h
        # central-difference truncation h^2 f'''/6 is about 1e-7 here
        assert g[i] == pytest.approx((s(x + e) - s(x - e)) / (2 * h), rel=1e-6)
    H = s.hess(x)
    np.testing.assert_allclose(H, H.T)
    assert float(s(x + 1.0)) == pytest.approx(float(s(x)), abs=1e-13)


def test_describe_round_trip():
    for spec in builtin():
        back = spec_from_dict(spec.describe())
        assert spec_hash(back) == spec_hash(spec)
        x, v = np.array([0.3, 0.8]), np.array([1.0, -0.4])
        assert float(back.F(x, v)) == float(spec.F(x, v))
    with pytest.raises(MetricError):
        spec_from_dict({"variant": "rotational", "constant": 2.0, "fourier": [(1, 0, 0.5, 0.0)]})
    with pytest.raises(MetricError):
        spec_from_dict({"variant": "hyperbolic"})
