import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from snlab import FlatNorm, euclidean, rotational
from snlab.loop_minimizer import (
    DiscreteLoop,
    LoopError,
    MinimizeOptions,
    discrete_energy,
    discrete_length,
    find_periodic_minimizers,
    init_loop,
    loop_distance,
    minimize_loop,
    sigma_of_class,
)

ROT = rotational(2.0, 1.0)
ROT_SIGMA_01 = quad(lambda s: math.sqrt(math.cos(2 * math.pi * s) + 2), 0, 1, epsabs=0, epsrel=1e-13)[0]


def test_init_loop_examples():
    L = init_loop((1, 0), (0, 0), 4)
    assert np.allclose(L.points, [[0, 0], [0.25, 0], [0.5, 0], [0.75, 0]])
    V = init_loop((0, 1), (0.3, 0), 16)
    assert np.allclose(V.points[:, 0], 0.3)
    D = init_loop((2, 1), (0, 0), 6)
    assert np.allclose(D.points, np.arange(6)[:, None] / 6 * np.array([2, 1]))
    assert np.allclose(D.closed()[-1] - D.closed()[0], [2, 1])


def test_zero_class_rejected():
    with pytest.raises(ValueError):
        init_loop((0, 0))
    with pytest.raises(LoopError):
        find_periodic_minimizers(euclidean(), (2, 0))


def test_energy_length_examples():
    L = init_loop((3, 4), N=32)
    assert discrete_length(euclidean(), L) == pytest.approx(5.0, abs=1e-12)
    assert discrete_energy(euclidean(), L) == pytest.approx(12.5, abs=1e-12)
    assert discrete_length(rotational(4.0), init_loop((1, 0), N=16)) == pytest.approx(2.0, abs=1e-12)


def test_reparametrization_energy_bound():
    s = np.arange(32) / 32
    warp = s + 0.08 * np.sin(2 * np.pi * s)
    L = DiscreteLoop((3, 4), warp[:, None] * np.array([3.0, 4.0]))
    assert discrete_length(euclidean(), L) == pytest.approx(5.0, abs=1e-12)
    assert discrete_energy(euclidean(), L) >= 12.5


def test_sigma_examples():
    r = minimize_loop(euclidean(), init_loop((3, 4), (0.1, 0.2), 32))
    assert r.sigma == pytest.approx(5.0, abs=1e-6)
    r = minimize_loop(ROT, init_loop((1, 0), (0, 0.3), 32))
    assert r.sigma == pytest.approx(1.0, abs=1e-5)
    assert np.allclose(np.mod(r.loop.points[:, 1], 1.0), 0.5, atol=1e-4)
    r = minimize_loop(ROT, init_loop((0, 1), (0.3, 0), 32))
    assert r.sigma == pytest.approx(ROT_SIGMA_01, abs=1e-8)


def test_result_record_and_history():
    r = minimize_loop(ROT, init_loop((1, 1), N=16))
    rec = r.as_record()
    assert rec["z"] == [1, 1] and rec["converged"] is True
    sig = [s for _, s in r.history]
    assert all(b <= a + 1e-12 for a, b in zip(sig, sig[1:]))
    # constant speed: length^2 = 2 energy
    assert r.sigma ** 2 == pytest.approx(2 * r.energy, rel=1e-6)


def test_periodic_minimizer_counts():
    e = find_periodic_minimizers(euclidean(), (1, 0), restarts=8)
    assert e.count == 8
    assert all(o.sigma == pytest.approx(1.0, abs=1e-10) for o in e.orbits)
    r = find_periodic_minimizers(ROT, (1, 0), restarts=8)
    assert r.count == 1
    assert r.best.sigma == pytest.approx(1.0, abs=1e-8)
    v = find_periodic_minimizers(ROT, (0, 1), restarts=8)
    assert v.count == 8


def test_loop_distance_translation():
    a = init_loop((1, 0), (0, 0.2), 32)
    assert loop_distance(a, a.translate((3, -2))) < 1e-12
    assert loop_distance(a, a.translate((0, 0.1))) == pytest.approx(0.1, abs=1e-9)


@settings(max_examples=6)
@given(st.integers(-3, 3), st.integers(-3, 3))
def test_translation_invariance(w1, w2):
    L = init_loop((1, 1), (0.1, 0.37), 32)
    a = minimize_loop(ROT, L)
    b = minimize_loop(ROT, L.translate((w1, w2)))
    assert a.sigma == pytest.approx(b.sigma, abs=1e-10)


@pytest.mark.parametrize("z", [(1, 0), (1, 1), (0, 1)])
def test_iterate_homogeneity(z):
    s1 = sigma_of_class(ROT, z).sigma
    for k in (2, 3):
        kz = (k * z[0], k * z[1])
        assert sigma_of_class(ROT, kz).sigma == pytest.approx(k * s1, abs=2e-5 * k)


def test_iterate_of_loop():
    L = init_loop((1, 2), (0.1, 0.1), 16)
    assert discrete_length(ROT, L.iterate(3), "spectral") == pytest.approx(
        3 * discrete_length(ROT, L, "spectral"), rel=1e-12)
    R = L.reversed()
    assert R.z.tuple() == (-1, -2)


def test_lower_bound_soundness():
    rng = np.random.default_rng(5)
    aniso = FlatNorm(np.array([[2.0, 0.3], [0.3, 1.0]]), np.zeros(2))
    for z in [(1, 0), (2, 1), (1, -3)]:
        off = rng.uniform(size=2)
        r = minimize_loop(ROT, init_loop(z, off, 16))
        assert r.sigma >= math.sqrt(ROT.min_f) * math.hypot(*z) - 1e-10
        r = minimize_loop(aniso, init_loop(z, off, 16))
        zv = np.array(z, float)
        assert r.sigma >= math.sqrt(zv @ aniso.matrix @ zv) - 1e-10


def test_strict_subadditivity():
    s10 = sigma_of_class(ROT, (1, 0)).sigma
    s01 = sigma_of_class(ROT, (0, 1)).sigma
    s11 = sigma_of_class(ROT, (1, 1)).sigma
    assert s10 + s01 - s11 > 1e-3


def test_options_sizes():
    opts = MinimizeOptions(n_schedule=(16, 32, 64), min_points=16)
    assert opts.sizes((1, 0)) == [16, 32, 64]
    assert opts.sizes((3, 4)) == [80, 160, 320]
    with pytest.raises(LoopError):
        minimize_loop(ROT, init_loop((1, 0)), MinimizeOptions(scheme="bogus"))
