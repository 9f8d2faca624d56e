import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from snlab import FlatNorm, StableNorm, StableNormTable, TableOptions, build_table, euclidean, rotational
from snlab.stable_norm import (
    StableNormError,
    defect_beta,
    defect_sigma,
    forward_derivative_at_lattice,
    sigma_at,
)

FAST = TableOptions(restarts=2, floquet=False)
PHI = (math.sqrt(5) - 1) / 2


@pytest.fixture(scope="module")
def euc10():
    return build_table(euclidean(), 10, FAST)


@pytest.fixture(scope="module")
def drift3():
    return build_table(FlatNorm(np.eye(2), np.array([0.5, 0.0])), 3, FAST)


@pytest.fixture(scope="module")
def rot_norm():
    return StableNorm(rotational(2.0, 1.0))


def test_euclidean_table(euc10):
    assert euc10.entry((3, 4)).sigma == pytest.approx(5.0, abs=1e-5)
    for z, s, _ in euc10.points():
        assert s == pytest.approx(math.hypot(*z), rel=2e-5)
    assert not euc10.failures
    assert euc10.diagnostics["mirrored"] > 0


def test_drift_table(drift3):
    assert drift3.sigma((1, 0)) == pytest.approx(1.5, abs=1e-6)
    assert drift3.sigma((-1, 0)) == pytest.approx(0.5, abs=1e-6)
    # no mirroring for a non-reversible metric
    assert drift3.diagnostics["mirrored"] == 0
    for z, s, _ in drift3.points():
        assert s == pytest.approx(math.hypot(*z) + 0.5 * z[0], rel=2e-5)


def test_table_sigma_of_multiples(euc10):
    assert euc10.sigma((6, 8)) == pytest.approx(10.0, abs=1e-5)
    with pytest.raises(KeyError):
        euc10.sigma((11, 1))


def test_table_subadditive(euc10, drift3):
    assert euc10.subadditivity_violations() == []
    assert drift3.subadditivity_violations() == []


def test_q_too_small():
    with pytest.raises(StableNormError):
        build_table(euclidean(), 2)


def test_json_round_trip(drift3, tmp_path):
    p = tmp_path / "t.json"
    drift3.to_json(p)
    back = StableNormTable.from_json(p)
    assert back.entries.keys() == drift3.entries.keys()
    for k, e in drift3.entries.items():
        assert back.entry(k).sigma == e.sigma
    d = json.loads(p.read_text())
    with pytest.raises(StableNormError):
        StableNormTable.from_dict(d, euclidean())
    d["schema"] = "other"
    with pytest.raises(StableNormError):
        StableNormTable.from_dict(d)


def test_workers_do_not_change_table():
    a = build_table(euclidean(), 3, FAST, workers=1)
    b = build_table(euclidean(), 3, FAST, workers=2)
    assert a.to_json() == b.to_json()


def test_sandwich_golden(euc10):
    xi = (1.0, PHI)
    sw = sigma_at(euc10, xi)
    assert sw.contains(math.hypot(*xi))
    assert sw.width < 1e-2 * math.hypot(*xi)
    assert not sw.exact


def test_sandwich_collapses_at_table_point(euc10):
    sw = sigma_at(euc10, (2.0, 1.0))
    assert sw.exact
    assert sw.lower == pytest.approx(math.sqrt(5), abs=1e-9)
    assert sw.upper == pytest.approx(math.sqrt(5), abs=1e-9)


@given(st.floats(0, 2 * math.pi), st.floats(0.1, 10.0))
def test_sandwich_homogeneous(euc10, th, a):
    xi = (math.cos(th), math.sin(th))
    sw = sigma_at(euc10, xi)
    sw2 = sigma_at(euc10, (a * xi[0], a * xi[1]))
    assert sw2.lower == pytest.approx(a * sw.lower, rel=1e-12)
    assert sw2.upper == pytest.approx(a * sw.upper, rel=1e-12)
    assert sw.lower <= sw.upper
    assert sw.contains(1.0, slack=1e-9)


def test_sandwich_errors(euc10):
    with pytest.raises(StableNormError):
        sigma_at(euc10, (0.0, 0.0))


def test_on_demand_sandwich_rotational(rot_norm):
    from snlab import oracle_sigma

    for xi in [(1.0, PHI), (0.3, 1.0), (-1.0, 0.2)]:
        sw = rot_norm.sandwich(xi, max_norm=16)
        assert sw.contains(oracle_sigma(rot_norm.spec, xi), slack=1e-9)
        assert sw.scaled(3.0).upper == pytest.approx(3 * sw.upper)


def test_forward_derivative_euclidean():
    fd = forward_derivative_at_lattice(euclidean(), (1, 0), (0, 1), (2, 4, 8, 16))
    for n, d, _ in fd.trace:
        assert d == pytest.approx(math.sqrt(n * n + 1) - n, abs=1e-5)
    assert fd.trace[-1][1] == pytest.approx(0.031220, abs=1e-6)
    assert fd.monotone and fd.reliable
    assert abs(fd.value) <= fd.error + 1e-6


def test_forward_derivative_scaled_flat():
    spec = FlatNorm(4.0 * np.eye(2), np.zeros(2))
    fd = forward_derivative_at_lattice(spec, (1, 1), (-1, 1), (4, 8, 16, 32))
    assert abs(fd.value) <= fd.error + 1e-6
    assert fd.value == pytest.approx(0.0, abs=2e-3)


def test_forward_derivative_rotational(rot_norm):
    fd = forward_derivative_at_lattice(rot_norm, (1, 0), (0, 1), (2, 4, 8, 16))
    d = [t[1] for t in fd.trace]
    assert all(b <= a + 1e-6 for a, b in zip(d, d[1:]))
    assert fd.value > 0.5
    assert fd.value == pytest.approx(2 * math.sqrt(2) / math.pi, abs=1e-6)


def test_forward_derivative_errors(rot_norm):
    with pytest.raises(StableNormError):
        forward_derivative_at_lattice(rot_norm, (2, 0), (0, 1))
    with pytest.raises(StableNormError):
        forward_derivative_at_lattice(rot_norm, (1, 0), (0, 1), (0,))


def test_defect_sigma_examples(rot_norm):
    d = defect_sigma(euclidean(), (1, 0), (0, 0.1), n_list=(4, 8, 16, 32))
    assert d.value == pytest.approx(math.sqrt(1.01) - 1, abs=2e-4)
    assert d.value >= -d.error
    d = defect_sigma(euclidean(), (1.0, PHI), (0.3, 0.3 * PHI))
    assert abs(d.value) <= d.error + 1e-9
    d = defect_sigma(rot_norm, (1, 0), (0, 0.1), n_list=(4, 8, 16))
    assert d.value < 1e-4
    assert d.value >= -d.error


def test_defect_beta_examples():
    xi = np.array([1.0, PHI]) / math.hypot(1.0, PHI)
    v = 0.1 * np.array([-xi[1], xi[0]])
    d = defect_beta(euclidean(), xi, v, max_norm=64)
    assert d.value == pytest.approx(5e-3, abs=max(d.error, 1e-5))
    assert d.value >= -d.error
    b = 0.5
    d = defect_beta(euclidean(), xi, 0.2 * xi, max_norm=64)
    assert d.value == pytest.approx(b * 0.04, abs=max(d.error, 1e-5))
    with pytest.raises(StableNormError):
        defect_beta(euclidean(), (0.0, 0.0), (0.1, 0.0))


@settings(max_examples=10)
@given(st.floats(0, 2 * math.pi), st.floats(0.01, 0.2), st.floats(0, 2 * math.pi))
def test_defect_nonnegative_flat(th, r, ph):
    xi = (math.cos(th), math.sin(th))
    v = (r * math.cos(ph), r * math.sin(ph))
    d = defect_beta(euclidean(), xi, v, max_norm=32)
    assert d.value >= -d.error - 1e-12
