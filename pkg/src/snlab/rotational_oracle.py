"""Exact unit circle of the stable norm of a rotational metric.

For ``g = f(x_2) <., .>`` the unit circle ``{sigma = 1}`` is the union of the
curves

    t -> +-(I_t(t), 1) / I_f(t),   |t| <= sqrt(min f),

with ``I_t = int_0^1 t / sqrt(f - t^2)`` and ``I_f = int_0^1 f / sqrt(f - t^2)``.
Near ``|t| = sqrt(min f)`` the integrands concentrate at the minima of ``f``;
they are integrated after the substitution ``x = x_min + eps sinh(w)`` with
``eps`` the width of the near-singular peak.  The distance to the singular
value is carried explicitly as ``gap = min f - t^2`` so that points
arbitrarily close to the flat directions keep full relative accuracy.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import IntegrationWarning, quad
from scipy.optimize import brentq

from .metrics import FourierSeries, MetricError, Rotational


class OracleError(MetricError):
    pass


def _series(f):
    if isinstance(f, Rotational):
        return f.series
    if isinstance(f, FourierSeries) and f.dimension == 1:
        return f
    raise OracleError("the oracle needs a 1-D factor or a Rotational metric")


@dataclass
class _Factor:
    """Cached data of a 1-D factor: minima, partition of the period."""

    series: FourierSeries
    fmin: float = field(init=False)
    xmin: float = field(init=False)
    minima: list = field(init=False)

    def __post_init__(self):
        self.xmin, self.fmin = self.series.minimize()
        if self.fmin <= 0:
            raise OracleError(f"factor is not positive: min f = {self.fmin:.6g}")
        mins = self.series.local_minima()
        if not any(abs(((m - self.xmin + 0.5) % 1.0) - 0.5) < 1e-9 for m in mins):
            mins.append(self.xmin)
        self.minima = sorted(m % 1.0 for m in mins)

    def excess(self, anchor, y):
        """``f(anchor + y) - min f`` without cancellation near the global minima."""
        return self.series.diff_from(anchor, y) + (float(self.series(anchor)) - self.fmin)

    def pieces(self):
        """Intervals ``(anchor, length, sign)`` covering one period.

        Each interval starts at a local minimum (``sign=+1``) or ends at one
        (``sign=-1``), and is split at the interior maximum in between.
        """
        mins = self.minima
        out = []
        for i, a in enumerate(mins):
            b = mins[(i + 1) % len(mins)] + (1.0 if i + 1 == len(mins) else 0.0)
            xs = np.linspace(a, b, 257)[1:-1]
            m = float(xs[np.argmax(self.series(xs))]) if len(xs) else 0.5 * (a + b)
            out.append((a, m - a, +1))
            out.append((b, b - m, -1))
        return out


def _integrals(fac, gap, need=("inv", "f")):
    """``int 1/sqrt(f - t^2)``, ``int f/sqrt(f - t^2)`` and ``int sqrt(f - t^2)``.

    ``t^2 = min f - gap``; the keys are ``"inv"``, ``"f"`` and ``"sqrt"``.
    Quadrature warnings are folded into the returned error estimates.
    """
    res = {k: 0.0 for k in need}
    errs = {k: 0.0 for k in need}
    for anchor, length, sign in fac.pieces():
        curv = max(float(fac.series.hess(anchor)), 1e-12)
        eps = math.sqrt(2.0 * max(gap, 1e-300) / curv)
        eps = min(eps, length)
        wmax = math.asinh(length / eps)

        def den(w):
            y = sign * eps * math.sinh(w)
            # excess is >= 0 exactly; round-off may leave it at -1e-17
            return max(fac.excess(anchor, y), 0.0) + gap, eps * math.cosh(w), anchor + y

        def g_inv(w):
            d, jac, _ = den(w)
            return jac / math.sqrt(d)

        def g_f(w):
            d, jac, x = den(w)
            return jac * float(fac.series(x)) / math.sqrt(d)

        def g_sqrt(w):
            d, jac, _ = den(w)
            return jac * math.sqrt(d)

        for key, fn in (("inv", g_inv), ("f", g_f), ("sqrt", g_sqrt)):
            if key in need:
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore", IntegrationWarning)
                    v, e = quad(fn, 0.0, wmax, epsabs=0.0, epsrel=1e-13, limit=200)
                res[key] += v
                errs[key] += e
    return res, errs


@dataclass(frozen=True)
class OraclePoint:
    t: float
    point: np.ndarray
    error: float


def _point_from_gap(fac, gap, sign_t, branch=1):
    t = sign_t * math.sqrt(max(fac.fmin - gap, 0.0))
    (vals, errs) = _integrals(fac, gap)
    I_inv, I_f = vals["inv"], vals["f"]
    p = branch * np.array([t * I_inv, 1.0]) / I_f
    rel = (errs["inv"] / I_inv + errs["f"] / I_f)
    return OraclePoint(t, p, float(rel * np.linalg.norm(p)))


def oracle_point(f, t, branch=1):
    """Point of ``{sigma = 1}`` at parameter ``t`` (upper branch for ``branch=1``)."""
    fac = _Factor(_series(f))
    r = math.sqrt(fac.fmin)
    if abs(t) > r:
        raise OracleError(f"|t| = {abs(t):.6g} exceeds sqrt(min f) = {r:.6g}")
    if abs(t) == r:
        return OraclePoint(t, np.array([math.copysign(1.0 / r, t) * branch, 0.0]), 0.0)
    gap = (r - abs(t)) * (r + abs(t))
    return _point_from_gap(fac, gap, math.copysign(1.0, t), branch)


@dataclass
class OracleCurve:
    factor: FourierSeries
    min_f: float
    t: np.ndarray
    points: np.ndarray  # closed convex polyline ordered counterclockwise
    errors: np.ndarray

    def radial_deviation(self, radius):
        return float(np.max(np.abs(np.linalg.norm(self.points, axis=1) - radius)))

    def is_convex(self):
        P = self.points
        e = np.roll(P, -1, axis=0) - P
        cross = e[:, 0] * np.roll(e, -1, axis=0)[:, 1] - e[:, 1] * np.roll(e, -1, axis=0)[:, 0]
        return bool(np.all(cross >= -1e-13) or np.all(cross <= 1e-13))


def oracle_unit_circle(f, M=64):
    """``{sigma = 1}`` sampled at cosine-spaced ``t`` on both branches."""
    if M < 32:
        raise OracleError("need M >= 32 samples")
    fac = _Factor(_series(f))
    r = math.sqrt(fac.fmin)
    theta = np.linspace(0.0, math.pi, M + 1)
    ts = -r * np.cos(theta)  # clustered toward +-sqrt(min f)
    upper = []
    errs = []
    for j, t in enumerate(ts):
        if j == 0 or j == M:
            upper.append(np.array([math.copysign(1.0 / r, t), 0.0]))
            errs.append(0.0)
            continue
        # gap = r^2 - t^2 = r^2 sin^2(theta), exact in the parametrization
        gap = (r * math.sin(theta[j])) ** 2
        op = _point_from_gap(fac, gap, math.copysign(1.0, t) if t else 1.0)
        upper.append(op.point)
        errs.append(op.error)
    upper = np.array(upper)
    # counterclockwise: upper branch from +e1 side to -e1 side, then lower branch
    up = upper[::-1]
    pts = np.vstack([up, -up[1:-1]])
    t_all = np.concatenate([ts[::-1], ts[::-1][1:-1]])
    e_all = np.concatenate([np.array(errs)[::-1], np.array(errs)[::-1][1:-1]])
    return OracleCurve(_series(f), fac.fmin, t_all, pts, e_all)


def _I_inv_from_u(fac, u):
    """``t * int 1/sqrt(f - t^2)`` with ``gap = min f * exp(-u)``."""
    gap = fac.fmin * math.exp(-u)
    t = math.sqrt(fac.fmin * -math.expm1(-u))
    vals, _ = _integrals(fac, gap, need=("inv",))
    return t * vals["inv"], gap


# beyond gap = min f exp(-U_FLAT) the parameter t equals sqrt(min f) in double precision
U_FLAT = 36.0


def oracle_sigma(f, xi):
    """Stable norm of the rotational metric at ``xi``.

    With ``xi_2 != 0`` the parameter solves ``t int 1/sqrt(f - t^2) = xi_1/xi_2``
    and ``sigma(xi) = t |xi_1| + g(t) |xi_2|`` with ``g(t) = int sqrt(f - t^2)``.
    This is the maximum of ``t |xi_1| + g(t) |xi_2|`` over ``t``, so an error
    in ``t`` enters only at second order, and ``g`` stays regular as ``t``
    reaches ``sqrt(min f)``.
    """
    xi = np.asarray(xi, dtype=float)
    if not np.any(xi):
        raise OracleError("sigma is evaluated at a nonzero vector")
    fac = _Factor(_series(f))
    a, b = abs(float(xi[0])), abs(float(xi[1]))
    if b == 0.0:
        return math.sqrt(fac.fmin) * a
    if a == 0.0:
        vals, _ = _integrals(fac, fac.fmin, need=("sqrt",))
        return b * vals["sqrt"]

    def flat():
        # t = sqrt(min f) to double precision
        vals, _ = _integrals(fac, 0.0, need=("sqrt",))
        return math.sqrt(fac.fmin) * a + b * vals["sqrt"]

    if b < 1e-250 * a:
        return flat()
    ratio = a / b

    def g(u):
        return _I_inv_from_u(fac, u)[0] - ratio

    hi = 1.0
    while g(hi) < 0:
        if hi >= U_FLAT:
            return flat()
        hi = min(2.0 * hi, U_FLAT)
    u = brentq(g, 0.0, hi, xtol=1e-15, rtol=1e-15, maxiter=200)
    gap = fac.fmin * math.exp(-u)
    t = math.sqrt(fac.fmin * -math.expm1(-u))
    vals, _ = _integrals(fac, gap, need=("sqrt",))
    return t * a + b * vals["sqrt"]


def g_identity_residual(f, t):
    """Relative mismatch of ``g - t g' = int f / sqrt(f - t^2)`` with ``g = int sqrt(f - t^2)``."""
    s = _series(f)
    fac = _Factor(s)
    gap = fac.fmin - t * t
    vals, _ = _integrals(fac, gap)
    g, _ = quad(lambda x: math.sqrt(float(s(x)) - t * t), 0.0, 1.0, epsabs=0, epsrel=1e-13, limit=200)
    gprime = -t * vals["inv"]
    lhs = g - t * gprime
    return abs(lhs - vals["f"]) / vals["f"]


@dataclass
class AlphaLevelSet:
    a: float
    b: np.ndarray
    classes: np.ndarray  # Liouville classes (b, +-int sqrt(2 a f - b^2))
    gradients: np.ndarray  # grad alpha at the upper classes (a = 1/2 normalization)


def alpha_level_set(f, a, M=64):
    """Liouville classes of the invariant graphs ``{H = a, p_1 = b}``.

    Returns points of ``{alpha = a}`` for ``b^2 < 2 a min f`` and, on the upper
    branch, ``grad alpha`` there; the gradients lie on ``{sigma = sqrt(2a)}``.
    """
    if a <= 0:
        raise OracleError("alpha level must be positive")
    s = _series(f)
    fac = _Factor(s)
    bmax = math.sqrt(2 * a * fac.fmin)
    theta = np.linspace(0.0, math.pi, M + 1)[1:-1]
    bs = -bmax * np.cos(theta)
    upper = []
    grads = []
    for b, th in zip(bs, theta):
        integ, _ = quad(lambda x: math.sqrt(2 * a * float(s(x)) - b * b), 0.0, 1.0,
                        epsabs=0, epsrel=1e-13, limit=200)
        upper.append((b, integ))
        # scale to a = 1/2: t = b / sqrt(2a), gap = min f sin^2(theta)
        gap = (math.sqrt(fac.fmin) * math.sin(th)) ** 2
        t = b / math.sqrt(2 * a)
        vals, _ = _integrals(fac, gap)
        grad_half = np.array([t * vals["inv"], 1.0]) / vals["f"]
        grads.append(math.sqrt(2 * a) * grad_half)
    upper = np.array(upper)
    lower = upper * np.array([1.0, -1.0])
    return AlphaLevelSet(a, bs, np.vstack([upper, lower[::-1]]), np.array(grads))
