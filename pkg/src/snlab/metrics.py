"""Finsler metric families on the 2-torus with exact derivatives.

Three families are supported:

* ``FlatNorm``: a translation-invariant Randers norm ``|v|_G + <d, v>``.
* ``Conformal``: ``sqrt(f(x)) |v|`` with ``f`` a 2-D trigonometric polynomial.
* ``Rotational``: ``sqrt(f(x_2)) |v|`` with ``f`` a 1-D trigonometric polynomial.

All evaluators are vectorized: ``x`` and ``v`` are arrays of shape ``(n, 2)``
(or ``(2,)`` for a single sample).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

TWO_PI = 2.0 * math.pi


class MetricError(ValueError):
    """Raised for invalid metric data or evaluation outside the domain."""


@dataclass(frozen=True)
class FourierSeries:
    """Finite real Fourier series on the unit torus of dimension 1 or 2.

    ``terms`` holds ``(k, cos_amp, sin_amp)`` with ``k`` an integer tuple of
    length ``dimension``; the series is
    ``constant + sum a cos(2 pi k.x) + b sin(2 pi k.x)``.
    """

    dimension: int
    terms: tuple = ()
    constant: float = 0.0

    def __post_init__(self):
        if self.dimension not in (1, 2):
            raise MetricError("FourierSeries dimension must be 1 or 2")
        clean = []
        for k, a, b in self.terms:
            k = tuple(int(ki) for ki in np.atleast_1d(k))
            if len(k) != self.dimension:
                raise MetricError(f"frequency {k} does not match dimension {self.dimension}")
            clean.append((k, float(a), float(b)))
        object.__setattr__(self, "terms", tuple(clean))
        object.__setattr__(self, "constant", float(self.constant))

    @classmethod
    def cosine(cls, constant, *amps, dimension=1):
        """``constant + sum_j amps[j] cos(2 pi (j+1) x)`` in one variable."""
        if dimension != 1:
            raise MetricError("cosine() builds 1-D series only")
        return cls(1, tuple(((j + 1,), a, 0.0) for j, a in enumerate(amps)), constant)

    @property
    def _k(self):
        return np.array([t[0] for t in self.terms], dtype=float).reshape(-1, self.dimension)

    @property
    def _ab(self):
        return np.array([[t[1], t[2]] for t in self.terms], dtype=float).reshape(-1, 2)

    def _phase(self, x):
        x = np.asarray(x, dtype=float)
        if self.dimension == 1:
            x = x[..., None]
        return TWO_PI * x @ self._k.T, x

    def __call__(self, x):
        if not self.terms:
            return np.full(np.shape(x)[: np.ndim(x) - (self.dimension == 2)], self.constant)
        ph, _ = self._phase(x)
        ab = self._ab
        return self.constant + np.cos(ph) @ ab[:, 0] + np.sin(ph) @ ab[:, 1]

    def grad(self, x):
        """Gradient; shape ``x.shape`` for 1-D input, ``(..., 2)`` for 2-D."""
        x = np.asarray(x, dtype=float)
        if not self.terms:
            return np.zeros_like(x)
        ph, _ = self._phase(x)
        ab = self._ab
        # d/dphase of a cos + b sin = -a sin + b cos
        dph = -np.sin(ph) * ab[:, 0] + np.cos(ph) * ab[:, 1]
        g = TWO_PI * dph @ self._k
        return g[..., 0] if self.dimension == 1 else g

    def hess(self, x):
        """Second derivative; scalar field for 1-D, ``(..., 2, 2)`` for 2-D."""
        x = np.asarray(x, dtype=float)
        if not self.terms:
            return np.zeros(x.shape + ((2,) if self.dimension == 2 else ()))
        ph, _ = self._phase(x)
        ab = self._ab
        d2 = -(np.cos(ph) * ab[:, 0] + np.sin(ph) * ab[:, 1])
        k = self._k
        h = TWO_PI**2 * np.einsum("...m,mi,mj->...ij", d2, k, k)
        return h[..., 0, 0] if self.dimension == 1 else h

    def diff_from(self, x0, y):
        """``f(x0 + y) - f(x0)`` for a 1-D series without cancellation error."""
        if self.dimension != 1:
            raise MetricError("diff_from is only defined for 1-D series")
        y = np.asarray(y, dtype=float)
        out = np.zeros_like(y)
        for (k,), a, b in self.terms:
            w = TWO_PI * k
            half = np.sin(0.5 * w * y)
            mid = w * (x0 + 0.5 * y)
            out += -2.0 * a * np.sin(mid) * half + 2.0 * b * np.cos(mid) * half
        return out

    def amplitude_sum(self):
        return sum(math.hypot(a, b) for _, a, b in self.terms)

    def gradient_bound(self):
        """Upper bound for the l1 norm of the gradient."""
        return sum(TWO_PI * sum(abs(ki) for ki in k) * math.hypot(a, b) for k, a, b in self.terms)

    def minimize(self, grid=256):
        """Global minimum ``(argmin, min)`` by grid scan plus Newton polishing."""
        return self._extremum(grid, sign=1.0)

    def maximize(self, grid=256):
        xm, fm = self._extremum(grid, sign=-1.0)
        return xm, fm

    def _extremum(self, grid, sign):
        if self.dimension == 1:
            xs = np.arange(grid) / grid
            vals = sign * self(xs)
            cand = np.argsort(vals)[:4]
            best = None
            for i in cand:
                x = xs[i]
                for _ in range(50):
                    g, h = self.grad(x), self.hess(x)
                    if sign * h <= 0:
                        break
                    step = g / h
                    x = x - step
                    if abs(step) < 1e-15:
                        break
                if abs(x - xs[i]) > 1.0 / grid:
                    x = xs[i]
                v = sign * float(self(x))
                if best is None or v < best[1]:
                    best = (float(x % 1.0), v)
            return best[0], sign * best[1]
        g1 = np.arange(grid) / grid
        X = np.stack(np.meshgrid(g1, g1, indexing="ij"), axis=-1).reshape(-1, 2)
        vals = sign * self(X)
        i = int(np.argmin(vals))
        x = X[i].copy()
        for _ in range(50):
            g, h = self.grad(x), self.hess(x)
            try:
                step = np.linalg.solve(sign * h, sign * g)
            except np.linalg.LinAlgError:
                break
            if np.linalg.norm(step) > 2.0 / grid:
                break
            x = x - step
            if np.linalg.norm(step) < 1e-15:
                break
        v = float(self(x))
        if sign * v > vals[i]:
            x, v = X[i], sign * float(vals[i])
        return np.mod(x, 1.0), v

    def local_minima(self, grid=512):
        """All local minima of a 1-D series on [0, 1), polished."""
        if self.dimension != 1:
            raise MetricError("local_minima is only defined for 1-D series")
        xs = np.arange(grid) / grid
        v = self(xs)
        idx = np.nonzero((v <= np.roll(v, 1)) & (v < np.roll(v, -1)))[0]
        out = []
        for i in idx:
            x = xs[i]
            for _ in range(60):
                h = self.hess(x)
                if h <= 0:
                    break
                step = self.grad(x) / h
                x -= step
                if abs(step) < 1e-16:
                    break
            out.append(float(x % 1.0))
        return sorted(set(round(x, 14) for x in out))


@dataclass(frozen=True)
class ValidationReport:
    valid: bool
    min_f: float | None = None
    max_f: float | None = None
    certified_lower: float | None = None
    randers_margin: float | None = None
    message: str = ""


class MetricSpec:
    """Common interface of the metric families."""

    variant = "abstract"
    reversible = True

    def F(self, x, v):
        raise NotImplementedError

    def dF(self, x, v):
        raise NotImplementedError

    def lagrangian(self, x, v):
        raise NotImplementedError

    def validate(self) -> ValidationReport:
        raise NotImplementedError

    def lower_constant(self):
        """``a`` with ``F(x, v) >= a |v|`` for all ``x``, ``v``."""
        raise NotImplementedError

    def upper_constant(self):
        raise NotImplementedError

    def describe(self) -> dict:
        raise NotImplementedError


def _check_velocity(v):
    v = np.asarray(v, dtype=float)
    if np.any(np.all(v == 0.0, axis=-1)):
        raise MetricError("zero velocity is outside the domain of F")
    return v


@dataclass(frozen=True, eq=False)
class FlatNorm(MetricSpec):
    """``F(v) = sqrt(v^T G v) + <d, v>``, independent of the base point."""

    matrix: np.ndarray = field(default_factory=lambda: np.eye(2))
    drift: np.ndarray = field(default_factory=lambda: np.zeros(2))

    variant = "flat"

    def __post_init__(self):
        G = np.array(self.matrix, dtype=float).reshape(2, 2)
        d = np.array(self.drift, dtype=float).reshape(2)
        object.__setattr__(self, "matrix", G)
        object.__setattr__(self, "drift", d)

    @property
    def reversible(self):
        return not np.any(self.drift)

    def randers_margin(self):
        Ginv = np.linalg.inv(self.matrix)
        return 1.0 - math.sqrt(max(float(self.drift @ Ginv @ self.drift), 0.0))

    def validate(self):
        G = self.matrix
        if not np.allclose(G, G.T) or np.linalg.eigvalsh(0.5 * (G + G.T)).min() <= 0:
            return ValidationReport(False, message="matrix G is not symmetric positive definite")
        m = self.randers_margin()
        if m <= 0:
            return ValidationReport(
                False, randers_margin=m,
                message=f"drift violates the Randers condition: margin {m:.6g} <= 0")
        return ValidationReport(True, randers_margin=m)

    def _norm(self, v):
        return np.sqrt(np.einsum("...i,ij,...j->...", v, self.matrix, v))

    def F(self, x, v):
        v = _check_velocity(v)
        return self._norm(v) + v @ self.drift

    def dF(self, x, v):
        v = _check_velocity(v)
        n = self._norm(v)
        Fv = (v @ self.matrix) / n[..., None] + self.drift
        return np.zeros_like(v), Fv

    def lagrangian(self, x, v):
        v = _check_velocity(v)
        n = self._norm(v)
        F = n + v @ self.drift
        Gv = v @ self.matrix
        Fv = Gv / n[..., None] + self.drift
        Fvv = self.matrix / n[..., None, None] - np.einsum("...i,...j->...ij", Gv, Gv) / n[..., None, None] ** 3
        Lvv = np.einsum("...i,...j->...ij", Fv, Fv) + F[..., None, None] * Fvv
        return 0.5 * F**2, np.zeros_like(v), F[..., None] * Fv, Lvv

    def lower_constant(self):
        lam = np.linalg.eigvalsh(self.matrix)
        return math.sqrt(lam[0]) * self.randers_margin()

    def upper_constant(self):
        lam = np.linalg.eigvalsh(self.matrix)
        return math.sqrt(lam[-1]) + float(np.linalg.norm(self.drift))

    def describe(self):
        return {"variant": "flat", "matrix": self.matrix.tolist(), "drift": self.drift.tolist()}


class _ConformalBase(MetricSpec):
    """``F = sqrt(f(x)) |v|``; subclasses supply ``factor`` evaluators."""

    reversible = True

    def factor(self, x):
        raise NotImplementedError

    def factor_grad(self, x):
        raise NotImplementedError

    def factor_hess(self, x):
        raise NotImplementedError

    def F(self, x, v):
        v = _check_velocity(v)
        return np.sqrt(self.factor(x)) * np.linalg.norm(v, axis=-1)

    def dF(self, x, v):
        v = _check_velocity(v)
        f = self.factor(x)
        sf = np.sqrt(f)
        nv = np.linalg.norm(v, axis=-1)
        Fx = (0.5 * nv / sf)[..., None] * self.factor_grad(x)
        Fv = (sf / nv)[..., None] * v
        return Fx, Fv

    def lagrangian(self, x, v):
        v = np.asarray(v, dtype=float)
        f = self.factor(x)
        v2 = np.einsum("...i,...i->...", v, v)
        L = 0.5 * f * v2
        Lx = (0.5 * v2)[..., None] * self.factor_grad(x)
        Lv = f[..., None] * v
        Lvv = f[..., None, None] * np.eye(2)
        return L, Lx, Lv, Lvv

    def lower_constant(self):
        return math.sqrt(self.min_f)

    def upper_constant(self):
        return math.sqrt(self.max_f)

    def _validate_series(self, series):
        min_grid = _grid_min(series)
        h = 1.0 / 256
        certified = min_grid - series.gradient_bound() * 0.5 * h
        _, fmin = series.minimize()
        _, fmax = series.maximize()
        if certified <= 0:
            return ValidationReport(
                False, min_f=fmin, max_f=fmax, certified_lower=certified,
                message=f"conformal factor not certified positive: lower bound {certified:.6g} <= 0 (min f = {fmin:.6g})")
        return ValidationReport(True, min_f=fmin, max_f=fmax, certified_lower=certified)


def _grid_min(series, n=256):
    g = np.arange(n) / n
    if series.dimension == 1:
        return float(series(g).min())
    X = np.stack(np.meshgrid(g, g, indexing="ij"), axis=-1).reshape(-1, 2)
    return float(series(X).min())


@dataclass(frozen=True, eq=False)
class Conformal(_ConformalBase):
    """``F(x, v) = sqrt(f(x)) |v|`` with a 2-D factor ``f``."""

    series: FourierSeries = None

    variant = "conformal"

    def __post_init__(self):
        if self.series is None or self.series.dimension != 2:
            raise MetricError("Conformal metric needs a 2-D FourierSeries")

    def factor(self, x):
        return self.series(np.asarray(x, dtype=float))

    def factor_grad(self, x):
        return self.series.grad(np.asarray(x, dtype=float))

    def factor_hess(self, x):
        return self.series.hess(np.asarray(x, dtype=float))

    @cached_property
    def min_f(self):
        return self.series.minimize()[1]

    @cached_property
    def max_f(self):
        return self.series.maximize()[1]

    def validate(self):
        return self._validate_series(self.series)

    def describe(self):
        return {"variant": "conformal", "constant": self.series.constant,
                "fourier": [list(k) + [a, b] for k, a, b in self.series.terms]}


@dataclass(frozen=True, eq=False)
class Rotational(_ConformalBase):
    """Rotational metric ``g_x(v, w) = f(x_2) <v, w>``."""

    series: FourierSeries = None

    variant = "rotational"

    def __post_init__(self):
        if self.series is None or self.series.dimension != 1:
            raise MetricError("Rotational metric needs a 1-D FourierSeries")

    def factor(self, x):
        return self.series(np.asarray(x, dtype=float)[..., 1])

    def factor_grad(self, x):
        x = np.asarray(x, dtype=float)
        g = np.zeros_like(x)
        g[..., 1] = self.series.grad(x[..., 1])
        return g

    def factor_hess(self, x):
        x = np.asarray(x, dtype=float)
        h = np.zeros(x.shape + (2,))
        h[..., 1, 1] = self.series.hess(x[..., 1])
        return h

    @cached_property
    def min_f(self):
        return self.series.minimize()[1]

    @cached_property
    def max_f(self):
        return self.series.maximize()[1]

    def validate(self):
        return self._validate_series(self.series)

    def describe(self):
        return {"variant": "rotational", "constant": self.series.constant,
                "fourier": [[k[0], a, b] for k, a, b in self.series.terms]}


def euclidean():
    return FlatNorm(np.eye(2), np.zeros(2))


def rotational(constant, *amps):
    """Rotational metric with ``f(s) = constant + sum amps[j] cos(2 pi (j+1) s)``."""
    return Rotational(FourierSeries.cosine(constant, *amps))


def eval_F(spec, x, v):
    return spec.F(x, v)


def eval_dF(spec, x, v):
    return spec.dF(x, v)


def eval_lagrangian(spec, x, v):
    return spec.lagrangian(x, v)


def validate_spec(spec, strict=False):
    """Check positivity / Randers invariants; raise with ``strict=True``."""
    report = spec.validate()
    if strict and not report.valid:
        raise MetricError(report.message)
    return report


def spec_hash(spec):
    """Stable short hash of the metric description."""
    import hashlib
    import json

    blob = json.dumps(spec.describe(), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def spec_from_dict(d):
    """Inverse of ``describe()``."""
    variant = d.get("variant")
    if variant == "flat":
        return FlatNorm(np.array(d.get("matrix", np.eye(2)), dtype=float),
                        np.array(d.get("drift", (0.0, 0.0)), dtype=float))
    if variant == "conformal":
        terms = tuple(((int(t[0]), int(t[1])), t[2], t[3]) for t in d.get("fourier", ()))
        return Conformal(FourierSeries(2, terms, d.get("constant", 0.0)))
    if variant == "rotational":
        terms = []
        for t in d.get("fourier", ()):
            if len(t) == 4:
                if int(t[0]) != 0:
                    raise MetricError(f"rotational factor depends on x_2 only; got frequency {t[:2]}")
                t = t[1:]
            terms.append(((int(t[0]),), t[1], t[2]))
        return Rotational(FourierSeries(1, tuple(terms), d.get("constant", 0.0)))
    raise MetricError(f"unknown metric variant {variant!r}")
