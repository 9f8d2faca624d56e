"""Stable-norm tables, certified sandwiches and convexity defects.

Every tabulated value ``sigma(z)`` is the length of a closed geodesic, so the
points ``p = z / sigma(z)`` lie on the unit circle ``{sigma = 1}``.  For ``xi``
in the cone of two angular neighbours ``z_i, z_{i+1}`` convexity gives

* an upper bound from the chord through ``p_i, p_{i+1}``;
* a lower bound from the extensions of the two neighbouring chords
  ``p_{i-1} p_i`` and ``p_{i+1} p_{i+2}``.

Both are linear in the tabulated values: writing ``xi = a z + b w`` the
line through ``z / sigma(z)`` and ``w / sigma(w)`` evaluates to
``a sigma(z) + b sigma(w)`` at ``xi``.
"""

from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from fractions import Fraction
from functools import partial

import numpy as np

from .geodesic_flow import monodromy_of_closed
from .loop_minimizer import (LoopError, MinimizeOptions, find_periodic_minimizers)
from .metrics import spec_from_dict, spec_hash
from .rational_approx import LatticeVector, det, farey_bracket, perp, primitive_vectors, to_fraction

log = logging.getLogger(__name__)

SCHEMA = "snlab/1"
# a direction is treated as the rational one when |det(z, xi)| is below this relative size
SNAP_TOL = 1e-12


class StableNormError(ValueError):
    pass


@dataclass(frozen=True)
class TableOptions:
    restarts: int = 8
    minimize: MinimizeOptions = MinimizeOptions()
    floquet: bool = True
    floquet_step: float = 1e-2
    mirror_reversible: bool = True
    seed: int = 0


@dataclass
class TableEntry:
    z: tuple
    sigma: float
    error: float
    count: int = 1
    converged: bool = True
    N: int = 0
    grad_norm: float = float("nan")
    floquet: dict | None = None
    mirrored: bool = False
    failure: str | None = None
    loop: object = field(default=None, repr=False, compare=False)

    @property
    def ok(self):
        return self.failure is None and math.isfinite(self.sigma)

    def record(self):
        return {"z": list(self.z), "sigma": self.sigma, "error": self.error, "count": self.count,
                "converged": bool(self.converged), "N": self.N, "grad_norm": self.grad_norm,
                "mirrored": self.mirrored, "floquet": self.floquet, "failure": self.failure}

    @classmethod
    def from_record(cls, r):
        return cls(tuple(r["z"]), r["sigma"], r["error"], r.get("count", 1), r.get("converged", True),
                   r.get("N", 0), r.get("grad_norm", float("nan")), r.get("floquet"),
                   r.get("mirrored", False), r.get("failure"))


def _sigma_error(res):
    """Error bar of a refined length: last refinement change, floored by round-off."""
    err = res.refine_error if math.isfinite(res.refine_error) else 1e-6 * res.sigma
    floor = 4e-16 * res.sigma * math.sqrt(res.N)
    if not res.converged:
        err = max(err, 1e-8 * res.sigma)
    return max(err, floor)


def _class_rng(seed, z):
    zig = [(2 * c if c >= 0 else -2 * c - 1) for c in z]
    return np.random.default_rng([int(seed)] + zig)


def compute_entry(spec, z, opts=TableOptions(), floquet=None):
    """Minimize in the primitive class ``z`` and package the result."""
    z = LatticeVector.of(z)
    floquet = opts.floquet if floquet is None else floquet
    try:
        pm = find_periodic_minimizers(spec, z, opts.restarts, opts.minimize, _class_rng(opts.seed, z))
    except (LoopError, ArithmeticError, ValueError) as exc:
        return TableEntry(z.tuple(), float("nan"), float("inf"), 0, False, failure=str(exc))
    best = pm.best
    entry = TableEntry(z.tuple(), best.sigma, _sigma_error(best), pm.count, best.converged,
                       best.N, best.grad_norm, loop=best.loop)
    if floquet:
        try:
            entry.floquet = monodromy_of_closed(spec, best.loop, step=opts.floquet_step).as_record()
        except Exception as exc:  # noqa: BLE001 - recorded per entry
            entry.floquet = {"classification": "failed", "error": str(exc)}
    return entry


def _mirror(entry):
    rec = None
    if entry.floquet is not None:
        rec = dict(entry.floquet)
        rec["z"] = [-c for c in entry.z]
    return TableEntry(tuple(-c for c in entry.z), entry.sigma, entry.error, entry.count,
                      entry.converged, entry.N, entry.grad_norm, rec, True, entry.failure,
                      entry.loop.reversed() if entry.loop is not None else None)


def _angle(z):
    return math.atan2(z[1], z[0])


@dataclass
class StableNormTable:
    spec: object
    Q: float
    entries: dict
    diagnostics: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.entries)

    def entry(self, z):
        return self.entries[tuple(z)]

    def sigma(self, z):
        """Tabulated value at any lattice vector whose primitive is tabulated."""
        k, p = LatticeVector.of(z).reduce()
        e = self.entries.get(p.tuple())
        if e is None or not e.ok:
            raise KeyError(f"class {p.tuple()} not tabulated")
        return k * e.sigma

    def points(self):
        """``(z, sigma, error)`` of the valid entries sorted by angle."""
        good = [e for e in self.entries.values() if e.ok]
        good.sort(key=lambda e: _angle(e.z))
        return [(e.z, e.sigma, e.error) for e in good]

    def unit_points(self):
        return np.array([(z[0] / s, z[1] / s) for z, s, _ in self.points()])

    @property
    def failures(self):
        return [e for e in self.entries.values() if not e.ok]

    def to_dict(self):
        ents = [self.entries[k].record() for k in sorted(self.entries)]
        return {"schema": SCHEMA, "metric": self.spec.describe(), "metric_hash": spec_hash(self.spec),
                "Q": self.Q, "entries": ents, "diagnostics": self.diagnostics}

    def to_json(self, path=None):
        text = json.dumps(self.to_dict(), indent=1, sort_keys=True, allow_nan=True)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text + "\n")
        return text

    @classmethod
    def from_dict(cls, d, spec=None):
        if d.get("schema") != SCHEMA:
            raise StableNormError(f"unsupported schema {d.get('schema')!r}")
        spec = spec if spec is not None else spec_from_dict(d["metric"])
        if spec_hash(spec) != d["metric_hash"]:
            raise StableNormError("table was built for a different metric")
        entries = {}
        for r in d["entries"]:
            e = TableEntry.from_record(r)
            entries[e.z] = e
        return cls(spec, d["Q"], entries, d.get("diagnostics", {}))

    @classmethod
    def from_json(cls, path, spec=None):
        with open(path) as fh:
            return cls.from_dict(json.load(fh), spec)

    def subadditivity_violations(self, tol=2e-5):
        """Triples with ``sigma(z + w) > sigma(z) + sigma(w) + tol (|z| + |w|)``."""
        pts = {e.z: e for e in self.entries.values() if e.ok}
        bad = []
        for z in pts:
            for w in pts:
                if z >= w:
                    continue
                s = (z[0] + w[0], z[1] + w[1])
                if s == (0, 0):
                    continue
                try:
                    lhs = self.sigma(s)
                except KeyError:
                    continue
                rhs = pts[z].sigma + pts[w].sigma
                if lhs > rhs + tol * (math.hypot(*z) + math.hypot(*w)):
                    bad.append((z, w, lhs - rhs))
        return bad


def build_table(spec, Q, opts=TableOptions(), workers=1):
    """Tabulate every primitive class with ``|z| <= Q``, both orientations.

    With ``workers > 1`` classes are minimized in a process pool; every class
    draws from its own seeded generator, so the table does not depend on
    ``workers``.
    """
    if Q < 3:
        raise StableNormError("Q must be at least 3")
    classes = [z.tuple() for z in primitive_vectors(Q)]
    mirror = opts.mirror_reversible and getattr(spec, "reversible", False)
    todo, seen = [], set()
    for key in classes:
        if not (mirror and (-key[0], -key[1]) in seen):
            todo.append(key)
        seen.add(key)
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            done = dict(zip(todo, pool.map(partial(compute_entry, spec, opts=opts), todo)))
    else:
        done = {}
        for key in todo:
            done[key] = e = compute_entry(spec, key, opts)
            log.info("z=%s sigma=%.12g n=%d%s", key, e.sigma, e.count, "" if e.ok else " FAILED")
    entries = {}
    for key in classes:
        entries[key] = done[key] if key in done else _mirror(done[(-key[0], -key[1])])
    diag = {"classes": len(entries), "mirrored": len(classes) - len(todo),
            "failures": sum(not e.ok for e in entries.values()),
            "restarts": opts.restarts, "seed": opts.seed, "scheme": opts.minimize.scheme}
    return StableNormTable(spec, Q, entries, diag)


# Sandwiches -------------------------------------------------------------------


@dataclass(frozen=True)
class Sandwich:
    xi: tuple
    lower: float
    upper: float
    classes: tuple
    exact: bool = False

    @property
    def width(self):
        return self.upper - self.lower

    @property
    def mid(self):
        return 0.5 * (self.lower + self.upper)

    def contains(self, value, slack=0.0):
        return self.lower - slack <= value <= self.upper + slack

    def scaled(self, a):
        if a <= 0:
            raise StableNormError("sandwich scales by positive factors only")
        return Sandwich(tuple(a * c for c in self.xi), a * self.lower, a * self.upper,
                        self.classes, self.exact)


def _coeffs(xi, z, w):
    """``(a, b)`` with ``xi = a z + b w``."""
    d = det(z, w)
    return det(xi, w) / d, det(z, xi) / d


def _line_value(xi, z, sz, ez, w, sw, ew):
    a, b = _coeffs(xi, z, w)
    return a * sz + b * sw, abs(a) * ez + abs(b) * ew


def _in_cone(xi, z, w):
    return det(z, xi) >= 0 and det(xi, w) >= 0 and det(z, w) > 0


def _sandwich_from_points(xi, pts):
    """Sandwich from angularly sorted ``(z, sigma, err)`` covering the circle."""
    n = len(pts)
    if n < 4:
        raise StableNormError("need at least four tabulated directions")
    xn = math.hypot(*xi)
    for i in range(n):
        z, sz, ez = pts[i]
        if abs(det(z, xi)) <= SNAP_TOL * math.hypot(*z) * xn and (z[0] * xi[0] + z[1] * xi[1]) > 0:
            s = (z[0] * xi[0] + z[1] * xi[1]) / (z[0] ** 2 + z[1] ** 2)
            return Sandwich(tuple(xi), s * (sz - ez), s * (sz + ez), (tuple(z),), True)
    for i in range(n):
        z, sz, ez = pts[i]
        w, sw, ew = pts[(i + 1) % n]
        if not _in_cone(xi, z, w):
            continue
        zl, sl, el = pts[(i - 1) % n]
        wr, sr, er = pts[(i + 2) % n]
        up, eu = _line_value(xi, z, sz, ez, w, sw, ew)
        lows = []
        if det(zl, z) > 0:
            lows.append(_line_value(xi, zl, sl, el, z, sz, ez))
        if det(w, wr) > 0:
            lows.append(_line_value(xi, w, sw, ew, wr, sr, er))
        if not lows:
            raise StableNormError("table too sparse for a lower bound")
        lo = max(v - e for v, e in lows)
        return Sandwich(tuple(xi), lo, up + eu, (tuple(zl), tuple(z), tuple(w), tuple(wr)))
    raise StableNormError(f"no tabulated cone contains {tuple(xi)}")


def sigma_at(table, xi):
    """Certified interval for ``sigma(xi)`` from the tabulated unit circle."""
    xi = tuple(float(c) for c in xi)
    if xi == (0.0, 0.0):
        raise StableNormError("sigma is evaluated at a nonzero vector")
    return _sandwich_from_points(xi, table.points())


class StableNorm:
    """On-demand evaluator: minimizes only the classes a query needs.

    Values are cached per primitive class.  For reversible metrics ``-z`` is
    served from ``z``.  An existing table can seed the cache.
    """

    def __init__(self, spec, opts=None, table=None):
        self.spec = spec
        self.opts = opts or TableOptions(restarts=4, floquet=False)
        self.cache = {}
        if table is not None:
            self.cache.update({k: e for k, e in table.entries.items() if e.ok})

    def entry(self, z):
        z = LatticeVector.of(z)
        if not z.primitive:
            raise StableNormError(f"{z.tuple()} is not primitive")
        key = z.tuple()
        if key in self.cache:
            return self.cache[key]
        neg = (-key[0], -key[1])
        if getattr(self.spec, "reversible", False) and neg in self.cache:
            e = _mirror(self.cache[neg])
        else:
            e = compute_entry(self.spec, z, self.opts)
        if not e.ok:
            raise StableNormError(f"minimization failed in class {key}: {e.failure}")
        self.cache[key] = e
        return e

    def sigma(self, z):
        k, p = LatticeVector.of(z).reduce()
        return k * self.entry(p).sigma

    def sigma_with_error(self, z):
        k, p = LatticeVector.of(z).reduce()
        e = self.entry(p)
        return k * e.sigma, k * e.error

    def sandwich(self, xi, max_norm=64, snap_norm=1024):
        """Certified interval at ``xi`` from a Stern-Brocot bracket of norm ``<= max_norm``.

        A direction within round-off of a class ``z`` with ``|z| <= snap_norm``
        is evaluated exactly from that class instead.
        """
        xf = tuple(to_fraction(c) if not isinstance(c, Fraction) else c for c in xi)
        xv = tuple(float(c) for c in xf)
        if xv == (0.0, 0.0):
            raise StableNormError("sigma is evaluated at a nonzero vector")
        snap = _snap(xf, xv, max(snap_norm, max_norm))
        if snap is not None:
            z, s = snap
            sz, ez = self.sigma_with_error(z)
            return Sandwich(xv, s * (sz - ez), s * (sz + ez), (z.tuple(),), True)
        a, b = farey_bracket(xf, max_norm)[-1]
        na, nb = math.hypot(*a), math.hypot(*b)
        j = max(0, round(nb / na) - 1)
        ja = ((j + 1) * a[0] - b[0], (j + 1) * a[1] - b[1])
        j = max(0, round(na / nb) - 1)
        jb = ((j + 1) * b[0] - a[0], (j + 1) * b[1] - a[1])
        pts = []
        for z in (ja, a, b, jb):
            s, e = self.sigma_with_error(z)
            pts.append((z, s, e))
        up, eu = _line_value(xv, a, pts[1][1], pts[1][2], b, pts[2][1], pts[2][2])
        lo1 = _line_value(xv, ja, pts[0][1], pts[0][2], a, pts[1][1], pts[1][2])
        lo2 = _line_value(xv, b, pts[2][1], pts[2][2], jb, pts[3][1], pts[3][2])
        lo = max(lo1[0] - lo1[1], lo2[0] - lo2[1])
        return Sandwich(xv, lo, up + eu, (ja, a, b, jb))


# Derivatives and defects ---------------------------------------------------------


@dataclass
class ForwardDerivative:
    z: tuple
    w: tuple
    value: float
    error: float
    trace: list  # (n, d_n, error of d_n)
    monotone: bool
    reliable: bool

    def as_record(self):
        return {"z": list(self.z), "w": list(self.w), "value": self.value, "error": self.error,
                "trace": [list(t) for t in self.trace], "monotone": self.monotone,
                "reliable": self.reliable}


def _evaluator(obj):
    if isinstance(obj, StableNorm):
        return obj
    if isinstance(obj, StableNormTable):
        return StableNorm(obj.spec, table=obj)
    return StableNorm(obj)


def forward_derivative_at_lattice(source, z, w, n_list=(2, 4, 8, 16)):
    """``D+sigma(z)[w]`` as the limit of ``d_n = sigma(n z + w) - n sigma(z)``.

    The last two trace values are extrapolated under ``d_n = D + c/n`` (capped
    by ``d_n`` itself, an upper bound of the limit).  The error bar is the
    size of that correction or, with three or more values, the change from
    the previous extrapolation if smaller, plus the propagated length errors.
    """
    ev = _evaluator(source)
    z = LatticeVector.of(z)
    if not z.primitive:
        raise StableNormError(f"{z.tuple()} is not primitive")
    w = tuple(int(c) for c in w)
    n_list = sorted(int(n) for n in n_list)
    if not n_list or n_list[0] < 1:
        raise StableNormError("n_list must hold positive integers")
    sz, ez = ev.sigma_with_error(z)
    trace = []
    reliable = True
    for n in n_list:
        target = (n * z.a + w[0], n * z.b + w[1])
        try:
            s, e = ev.sigma_with_error(target)
            conv = ev.entry(LatticeVector.of(target).reduce()[1]).converged
        except StableNormError:
            reliable = False
            continue
        reliable &= bool(conv)
        trace.append((n, s - n * sz, e + n * ez))
    if not trace:
        raise StableNormError("every minimization in the trace failed")
    monotone = all(trace[i + 1][1] <= trace[i][1] + 1e-6 for i in range(len(trace) - 1))
    value = trace[-1][1]
    err = trace[-1][2]
    if len(trace) > 1:
        # d_n decreases to the limit; extrapolate assuming d_n = D + c / n
        def extrapolate(a, b):
            (n1, d1, e1), (n2, d2, e2) = a, b
            return min((n2 * d2 - n1 * d1) / (n2 - n1), d2), (n2 * e2 + n1 * e1) / (n2 - n1)

        value, noise = extrapolate(trace[-2], trace[-1])
        # the limit lies in [value, d_n] when the defect decays at least quadratically
        err = trace[-1][1] - value
        if len(trace) > 2:
            # Richardson estimate, much tighter for smooth 1/n traces
            prev, _ = extrapolate(trace[-3], trace[-2])
            err = min(err, abs(value - prev))
        err += noise
    return ForwardDerivative(z.tuple(), w, value, err, trace, monotone, reliable and monotone)


@dataclass
class DefectValue:
    value: float
    error: float
    inconclusive: bool
    parts: dict = field(default_factory=dict)

    @property
    def censored(self):
        return self.error >= self.value


def _snap(xf, xv, norm):
    """Primitive ``z`` and ``s > 0`` with ``xi = s z`` up to round-off, or None."""
    a, b = farey_bracket(xf, norm)[-1]
    xn = math.hypot(*xv)
    for z in (a, b):
        if abs(det(z, xv)) <= SNAP_TOL * math.hypot(*z) * xn and (z[0] * xv[0] + z[1] * xv[1]) > 0:
            return LatticeVector.of(z), (z[0] * xv[0] + z[1] * xv[1]) / (z[0] ** 2 + z[1] ** 2)
    return None


def _rational_direction(xi, norm):
    xf = tuple(to_fraction(c) if not isinstance(c, Fraction) else c for c in xi)
    return _snap(xf, tuple(float(c) for c in xf), norm)


def _beta_interval(sw):
    lo = max(sw.lower, 0.0)
    return 0.5 * lo * lo, 0.5 * sw.upper * sw.upper


def _richardson_derivative(fn, xi, vhat, h0):
    """Symmetric-difference derivative of ``fn`` along ``vhat`` with two Richardson levels.

    ``fn`` returns ``(value, error)``; the bar combines the last Richardson
    change with the propagated value errors.
    """
    Ds, noise = [], []
    for h in (h0, h0 / 2, h0 / 4):
        fp, ep = fn((xi[0] + h * vhat[0], xi[1] + h * vhat[1]))
        fm, em = fn((xi[0] - h * vhat[0], xi[1] - h * vhat[1]))
        Ds.append((fp - fm) / (2 * h))
        noise.append((ep + em) / (2 * h))
    R1 = (4 * Ds[1] - Ds[0]) / 3
    R2 = (4 * Ds[2] - Ds[1]) / 3
    R = (16 * R2 - R1) / 15
    err = abs(R - R2) + (16 * (4 * noise[2] + noise[1]) + (4 * noise[1] + noise[0])) / 45
    return R, err, {"h0": h0, "D": Ds, "R1": R1, "R2": R2}


def defect_sigma(source, xi, v, n_list=(2, 4, 8, 16, 32), max_norm=128, h0=0.02, resolution=0.0):
    """``sigma(xi + v) - sigma(xi) - D+sigma(xi)[v]`` with an error bar.

    Rational ``xi`` uses the limit formula along ``+-z_perp``; otherwise the
    derivative is a Richardson-extrapolated symmetric difference of sandwich
    midpoints.
    """
    ev = _evaluator(source)
    xi = tuple(xi)
    v = tuple(float(c) for c in v)
    xv = tuple(float(c) for c in xi)
    target = (xv[0] + v[0], xv[1] + v[1])
    if target == (0.0, 0.0):
        raise StableNormError("xi + v must be nonzero")
    sw_t = ev.sandwich(target, max_norm)
    parts = {"sigma_xi_plus_v": [sw_t.lower, sw_t.upper]}
    rat = _rational_direction(xi, max_norm)
    if rat is not None:
        z, s = rat
        sz, ez = ev.sigma_with_error(z)
        zp = perp(z.tuple())
        n2 = z.a * z.a + z.b * z.b
        alpha = (v[0] * z.a + v[1] * z.b) / n2
        beta = (v[0] * zp[0] + v[1] * zp[1]) / n2
        lin = alpha * sz
        lin_err = abs(alpha) * ez
        if beta != 0.0:
            sign = 1 if beta > 0 else -1
            fd = forward_derivative_at_lattice(ev, z, (sign * zp[0], sign * zp[1]), n_list)
            lin += abs(beta) * fd.value
            lin_err += abs(beta) * fd.error
            parts["forward_derivative"] = fd.as_record()
        base, base_err = s * sz, s * ez
    else:
        sw_x = ev.sandwich(xi, max_norm)
        base, base_err = sw_x.mid, 0.5 * sw_x.width
        vn = math.hypot(*v)
        if vn == 0.0:
            return DefectValue(0.0, 0.0, False, parts)
        vhat = (v[0] / vn, v[1] / vn)

        def fn(p):
            sw = ev.sandwich(p, max_norm)
            return sw.mid, 0.5 * sw.width

        D, D_err, info = _richardson_derivative(fn, xv, vhat, h0 * math.hypot(*xv))
        lin, lin_err = vn * D, vn * D_err
        parts["richardson"] = info
    value = sw_t.mid - base - lin
    err = 0.5 * sw_t.width + base_err + lin_err
    parts.update({"sigma_xi": base, "derivative_term": lin})
    return DefectValue(value, err, err > max(resolution, abs(value)), parts)


def defect_beta(source, xi, v, max_norm=128, h0=0.02, resolution=0.0):
    """``beta(xi + v) - beta(xi) - D beta(xi)[v]`` with ``beta = sigma^2 / 2``.

    ``D beta(xi)`` is a Richardson-extrapolated symmetric difference, valid
    where ``sigma`` is differentiable.
    """
    ev = _evaluator(source)
    xv = tuple(float(c) for c in xi)
    v = tuple(float(c) for c in v)
    vn = math.hypot(*v)
    if xv == (0.0, 0.0):
        raise StableNormError("xi must be nonzero")
    sw_x = ev.sandwich(xi, max_norm)
    bx_lo, bx_hi = _beta_interval(sw_x)
    if vn == 0.0:
        return DefectValue(0.0, 0.0, False, {})
    target = (xv[0] + v[0], xv[1] + v[1])
    sw_t = ev.sandwich(target, max_norm)
    bt_lo, bt_hi = _beta_interval(sw_t)
    vhat = (v[0] / vn, v[1] / vn)

    def fn(p):
        sw = ev.sandwich(p, max_norm)
        lo, hi = _beta_interval(sw)
        return 0.5 * (lo + hi), 0.5 * (hi - lo)

    D, D_err, info = _richardson_derivative(fn, xv, vhat, h0 * math.hypot(*xv))
    value = 0.5 * (bt_lo + bt_hi) - 0.5 * (bx_lo + bx_hi) - vn * D
    err = 0.5 * (bt_hi - bt_lo) + 0.5 * (bx_hi - bx_lo) + vn * D_err
    parts = {"beta_xi": [bx_lo, bx_hi], "beta_xi_plus_v": [bt_lo, bt_hi], "derivative": D,
             "richardson": info}
    return DefectValue(value, err, err > max(resolution, abs(value)), parts)


# Export -----------------------------------------------------------------------


def write_polyline_csv(path, points, header=("x", "y")):
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for p in np.asarray(points, dtype=float):
            fh.write(",".join(f"{c:.12g}" for c in p) + "\n")


def render_svg(layers, size=480, title=None):
    """Self-contained SVG of closed polylines / point sets around the origin.

    ``layers`` holds ``(label, points, kind, color)`` with ``kind`` in
    ``{"line", "dots"}``.  Axes and the square ``[-1, 1]^2`` are drawn.
    """
    allpts = np.vstack([np.asarray(p, dtype=float) for _, p, _, _ in layers if len(p)] + [np.ones((1, 2))])
    R = 1.1 * max(1.0, float(np.max(np.abs(allpts))))
    half = size / 2

    def tx(p):
        return half + p[0] / R * (half - 10), half - p[1] / R * (half - 10)

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
           f'viewBox="0 0 {size} {size}">',
           f'<rect width="{size}" height="{size}" fill="white"/>']
    if title:
        out.append(f'<title>{title}</title>')
    a0, a1 = tx((-R, 0)), tx((R, 0))
    out.append(f'<line x1="{a0[0]:.2f}" y1="{a0[1]:.2f}" x2="{a1[0]:.2f}" y2="{a1[1]:.2f}" stroke="#999"/>')
    b0, b1 = tx((0, -R)), tx((0, R))
    out.append(f'<line x1="{b0[0]:.2f}" y1="{b0[1]:.2f}" x2="{b1[0]:.2f}" y2="{b1[1]:.2f}" stroke="#999"/>')
    c0, c1 = tx((-1, 1)), tx((1, -1))
    out.append(f'<rect x="{c0[0]:.2f}" y="{c0[1]:.2f}" width="{c1[0] - c0[0]:.2f}" '
               f'height="{c1[1] - c0[1]:.2f}" fill="none" stroke="#ccc" stroke-dasharray="4 3"/>')
    out.append(f'<text x="{tx((1, 0))[0] + 3:.2f}" y="{half + 14:.2f}" font-size="11">1</text>')
    out.append(f'<text x="{half + 4:.2f}" y="{tx((0, 1))[1] - 3:.2f}" font-size="11">1</text>')
    for k, (label, pts, kind, color) in enumerate(layers):
        pts = np.asarray(pts, dtype=float)
        if not len(pts):
            continue
        if kind == "line":
            d = " ".join(("M" if i == 0 else "L") + f"{x:.2f},{y:.2f}"
                         for i, (x, y) in enumerate(tx(p) for p in pts)) + " Z"
            out.append(f'<path d="{d}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        else:
            for p in pts:
                x, y = tx(p)
                out.append(f'<circle cx="{x:.2f}" cy="{y:.2f}" r="2.2" fill="{color}"/>')
        out.append(f'<text x="12" y="{18 + 14 * k}" font-size="12" fill="{color}">{label}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
