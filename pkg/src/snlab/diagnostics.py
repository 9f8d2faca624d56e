"""Defect profiles, model fits and the quadratic-vs-flat dichotomy.

A profile samples a convexity defect along a ray ``xi + t vhat`` on a
geometric grid of ``t``.  Samples whose error bar reaches the measured value
are *censored*: they only bound the defect from above.  Fits use the
uncensored samples as data and the censored ones as one-sided constraints,
so a model predicting a measurable defect where none is seen is penalized.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.fft import dst
from scipy.optimize import least_squares, minimize
from scipy.spatial import cKDTree

from .geodesic_flow import monodromy_of_closed
from .loop_minimizer import DiscreteLoop, discrete_length, find_periodic_minimizers
from .rational_approx import LatticeVector, perp
from .stable_norm import (_class_rng, _evaluator, compute_entry, _rational_direction, defect_beta, defect_sigma,
                          forward_derivative_at_lattice)

SIGMA_DEFECT = "sigma"
BETA_DEFECT = "beta"


class DiagnosticsError(ValueError):
    pass


def radial_decompose(xi, v):
    """``(P1, P2)`` with ``xi + v = P1 + P2``, ``P1`` along ``xi`` and ``P2`` orthogonal to it."""
    xi = np.asarray(xi, dtype=float)
    v = np.asarray(v, dtype=float)
    n = float(np.linalg.norm(xi))
    if n == 0.0:
        raise DiagnosticsError("xi must be nonzero")
    u = xi / n
    c = float(v @ u)
    return (n + c) * u, v - c * u


@dataclass
class DefectProfile:
    xi: tuple
    vhat: tuple
    mode: str
    t: np.ndarray
    values: np.ndarray
    errors: np.ndarray
    rational: bool = False
    details: list = field(default_factory=list)

    @property
    def censored(self):
        return self.errors >= self.values

    @property
    def uninformative(self):
        return bool(np.all(self.censored))

    def as_record(self):
        return {"xi": list(self.xi), "vhat": list(self.vhat), "mode": self.mode,
                "rational": self.rational, "t": self.t.tolist(), "values": self.values.tolist(),
                "errors": self.errors.tolist(), "censored": self.censored.tolist()}

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "defect", "error", "censored"])
            for t, d, e, c in zip(self.t, self.values, self.errors, self.censored):
                w.writerow([f"{t:.12g}", f"{d:.12g}", f"{e:.12g}", int(c)])


def geometric_grid(t0, count, ratio=0.5):
    return t0 * ratio ** np.arange(count)


def profile_defect(source, xi, vhat, t_grid, mode=None, max_norm=128, n_list=(4, 8, 16, 32)):
    """Defect samples along ``xi + t vhat``.

    ``mode`` defaults to the sigma defect at rational ``xi`` (limit formula for
    the derivative) and to the beta defect otherwise.
    """
    ev = _evaluator(source)
    t = np.asarray(t_grid, dtype=float)
    if np.any(t <= 0) or np.any(np.diff(t) >= 0):
        raise DiagnosticsError("t_grid must be positive and strictly decreasing")
    vh = np.asarray(vhat, dtype=float)
    vh = vh / np.linalg.norm(vh)
    rational = _rational_direction(tuple(xi), max_norm) is not None
    if mode is None:
        mode = SIGMA_DEFECT if rational else BETA_DEFECT
    vals, errs, details = [], [], []
    for ti in t:
        v = (ti * vh[0], ti * vh[1])
        if mode == SIGMA_DEFECT:
            d = defect_sigma(ev, xi, v, n_list=n_list, max_norm=max_norm)
        elif mode == BETA_DEFECT:
            d = defect_beta(ev, xi, v, max_norm=max_norm)
        else:
            raise DiagnosticsError(f"unknown mode {mode!r}")
        vals.append(d.value)
        errs.append(d.error)
        details.append({k: d.parts[k] for k in d.parts if k in ("sigma_xi", "derivative", "derivative_term")})
    return DefectProfile(tuple(float(c) for c in xi), tuple(vh), mode, t, np.array(vals),
                         np.array(errs), rational, details)


# Fits -------------------------------------------------------------------------

QUADRATIC = "quadratic-pinch"
EXPONENTIAL = "exponential-flat"
UNDETERMINED = "undetermined"
# log-residuals are floored here so that perfect fits still compare by a finite ratio
RESIDUAL_FLOOR = 1e-3
TINY = 1e-300


@dataclass
class FitReport:
    model: str
    C_lo: float
    C_hi: float
    quad_C: float
    quad_residual: float
    exp_C: float
    exp_lambda: float
    exp_power: float
    exp_residual: float
    n_uncensored: int
    n_censored: int
    reason: str = ""

    def as_record(self):
        return dict(self.__dict__)


def _hinge_residuals(logpred, obs, log_bound):
    """Log misfit outside each sample's error interval; censored samples bound from above."""
    log_lo, log_hi = obs
    lp = logpred[: len(log_lo)]
    r_obs = lp - np.clip(lp, log_lo, log_hi)
    r_cen = np.maximum(0.0, logpred[len(log_lo):] - log_bound)
    return np.concatenate([r_obs, r_cen])


def _log_interval(d_u, e_u):
    return np.log(np.maximum(d_u - e_u, TINY)), np.log(d_u + e_u)


def _fit_quadratic(t_u, d_u, e_u, t_c, b_c):
    lt = np.log(np.concatenate([t_u, t_c]))
    lo, lb = np.log(d_u), np.log(np.maximum(b_c, TINY))
    obs = _log_interval(d_u, e_u)

    def res(p):
        return _hinge_residuals(p[0] + 2 * lt, obs, lb)

    p0 = np.array([np.mean(lo - 2 * np.log(t_u))]) if len(t_u) else np.array([0.0])
    sol = least_squares(res, p0, method="trf")
    r = res(sol.x)
    return math.exp(sol.x[0]), float(np.sqrt(np.mean(r * r)))


def _fit_exponential(t_u, d_u, e_u, t_c, b_c, power):
    ts = np.concatenate([t_u, t_c])
    s = ts ** power
    lo, lb = np.log(d_u), np.log(np.maximum(b_c, TINY))
    obs = _log_interval(d_u, e_u)

    def logpred(p):
        return p[0] + np.log(s) - p[1] / s

    def res(p):
        return _hinge_residuals(logpred(p), obs, lb)

    if len(t_u) >= 2:
        A = np.column_stack([np.ones(len(t_u)), -1.0 / t_u ** power])
        p0, *_ = np.linalg.lstsq(A, lo - np.log(t_u ** power), rcond=None)
    elif len(t_u) == 1:
        p0 = np.array([lo[0] - np.log(t_u[0] ** power) + 1.0 / t_u[0] ** power, 1.0])
    else:
        p0 = np.array([0.0, 1.0])
    best = None
    # the hinge makes the objective piecewise smooth; a few starts in lambda suffice
    for lam0 in (p0[1], 0.1, 1.0, 10.0, 100.0):
        start = np.array([p0[0], lam0])
        if len(t_u):
            start[0] = lo[0] - math.log(t_u[0] ** power) + lam0 / t_u[0] ** power
        sol = least_squares(res, start, method="trf")
        r = res(sol.x)
        val = float(np.sqrt(np.mean(r * r)))
        if best is None or val < best[1]:
            best = (sol.x, val)
    p, val = best
    return math.exp(min(p[0], 700.0)), float(p[1]), val


def fit_models(profile, margin=10.0, min_uncensored=4, exp_power=None):
    """Compare the quadratic band ``C t^2`` with ``t^p C exp(-lambda / t^p)``.

    ``p = 1`` for profiles at rational directions and ``1/4`` otherwise.
    With fewer than ``min_uncensored`` uncensored samples the comparison is
    still made when censored samples exist, because the censoring pattern
    itself constrains the models; without censored samples it is reported
    as undetermined.  Residuals are log misfits outside each sample's error
    interval, so a model is not penalized for disagreeing with noise.
    """
    t = np.asarray(profile.t, dtype=float)
    d = np.asarray(profile.values, dtype=float)
    e = np.asarray(profile.errors, dtype=float)
    cens = (e >= d) | (d <= 0)
    t_u, d_u, e_u = t[~cens], d[~cens], np.maximum(e[~cens], 0.0)
    # a censored sample bounds the defect by value + error from above
    t_c, b_c = t[cens], np.maximum(d[cens] + e[cens], TINY)
    power = exp_power if exp_power is not None else (1.0 if profile.rational else 0.25)
    nu, nc = int((~cens).sum()), int(cens.sum())
    if nu == 0:
        return FitReport(UNDETERMINED, math.nan, math.nan, math.nan, math.nan, math.nan, math.nan,
                         power, math.nan, nu, nc, "all samples censored")
    ratios = d_u / t_u ** 2
    C_lo, C_hi = float(ratios.min()), float(ratios.max())
    qC, qres = _fit_quadratic(t_u, d_u, e_u, t_c, b_c)
    eC, lam, eres = _fit_exponential(t_u, d_u, e_u, t_c, b_c, power)
    if nu < min_uncensored and nc == 0:
        return FitReport(UNDETERMINED, C_lo, C_hi, qC, qres, eC, lam, power, eres, nu, nc,
                         f"only {nu} uncensored samples")
    q, x = max(qres, RESIDUAL_FLOOR), max(eres, RESIDUAL_FLOOR)
    if q * margin <= x:
        model, reason = QUADRATIC, ""
    elif x * margin <= q and lam > 0:
        model, reason = EXPONENTIAL, ""
    else:
        model, reason = UNDETERMINED, f"residual ratio {q / x:.3g} within margin {margin:g}"
    if nu < min_uncensored and model != UNDETERMINED:
        reason = f"{nu} uncensored samples; decided by the censoring pattern"
    return FitReport(model, C_lo, C_hi, qC, qres, eC, lam, power, eres, nu, nc, reason)


# Classification ------------------------------------------------------------------

KAM_LIKE = "KAM-like"
HYPERBOLIC_LIKE = "hyperbolic-like"
FLATNESS_CAVEAT = ("flatness is only expected along some sequence v_n -> 0; a fixed geometric grid "
                   "that misses it does not contradict the dichotomy")


@dataclass
class DirectionVerdict:
    xi: tuple
    verdict: str
    profiles: list
    fits: list
    floquet: dict | None = None
    caveats: list = field(default_factory=list)

    def as_record(self):
        return {"xi": list(self.xi), "verdict": self.verdict,
                "profiles": [p.as_record() for p in self.profiles],
                "fits": [f.as_record() for f in self.fits],
                "floquet": self.floquet, "caveats": list(self.caveats)}

    def to_json(self):
        return json.dumps(self.as_record(), indent=1, sort_keys=True, default=float)


def classify_direction(source, xi, t_grid=None, max_norm=128, n_list=(4, 8, 16, 32), margin=10.0):
    """Quadratic pinch on both sides, or flatness backed by Floquet hyperbolicity."""
    ev = _evaluator(source)
    xi = tuple(float(c) for c in xi)
    if xi == (0.0, 0.0):
        raise DiagnosticsError("xi must be nonzero")
    t_grid = geometric_grid(0.2, 6) if t_grid is None else np.asarray(t_grid, dtype=float)
    n = math.hypot(*xi)
    side = (-xi[1] / n, xi[0] / n)
    rat = _rational_direction(xi, max_norm)
    profiles, fits = [], []
    for sgn in (1, -1):
        vh = (sgn * side[0], sgn * side[1])
        p = profile_defect(ev, xi, vh, n * t_grid, max_norm=max_norm, n_list=n_list)
        profiles.append(p)
        fits.append(fit_models(p, margin=margin))
    floquet = None
    caveats = []
    if rat is not None:
        z = rat[0]
        e = ev.entry(z)
        if e.floquet is not None:
            floquet = e.floquet
        elif e.loop is not None:
            floquet = monodromy_of_closed(ev.spec, e.loop, step=ev.opts.floquet_step).as_record()
        else:
            floquet = compute_entry(ev.spec, z, ev.opts, floquet=True).floquet
    models = [f.model for f in fits]
    if all(m == QUADRATIC for m in models):
        verdict = KAM_LIKE
    elif EXPONENTIAL in models and QUADRATIC not in models and (
            rat is None or (floquet is not None and floquet.get("classification") == "hyperbolic")):
        verdict = HYPERBOLIC_LIKE
        caveats.append(FLATNESS_CAVEAT)
    else:
        verdict = UNDETERMINED
        if EXPONENTIAL in models and floquet is not None and floquet.get("classification") != "hyperbolic":
            caveats.append("flat defect but the periodic minimizer is not Floquet-hyperbolic")
        if EXPONENTIAL in models and QUADRATIC in models:
            caveats.append("the two sides disagree")
    return DirectionVerdict(xi, verdict, profiles, fits, floquet, caveats)


# Heteroclinic windows and broken curves -------------------------------------------

HETEROCLINIC_WINDOW = 6


def _eta(loop):
    """Mean transverse coordinate ``det(z, x)`` of a lifted loop.

    Lifts of distinct minimizers of one class are disjoint and ordered, so
    this orders them; a lattice translate by ``v`` shifts it by ``det(z, v)``.
    """
    z = loop.zvec
    P = loop.points
    return float(np.mean(z[0] * P[:, 1] - z[1] * P[:, 0]))


def _along(loop, p):
    z = loop.zvec
    return float(np.dot(p, z) / np.dot(z, z))


def _period_samples(loop, per):
    """The loop's interpolant at ``per`` equally spaced parameters of one period."""
    return loop.resample(per).points


def _cover_distance(points, loop, j_lo, j_hi, per=1024):
    """Distance from each point to the lifted orbit (polyline through dense samples)."""
    Y = _period_samples(loop, per)
    tiles = np.vstack([Y + j * loop.zvec for j in range(j_lo - 1, j_hi + 2)])
    _, idx = cKDTree(tiles).query(points)
    best = np.full(len(points), np.inf)
    for lo in (idx - 1, idx):
        lo = np.clip(lo, 0, len(tiles) - 2)
        a, b = tiles[lo], tiles[lo + 1]
        ab = b - a
        u = np.clip(np.einsum("ij,ij->i", points - a, ab) / np.einsum("ij,ij->i", ab, ab), 0.0, 1.0)
        best = np.minimum(best, np.linalg.norm(points - a - u[:, None] * ab, axis=1))
    return best


def _path_energy(spec, P, a, b):
    """Midpoint energy of the path ``a, P, b`` over a unit parameter interval, and its gradient."""
    full = np.vstack([a[None, :], P, b[None, :]])
    M = len(full) - 1
    L, Lx, Lv, _ = spec.lagrangian(0.5 * (full[1:] + full[:-1]), full[1:] - full[:-1])
    g = M * (0.5 * (Lx[:-1] + Lx[1:]) + Lv[:-1] - Lv[1:])
    return M * math.fsum(L), g


def _path_lengths(spec, full):
    return spec.F(0.5 * (full[1:] + full[:-1]), full[1:] - full[:-1])


def _minimize_path(spec, P0, a, b, tol=1e-9, rounds=6):
    """L-BFGS on the interior points, preconditioned by the Dirichlet Laplacian (DST-I).

    Restarts until the preconditioned gradient is below ``tol`` relative to
    the energy or the energy stalls at round-off.
    """
    K = len(P0)
    j = np.arange(1, K + 1)
    lap = (2.0 * np.sin(math.pi * j / (2 * (K + 1)))) ** 2 * (K + 1)
    _, _, _, Lvv = spec.lagrangian(P0[:1], (b - a)[None, :] / (K + 1))
    w = 1.0 / np.sqrt(0.5 * float(np.trace(Lvv[0])) * lap)
    base = P0.copy()

    def unpack(y):
        return base + dst(w[:, None] * y.reshape(K, 2), type=1, axis=0, norm="ortho")

    def fun(y):
        E, g = _path_energy(spec, unpack(y), a, b)
        return E, (w[:, None] * dst(g, type=1, axis=0, norm="ortho")).ravel()

    E_prev = math.inf
    for _ in range(rounds):
        res = minimize(fun, np.zeros(2 * K), jac=True, method="L-BFGS-B",
                       options={"maxiter": 5000, "maxcor": 30, "ftol": 0.0, "gtol": 1e-14,
                                "maxls": 50})
        base = unpack(res.x)
        E, gy = fun(np.zeros(2 * K))
        gn = float(np.abs(gy).max())
        if gn <= tol * max(1.0, abs(E)) or E >= E_prev - 1e-15 * abs(E):
            break
        E_prev = E
    return base, gn <= tol * max(1.0, abs(E)), gn


def _fit_rate(times, dist, lo=1e-7, hi=1e-2):
    """Slope and intercept of ``log dist`` against ``times`` where ``lo < dist < hi``."""
    sel = (dist > lo) & (dist < hi)
    if sel.sum() < 3:
        return math.nan, math.nan
    coef = np.polyfit(times[sel], np.log(dist[sel]), 1)
    return float(coef[0]), float(coef[1])


@dataclass
class HeteroclinicSegment:
    z: tuple
    source: DiscreteLoop
    target: DiscreteLoop  # lift of the target orbit the path ends on, before the ``periods`` shift
    periods: int
    points: np.ndarray  # path in the universal cover
    times: np.ndarray  # F-arclength at each point
    length: float
    length_error: float
    excess: float  # length - periods * sigma(z)
    dist_source: np.ndarray
    dist_target: np.ndarray
    S: float  # last time within ``splice_tol`` of the source orbit
    T: float  # first time within ``splice_tol`` of the target orbit
    rate_source: float
    rate_target: float
    amplitude: float  # decay fits extrapolated to mid-window
    lyapunov: float
    converged: bool
    notes: list = field(default_factory=list)

    @property
    def window(self):
        return self.periods / 2

    @property
    def displacement(self):
        return self.points[-1] - self.points[0]

    @property
    def decay_consistent(self):
        """Both fitted rates within a factor 2 of the Floquet exponent."""
        if not math.isfinite(self.lyapunov):
            return None
        rates = (self.rate_source, self.rate_target)
        return all(math.isfinite(r) and 0.5 <= r / self.lyapunov <= 2.0 for r in rates)

    @property
    def monotone_decay(self):
        """Distances at the window ends below those at mid-window."""
        h = len(self.points) // 2
        return bool(self.dist_source[1] < self.dist_source[h] and self.dist_target[-2] < self.dist_target[h])

    def as_record(self):
        return {"z": list(self.z), "periods": self.periods, "length": self.length,
                "length_error": self.length_error, "excess": self.excess, "S": self.S, "T": self.T,
                "rate_source": self.rate_source, "rate_target": self.rate_target,
                "amplitude": self.amplitude, "lyapunov": self.lyapunov,
                "decay_consistent": self.decay_consistent, "monotone_decay": self.monotone_decay,
                "converged": self.converged, "notes": list(self.notes)}


def _aligned(U, V):
    """``V`` translated by a multiple of ``z`` so its base point sits next to ``U``'s."""
    r = round(_along(U, U.points[0]) - _along(V, V.points[0]))
    return V.translate(r * U.zvec) if r else V


def _heteroclinic(spec, A, B, periods, ppp, lyapunov, splice_tol):
    z = A.zvec
    a = A.points[0].copy()
    b = B.points[0] + periods * z
    K1 = periods * ppp - 1
    YA = _period_samples(A, ppp)
    YB = _period_samples(B, ppp)
    i = np.arange(1, K1 + 1)
    shift = (i // ppp)[:, None] * z
    u = i / (K1 + 1)
    chi = (0.5 * (1.0 + np.tanh(8.0 * (u - 0.5))))[:, None]
    P0 = (1 - chi) * (YA[i % ppp] + shift) + chi * (YB[i % ppp] + shift)
    P1, ok1, _ = _minimize_path(spec, P0, a, b)
    full1 = np.vstack([a[None, :], P1, b[None, :]])
    fine = np.empty((2 * len(full1) - 1, 2))
    fine[0::2] = full1
    fine[1::2] = 0.5 * (full1[:-1] + full1[1:])
    P2, ok2, gn = _minimize_path(spec, fine[1:-1], a, b)
    full2 = np.vstack([a[None, :], P2, b[None, :]])
    L1 = math.fsum(_path_lengths(spec, full1))
    seg = _path_lengths(spec, full2)
    L2 = math.fsum(seg)
    # midpoint rule: error ~ h^2
    length = (4.0 * L2 - L1) / 3.0
    err = abs(L2 - L1) / 3.0 + 1e-15 * L2 * math.sqrt(len(seg))
    sigma = discrete_length(spec, A, "spectral")
    times = np.concatenate([[0.0], np.cumsum(seg)])
    dA = _cover_distance(full2, A, -1, periods + 1)
    dB = _cover_distance(full2 - periods * z, B, -periods - 1, 1)
    h = len(full2) // 2
    tmid = times[h]
    ra, ia = _fit_rate(times[:h], dA[:h])
    rb, ib = _fit_rate(times[-1] - times[h:], dB[h:])
    amps = [math.exp(c + r * t) for r, c, t in ((ra, ia, tmid), (rb, ib, times[-1] - tmid))
            if math.isfinite(r)]
    near_a = np.nonzero(dA[:h] < splice_tol)[0]
    near_b = np.nonzero(dB[h:] < splice_tol)[0]
    S = float(times[near_a.max()]) if len(near_a) else 0.0
    T = float(times[h + near_b.min()]) if len(near_b) else float(times[-1])
    notes = [] if ok1 and ok2 else [f"path minimization stopped at gradient {gn:.3g}"]
    seg_ = HeteroclinicSegment(A.z.tuple(), A, B, periods, full2, times, length, err,
                               length - periods * sigma, dA, dB, S, T, ra, rb,
                               max(amps) if amps else math.nan, lyapunov, ok1 and ok2, notes)
    if seg_.decay_consistent is False:
        seg_.notes.append("decay rates differ from the Floquet exponent by more than a factor 2")
    return seg_


def find_heteroclinic(spec, orbitA, orbitB, window=HETEROCLINIC_WINDOW, points_per_period=None,
                      lyapunov=None, splice_tol=1e-3, foliation_tol=1e-4):
    """Windowed minimal path from the lift ``orbitA`` to the lift ``orbitB``.

    The path starts at ``orbitA``'s base point and ends at ``orbitB``'s base
    point (moved along ``z`` next to ``orbitA``'s) advanced by ``2 window``
    periods; interior points are free.  Its length is Richardson extrapolated
    from two resolutions.  Decay rates at both ends are compared with
    ``lyapunov`` when it is given.
    """
    if orbitA.z != orbitB.z:
        raise DiagnosticsError("orbits belong to different classes")
    if int(window) != window or window < 1:
        raise DiagnosticsError("window must be a positive number of periods")
    z = orbitA.z
    B = _aligned(orbitA, orbitB)
    if abs(_eta(orbitA) - _eta(B)) < 1e-9 * (1 + abs(_eta(orbitA))):
        raise DiagnosticsError("orbits are identical")
    sA = discrete_length(spec, orbitA, "spectral")
    sB = discrete_length(spec, B, "spectral")
    Bn = B.resample(orbitA.N) if B.N != orbitA.N else B
    mid = DiscreteLoop(z, 0.5 * (orbitA.points + Bn.points))
    if discrete_length(spec, mid, "spectral") - max(sA, sB) < foliation_tol * min(sA, sB):
        raise DiagnosticsError("the strip between the orbits is foliated by minimizers; "
                               "there are no distinct neighbouring orbits")
    ppp = points_per_period or max(64, 32 * int(math.ceil(z.norm)))
    lam = math.nan if lyapunov is None else float(lyapunov)
    return _heteroclinic(spec, orbitA, B, 2 * int(window), ppp, lam, splice_tol)


@dataclass
class BrokenCurve:
    z: tuple
    s: int
    n: int
    partition: tuple
    points: np.ndarray
    length: float
    length_error: float
    class_vector: tuple
    arc_periods: int
    sigma_z: float
    forward_derivative: float
    lyapunov: float
    amplitude: float
    bound_rhs: float
    heteroclinics: list

    @property
    def target_class(self):
        zp = perp(self.z)
        return (self.n * self.z[0] + self.s * zp[0], self.n * self.z[1] + self.s * zp[1])

    def certifies(self, sigma, tol=0.0):
        """The length is an upper bound: ``length >= sigma - 2 tol``."""
        return self.length >= sigma - 2.0 * tol

    def as_record(self):
        return {"z": list(self.z), "s": self.s, "n": self.n, "partition": list(self.partition),
                "length": self.length, "length_error": self.length_error,
                "class": list(self.class_vector), "arc_periods": self.arc_periods,
                "sigma_z": self.sigma_z, "forward_derivative": self.forward_derivative,
                "lyapunov": self.lyapunov, "amplitude": self.amplitude, "bound_rhs": self.bound_rhs,
                "heteroclinics": [h.as_record() for h in self.heteroclinics]}


def _strip_copies(orbits, c, w, k, s):
    """Lifts of all orbits between ``c`` and ``c + s k w`` ordered transversally (``c`` excluded)."""
    eta_c = _eta(c)
    copies = []
    for o in orbits:
        delta = (s * (_eta(o) - eta_c)) % 1.0
        if delta > 1.0 - 1e-9:
            delta = 0.0
        for j in range(k):
            pos = delta + j
            if pos < 1e-9:
                continue  # c itself
            m = round(eta_c + s * pos - _eta(o))
            copies.append((pos, o.translate(m * w)))
    copies.append((float(k), c.translate(s * k * w)))
    copies.sort(key=lambda t: t[0])
    return [cp for _, cp in copies]


def broken_curve(spec, z, s, n, partition, source=None, restarts=8, points_per_period=None,
                 splice_tol=1e-3):
    """Closed curve in class ``n z + s z_perp`` spliced from periodic arcs and heteroclinics.

    ``partition = (n_0, ..., n_k)`` with ``n_k = n``.  The curve follows the
    shortest periodic minimizer ``c`` for about ``n_0`` periods, then steps
    through the ``k`` consecutive lifts between ``c`` and ``c + s z_perp``,
    crossing to the next one within each block ``[n_{i-1}, n_i]`` by a
    windowed heteroclinic of ``n_i - n_{i-1}`` periods.  ``k`` is the number
    of minimizers times ``|z|^2``.
    """
    ev = _evaluator(source if source is not None else spec)
    z = LatticeVector.of(z)
    if not z.primitive:
        raise DiagnosticsError(f"{z.tuple()} is not primitive")
    if s not in (-1, 1):
        raise DiagnosticsError("s must be +1 or -1")
    part = tuple(int(p) for p in partition)
    if len(part) < 2 or part[-1] != n or part[0] < 0 or any(b < a for a, b in zip(part, part[1:])):
        raise DiagnosticsError("partition must be non-decreasing, start >= 0 and end at n")
    gaps = [b - a for a, b in zip(part, part[1:])]
    if min(gaps) < 1:
        raise DiagnosticsError("every heteroclinic block needs at least one period")
    opts = ev.opts
    pm = find_periodic_minimizers(spec, z, restarts, opts.minimize, _class_rng(opts.seed, z.tuple()))
    c = pm.best.loop
    kz = z.a * z.a + z.b * z.b
    k = pm.count * kz
    if len(gaps) != k:
        raise DiagnosticsError(f"partition has {len(gaps)} blocks but the strip holds {k} copies "
                               f"({pm.count} minimizer(s) times |z|^2 = {kz})")
    rep = monodromy_of_closed(spec, c, step=opts.floquet_step)
    lam = rep.lyapunov if rep.hyperbolic else math.nan
    sigma = pm.best.sigma
    w = np.array(z.complement().tuple(), dtype=float)
    ppp = points_per_period or max(64, 32 * int(math.ceil(z.norm)))
    hets = []
    U = c
    for g, V in zip(gaps, _strip_copies([r.loop for r in pm.orbits], c, w, kz, s)):
        V = _aligned(U, V)
        h = _heteroclinic(spec, U, V, g, ppp, lam, splice_tol)
        if not h.converged:
            raise DiagnosticsError(f"heteroclinic window of {g} periods did not converge")
        hets.append(h)
        U = V.translate(g * U.zvec)
    zp = perp(z.tuple())
    target = np.array([n * z.a + s * zp[0], n * z.b + s * zp[1]], dtype=float)
    disp = U.points[0] - c.points[0]
    rest = target - disp
    arcs = int(round(float(np.dot(rest, c.zvec)) / kz))
    if not np.allclose(rest, arcs * c.zvec, atol=1e-6) or arcs < 0:
        raise RuntimeError(f"broken curve cannot close in class {tuple(target.astype(int))}: "
                           f"remaining displacement {rest}")
    Y = _period_samples(c, ppp)
    pts = [Y + j * c.zvec for j in range(arcs)]
    origin = c.points[0] + arcs * c.zvec
    for h in hets:
        pts.append(h.points[:-1] - h.points[0] + origin)
        origin = origin + h.displacement
    pts.append(origin[None, :])
    P = np.vstack(pts)
    cls = tuple(int(round(x)) for x in P[-1] - P[0])
    if not np.allclose(P[-1] - P[0], cls, atol=1e-6) or cls != tuple(int(x) for x in target):
        raise RuntimeError(f"broken curve has class {cls}, expected {tuple(int(x) for x in target)}")
    length = arcs * sigma + math.fsum(h.length for h in hets)
    err = arcs * pm.best.refine_error if math.isfinite(pm.best.refine_error) else 0.0
    err += math.fsum(h.length_error for h in hets)
    fd = forward_derivative_at_lattice(ev, z, (s * zp[0], s * zp[1]))
    # the decay constant belongs to the orbit pair; the longest window resolves it best
    fitted = [h for h in hets if math.isfinite(h.amplitude)]
    amp = max(fitted, key=lambda h: (h.periods, h.amplitude)).amplitude if fitted else math.nan
    tail = math.fsum(math.exp(-lam * sigma * g / 2.0) for g in gaps) if math.isfinite(lam) else math.nan
    rhs = n * sigma + fd.value + 2.0 * amp * tail
    return BrokenCurve(z.tuple(), s, n, part, P, length, err, cls, arcs, sigma, fd.value, lam, amp,
                       rhs, hets)
