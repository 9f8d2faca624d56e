"""Shortest closed curves in a homotopy class by discrete energy descent.

A loop in class ``z`` is stored as ``N`` points ``x_0 .. x_{N-1}`` in the
universal cover; the closing point is ``x_N = x_0 + z``.  Two quadratures of
the energy ``int_0^1 L(c, c') ds`` are available:

``midpoint``
    polyline with ``L`` sampled at segment midpoints (second order);
``spectral``
    trigonometric interpolation of the periodic part ``x_j - j z / N``,
    integrated by the trapezoidal rule on a twice finer grid.  Oversampling
    keeps the descent from parking nodes in the wells of the metric while the
    interpolant between them escapes the quadrature.  Converges geometrically
    for analytic minimizers.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import minimize
from scipy.spatial import cKDTree

from .rational_approx import LatticeVector

log = logging.getLogger(__name__)

SCHEMES = ("midpoint", "spectral")


class LoopError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class DiscreteLoop:
    z: LatticeVector
    points: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "z", LatticeVector.of(self.z))
        pts = np.array(self.points, dtype=float).reshape(-1, 2)
        object.__setattr__(self, "points", pts)

    @property
    def N(self):
        return len(self.points)

    @property
    def zvec(self):
        return np.array(self.z.tuple(), dtype=float)

    def closed(self):
        """Points including the closing copy ``x_0 + z``."""
        return np.vstack([self.points, self.points[:1] + self.zvec])

    def periodic_part(self):
        s = np.arange(self.N) / self.N
        return self.points - s[:, None] * self.zvec

    def resample(self, N):
        """Trigonometric resampling of the periodic part to ``N`` points."""
        P = _fourier_resample(self.periodic_part(), N)
        s = np.arange(N) / N
        return DiscreteLoop(self.z, P + s[:, None] * self.zvec)

    def translate(self, w):
        return DiscreteLoop(self.z, self.points + np.asarray(w, dtype=float))

    def reversed(self):
        """Same image traversed backwards; class ``-z``."""
        pts = self.closed()[::-1][:-1]
        return DiscreteLoop(-self.z, pts)

    def iterate(self, k):
        """The loop traversed ``k`` times; class ``k z``."""
        pts = np.vstack([self.points + j * self.zvec for j in range(k)])
        return DiscreteLoop(self.z * k, pts)


def _fourier_resample(P, N):
    M = len(P)
    if M == N:
        return P.copy()
    C = np.fft.rfft(P, axis=0)
    out = np.zeros((N // 2 + 1, P.shape[1]), dtype=complex)
    m = min(len(C), len(out))
    out[:m] = C[:m]
    # drop a shared Nyquist bin to keep the result real and symmetric
    if M % 2 == 0 and m == M // 2 + 1:
        out[m - 1] *= 0.5 if N > M else 1.0
    if N % 2 == 0 and m == N // 2 + 1:
        out[m - 1] = out[m - 1].real
    return np.fft.irfft(out, n=N, axis=0) * (N / M)


def init_loop(z, offset=(0.0, 0.0), N=64):
    """Uniformly sampled straight segment from ``offset`` to ``offset + z``."""
    z = LatticeVector.of(z)
    if N < 2:
        raise LoopError("need at least two samples")
    s = np.arange(N) / N
    pts = np.asarray(offset, dtype=float)[None, :] + s[:, None] * np.array(z.tuple(), dtype=float)
    return DiscreteLoop(z, pts)


def _wavenumbers(N):
    k = np.fft.fftfreq(N, d=1.0 / N)
    if N % 2 == 0:
        k[N // 2] = 0.0
    return k


def _spectral_derivative(P, k):
    return np.fft.ifft(1j * 2 * math.pi * k[:, None] * np.fft.fft(P, axis=0), axis=0).real


OVERSAMPLE = 2


def _upsample(Y, M):
    """Trigonometric interpolant of the periodic samples ``Y`` on ``M`` nodes."""
    N = len(Y)
    C = np.fft.fft(Y, axis=0)
    out = np.zeros((M,) + Y.shape[1:], dtype=complex)
    h = (N - 1) // 2  # Nyquist mode of even N is dropped
    out[:h + 1] = C[:h + 1]
    if h:
        out[-h:] = C[-h:]
    return np.fft.ifft(out, axis=0).real * (M / N)


def _upsample_adjoint(G, N):
    C = np.fft.fft(G, axis=0)
    out = np.zeros((N,) + G.shape[1:], dtype=complex)
    h = (N - 1) // 2
    out[:h + 1] = C[:h + 1]
    if h:
        out[-h:] = C[-h:]
    return np.fft.ifft(out, axis=0).real


def _spectral_samples(pts, zvec):
    """Points and velocities of the interpolating loop on the fine grid."""
    N = len(pts)
    M = OVERSAMPLE * N
    Y = _upsample(pts - (np.arange(N) / N)[:, None] * zvec, M)
    km = _wavenumbers(M)
    X = Y + (np.arange(M) / M)[:, None] * zvec
    V = zvec + _spectral_derivative(Y, km)
    return X, V, km


def _segments(loop_pts, zvec):
    nxt = np.vstack([loop_pts[1:], loop_pts[:1] + zvec])
    return 0.5 * (loop_pts + nxt), nxt - loop_pts


def discrete_energy(spec, loop, scheme="midpoint"):
    """Energy ``int_0^1 L`` of the loop over the unit parameter interval."""
    return _energy(spec, loop.points, loop.zvec, scheme, grad=False)


def discrete_length(spec, loop, scheme="midpoint"):
    """F-length of the loop."""
    pts, zvec = loop.points, loop.zvec
    if scheme == "midpoint":
        mid, d = _segments(pts, zvec)
        if np.any(np.all(d == 0.0, axis=1)):
            raise LoopError("degenerate segment in loop")
        return math.fsum(spec.F(mid, d))
    if scheme == "spectral":
        X, V, _ = _spectral_samples(pts, zvec)
        return math.fsum(spec.F(X, V)) / len(X)
    raise LoopError(f"unknown scheme {scheme!r}")


def _energy(spec, pts, zvec, scheme, grad=True, k=None):
    N = len(pts)
    if scheme == "midpoint":
        mid, d = _segments(pts, zvec)
        if np.any(np.all(d == 0.0, axis=1)):
            raise LoopError("degenerate segment in loop")
        L, Lx, Lv, _ = spec.lagrangian(mid, d)
        E = N * math.fsum(L)
        if not grad:
            return E
        a = 0.5 * Lx - Lv
        b = 0.5 * Lx + Lv
        g = N * (a + np.roll(b, 1, axis=0))
        return E, g
    if scheme == "spectral":
        X, V, km = _spectral_samples(pts, zvec)
        M = len(X)
        L, Lx, Lv, _ = spec.lagrangian(X, V)
        E = math.fsum(L) / M
        if not grad:
            return E
        g = _upsample_adjoint((Lx - _spectral_derivative(Lv, km)) / M, N)
        return E, g
    raise LoopError(f"unknown scheme {scheme!r}")


@dataclass(frozen=True)
class MinimizeOptions:
    """Descent and refinement controls.

    ``n_schedule`` gives samples per unit of ``ceil(|z|)``; refinement stops
    once consecutive lengths agree to ``tol_refine`` (relative).
    """

    scheme: str = "spectral"
    tol_grad: float = 1e-9
    max_iter: int = 20000
    n_schedule: tuple = (16, 32, 64)
    tol_refine: float = 1e-10
    min_points: int = 16
    max_points: int = 1 << 17

    def sizes(self, z):
        scale = max(1, math.ceil(LatticeVector.of(z).norm))
        out = []
        for n in self.n_schedule:
            N = int(min(max(self.min_points, n * scale), self.max_points))
            if not out or N > out[-1]:
                out.append(N)
        return out


@dataclass(eq=False)
class MinimizerResult:
    sigma: float
    loop: DiscreteLoop
    converged: bool
    grad_norm: float
    N: int
    energy: float
    history: list = field(default_factory=list)
    refine_error: float = float("nan")
    iterations: int = 0

    @property
    def z(self):
        return self.loop.z

    def as_record(self):
        return {"z": list(self.z.tuple()), "sigma": self.sigma, "converged": bool(self.converged),
                "N": self.N, "grad_norm": self.grad_norm}


def _preconditioner(N, scale, scheme):
    k = _wavenumbers(N)
    if scheme == "spectral":
        sym = (2 * math.pi * k) ** 2
    else:
        sym = (2 * N * np.sin(math.pi * np.fft.fftfreq(N))) ** 2
    sym = np.where(sym == 0, (2 * math.pi) ** 2, sym)
    return 1.0 / np.sqrt(scale / N * sym)


def _apply(w, Y):
    return np.fft.ifft(np.fft.fft(Y, axis=0) * w[:, None], axis=0).real


def _grad_norm(g):
    return math.sqrt(len(g) * float(np.sum(g * g)))


def descend(spec, loop, scheme="spectral", tol_grad=1e-9, max_iter=20000):
    """Minimize the discrete energy at fixed ``N``; returns (loop, E, |grad|, its, ok)."""
    pts0 = loop.points
    N = len(pts0)
    zvec = loop.zvec
    k = _wavenumbers(N)
    _, _, _, Lvv = spec.lagrangian(pts0, np.broadcast_to(zvec, pts0.shape))
    scale = float(np.mean(np.trace(Lvv, axis1=1, axis2=2))) / 2.0
    w = _preconditioner(N, max(scale, 1e-12), scheme)
    base = pts0.copy()

    def unpack(y):
        return base + _apply(w, y.reshape(N, 2))

    def fun(y):
        pts = unpack(y)
        E, g = _energy(spec, pts, zvec, scheme, k=k)
        return E, _apply(w, g).ravel()

    y = np.zeros(2 * N)
    its = 0
    gn = math.inf
    E = math.nan
    for _ in range(6):
        res = minimize(fun, y, jac=True, method="L-BFGS-B",
                       options={"maxiter": max(1, max_iter - its), "maxcor": 30,
                                "ftol": 1e-16, "gtol": 1e-300, "maxls": 40})
        its += int(res.nit)
        y = res.x
        pts = unpack(y)
        E, g = _energy(spec, pts, zvec, scheme, k=k)
        gn = _grad_norm(g)
        tol = tol_grad * max(1.0, abs(E))
        if gn < tol or its >= max_iter:
            break
        # restart from the current iterate with a fresh base to shed round-off
        base = pts
        y = np.zeros(2 * N)
        if res.nit <= 1:
            break
    pts = unpack(y)
    if gn >= tol:
        pts, E, gn = _newton_polish(spec, pts, zvec, scheme, k, w, tol)
    return DiscreteLoop(loop.z, pts), E, gn, its, gn < tol


def _newton_polish(spec, pts, zvec, scheme, k, w, tol_grad, steps=8):
    """Newton-CG on the gradient; not limited by round-off in the energy."""
    from scipy.sparse.linalg import LinearOperator, cg

    N = len(pts)
    E, g = _energy(spec, pts, zvec, scheme, k=k)
    gn = _grad_norm(g)
    w2 = w * w
    for _ in range(steps):
        if gn < tol_grad:
            break
        scale = 1e-6 * max(1.0, float(np.abs(pts).max()))

        def hv(p, pts=pts):
            pn = float(np.linalg.norm(p))
            if pn == 0.0:
                return np.zeros_like(p)
            eps = scale / pn
            p = p.reshape(N, 2)
            gp = _energy(spec, pts + eps * p, zvec, scheme, k=k)[1]
            gm = _energy(spec, pts - eps * p, zvec, scheme, k=k)[1]
            return ((gp - gm) / (2 * eps)).ravel()

        H = LinearOperator((2 * N, 2 * N), matvec=hv)
        M = LinearOperator((2 * N, 2 * N), matvec=lambda r: _apply(w2, r.reshape(N, 2)).ravel())
        step, _ = cg(H, -g.ravel(), M=M, maxiter=60, rtol=1e-6)
        trial = pts + step.reshape(N, 2)
        E2, g2 = _energy(spec, trial, zvec, scheme, k=k)
        gn2 = _grad_norm(g2)
        if not gn2 < gn:
            break
        pts, E, g, gn = trial, E2, g2, gn2
    return pts, E, gn


def minimize_loop(spec, loop, opts=None):
    """Descend the energy through the refinement schedule; length is the estimate."""
    opts = opts or MinimizeOptions()
    if opts.scheme not in SCHEMES:
        raise LoopError(f"unknown scheme {opts.scheme!r}")
    history = []
    cur = loop
    prev_sigma = None
    result = None
    total_its = 0
    for N in opts.sizes(loop.z):
        cur = cur.resample(N) if cur.N != N else cur
        cur, E, gn, its, ok = descend(spec, cur, opts.scheme, opts.tol_grad, opts.max_iter)
        total_its += its
        sigma = discrete_length(spec, cur, opts.scheme)
        history.append((N, sigma))
        err = abs(sigma - prev_sigma) if prev_sigma is not None else math.nan
        result = MinimizerResult(sigma, cur, ok, gn, N, E, list(history), err, total_its)
        if prev_sigma is not None and err <= opts.tol_refine * abs(sigma):
            break
        prev_sigma = sigma
    return result


def loop_distance(a, b):
    """Hausdorff distance between the projections of two loops to the torus."""
    A = np.mod(_dense(a), 1.0)
    B = np.mod(_dense(b), 1.0)
    # mod can return exactly 1.0 for tiny negative inputs
    A[A >= 1.0] = 0.0
    B[B >= 1.0] = 0.0
    ta = cKDTree(A, boxsize=1.0)
    tb = cKDTree(B, boxsize=1.0)
    return float(max(tb.query(A)[0].max(), ta.query(B)[0].max()))


def _dense(loop, spacing=0.01):
    """Trigonometric interpolant of the loop sampled about every ``spacing``."""
    P = loop.points
    N = len(P)
    extent = float(np.abs(np.diff(loop.closed(), axis=0)).sum())
    M = max(N, int(math.ceil(extent / spacing)))
    s = np.arange(N) / N
    Y = _upsample(P - s[:, None] * loop.zvec, M) if M > N else P - s[:, None] * loop.zvec
    return Y + (np.arange(M) / M)[:, None] * loop.zvec


@dataclass(eq=False)
class PeriodicMinimizers:
    z: LatticeVector
    orbits: list
    candidates: list
    best_sigma: float

    @property
    def count(self):
        return len(self.orbits)

    @property
    def best(self):
        return self.orbits[0]


def restart_offsets(z, restarts, rng=None):
    """Offsets spread across one transverse period of class ``z``."""
    z = LatticeVector.of(z)
    _, zp = z.reduce()
    w = np.array(zp.complement().tuple(), dtype=float)
    rng = np.random.default_rng(0) if rng is None else rng
    jitter = rng.uniform(0.05, 0.45, size=restarts) / restarts
    s = np.arange(restarts) / restarts + jitter
    return [si * w for si in s]


def find_periodic_minimizers(spec, z, restarts=8, opts=None, rng=None,
                             cluster_threshold=1e-2, rel_tol=1e-4):
    """Multi-start search for the shortest closed curves in class ``z``.

    All restarts run at the coarsest size of the schedule; the distinct
    near-minimal orbits are then refined through the full schedule.
    """
    z = LatticeVector.of(z)
    if not z.primitive:
        raise LoopError(f"{z.tuple()} is not primitive")
    if restarts < 1:
        raise LoopError("need at least one restart")
    opts = opts or MinimizeOptions()
    sizes = opts.sizes(z)
    coarse = replace(opts, n_schedule=(opts.n_schedule[0],))
    cands = []
    for off in restart_offsets(z, restarts, rng):
        cands.append(minimize_loop(spec, init_loop(z, off, sizes[0]), coarse))
    cands.sort(key=lambda r: r.sigma)
    best = cands[0].sigma
    near = [r for r in cands if r.sigma <= best + max(rel_tol * abs(best), 1e-12)]
    reps = []
    for r in near:
        if all(loop_distance(r.loop, q.loop) > cluster_threshold for q in reps):
            reps.append(r)
    refined = []
    for r in reps:
        if len(sizes) > 1:
            refined.append(minimize_loop(spec, r.loop, opts))
        else:
            refined.append(r)
    refined.sort(key=lambda r: r.sigma)
    best = refined[0].sigma
    orbits = [r for r in refined if r.sigma <= best + max(rel_tol * abs(best), 1e-12)]
    return PeriodicMinimizers(z, orbits, cands, best)


def sigma_of_class(spec, z, restarts=4, opts=None, rng=None):
    """Best length over a few restarts for any (possibly non-primitive) class."""
    z = LatticeVector.of(z)
    opts = opts or MinimizeOptions()
    sizes = opts.sizes(z)
    coarse = replace(opts, n_schedule=(opts.n_schedule[0],))
    best = None
    for off in restart_offsets(z, restarts, rng):
        r = minimize_loop(spec, init_loop(z, off, sizes[0]), coarse)
        if best is None or r.sigma < best.sigma:
            best = r
    if len(sizes) > 1:
        best = minimize_loop(spec, best.loop, opts)
    return best
