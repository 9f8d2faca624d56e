"""Geodesic flow of ``L = F^2/2``, its linearization and Floquet analysis.

The Euler-Lagrange system is written in ``(x, v)`` as ``x' = v``,
``v' = a(x, v)`` with ``L_vv a = L_x - L_vx v``.  For conformal metrics
``F = sqrt(f)|v|`` this is

    a = (grad f |v|^2 / 2 - v <grad f, v>) / f,

and for the flat norms ``a = 0``.  Both the field and its Jacobian are
evaluated analytically from the metric's Fourier data.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .metrics import FlatNorm, MetricError, _ConformalBase


class IntegrationError(RuntimeError):
    pass


@dataclass(frozen=True)
class GeodesicState:
    x: np.ndarray
    v: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "x", np.array(self.x, dtype=float).reshape(2))
        object.__setattr__(self, "v", np.array(self.v, dtype=float).reshape(2))

    @property
    def y(self):
        return np.concatenate([self.x, self.v])


@dataclass
class Trajectory:
    t: np.ndarray
    x: np.ndarray
    v: np.ndarray
    F: np.ndarray
    step: float

    def __len__(self):
        return len(self.t)

    def state(self, i=-1):
        return GeodesicState(self.x[i], self.v[i], float(self.t[i]))

    @property
    def energy_drift(self):
        return float(np.max(np.abs(self.F - self.F[0])))

    def rows(self):
        return np.column_stack([self.t, self.x, self.v, self.F])

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "x1", "x2", "v1", "v2", "F"])
            for r in self.rows():
                w.writerow([f"{c:.12g}" for c in r])


def _field(spec):
    """Acceleration ``a(x, v)`` and its Jacobian blocks ``(a_x, a_v)``."""
    if isinstance(spec, _ConformalBase):
        def accel(x, v):
            f = spec.factor(x)
            g = spec.factor_grad(x)
            return (g * (0.5 * v @ v) - v * (g @ v)) / f

        def jac(x, v):
            f = spec.factor(x)
            g = spec.factor_grad(x)
            H = spec.factor_hess(x)
            a = (g * (0.5 * v @ v) - v * (g @ v)) / f
            Hv = H @ v
            ax = (0.5 * (v @ v) * H - np.outer(v, Hv)) / f - np.outer(a, g) / f
            av = (np.outer(g, v) - (g @ v) * np.eye(2) - np.outer(v, g)) / f
            return ax, av

        return accel, jac
    if isinstance(spec, FlatNorm):
        zero2 = np.zeros((2, 2))

        def accel(x, v):
            return np.zeros(2)

        def jac(x, v):
            return zero2, zero2

        return accel, jac
    raise MetricError(f"no geodesic field for {type(spec).__name__}")


def _check_hessian(spec, x, v):
    Lvv = spec.lagrangian(x, v)[3]
    try:
        np.linalg.cholesky(0.5 * (Lvv + Lvv.T))
    except np.linalg.LinAlgError as exc:
        raise IntegrationError(f"L_vv not positive definite at x={x}, v={v}") from exc
    return Lvv


def _steps(duration, step):
    if step <= 0:
        raise ValueError("step must be positive")
    if duration < 0:
        raise ValueError("duration must be non-negative")
    n = max(1, int(math.ceil(duration / step - 1e-9)))
    return n, duration / n


def _rk4(rhs, y, h):
    k1 = rhs(y)
    k2 = rhs(y + 0.5 * h * k1)
    k3 = rhs(y + 0.5 * h * k2)
    k4 = rhs(y + h * k3)
    return y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


def integrate_geodesic(spec, initial, duration, step=1e-3):
    """Classical RK4 on the Euler-Lagrange system with a fixed step."""
    if not np.any(initial.v):
        raise MetricError("zero initial velocity")
    _check_hessian(spec, initial.x, initial.v)
    accel, _ = _field(spec)
    n, h = _steps(duration, step)

    def rhs(y):
        return np.concatenate([y[2:], accel(y[:2], y[2:])])

    Y = np.empty((n + 1, 4))
    Y[0] = initial.y
    for i in range(n):
        Y[i + 1] = _rk4(rhs, Y[i], h)
    if not np.all(np.isfinite(Y)):
        raise IntegrationError("trajectory left the finite range")
    t = initial.t + h * np.arange(n + 1)
    return Trajectory(t, Y[:, :2].copy(), Y[:, 2:].copy(), spec.F(Y[:, :2], Y[:, 2:]), h)


def _variational_rhs(spec):
    accel, jac = _field(spec)

    def rhs(Y):
        x, v = Y[:2], Y[2:4]
        Phi = Y[4:].reshape(4, 4)
        ax, av = jac(x, v)
        J = np.zeros((4, 4))
        J[:2, 2:] = np.eye(2)
        J[2:, :2] = ax
        J[2:, 2:] = av
        return np.concatenate([v, accel(x, v), (J @ Phi).ravel()])

    return rhs


def flow_with_jacobian(spec, initial, duration, step=1e-3):
    """Endpoint state and the 4x4 derivative of the time-``duration`` flow map."""
    _check_hessian(spec, initial.x, initial.v)
    rhs = _variational_rhs(spec)
    n, h = _steps(duration, step)
    Y = np.concatenate([initial.y, np.eye(4).ravel()])
    for _ in range(n):
        Y = _rk4(rhs, Y, h)
    if not np.all(np.isfinite(Y)):
        raise IntegrationError("variational equation diverged")
    return GeodesicState(Y[:2], Y[2:4], initial.t + duration), Y[4:].reshape(4, 4)


def linearize_along(spec, trajectory):
    """Fundamental matrix of the variational equation over ``trajectory``.

    The trajectory is re-integrated jointly with the variational equation at
    its own step so the Jacobian is evaluated on the same discrete orbit.
    """
    duration = float(trajectory.t[-1] - trajectory.t[0])
    _, Phi = flow_with_jacobian(spec, trajectory.state(0), duration, trajectory.step)
    return Phi


def liouville_determinant(spec, x0, v0, x1, v1):
    """``det L_vv(x0, v0) / det L_vv(x1, v1)``: the predicted ``det`` of the flow derivative."""
    d0 = np.linalg.det(spec.lagrangian(x0, v0)[3])
    d1 = np.linalg.det(spec.lagrangian(x1, v1)[3])
    return float(d0 / d1)


# Floquet analysis ------------------------------------------------------------

HYPERBOLIC_GAP = 1e-4
REAL_TOL = 1e-6
TRIVIAL_TOL = 1e-3


@dataclass
class FloquetReport:
    period: float
    eigenvalues: np.ndarray
    mu: complex
    mu_inv: complex
    classification: str  # hyperbolic | parabolic | elliptic | degenerate
    lyapunov: float
    residual: float
    closing_defect: float
    z: tuple = None
    notes: list = field(default_factory=list)

    @property
    def hyperbolic(self):
        return self.classification == "hyperbolic"

    def as_record(self):
        return {
            "z": list(self.z) if self.z is not None else None,
            "period": self.period,
            "eigenvalues": [[float(e.real), float(e.imag)] for e in self.eigenvalues],
            "mu": [float(np.real(self.mu)), float(np.imag(self.mu))],
            "classification": self.classification,
            "lyapunov": self.lyapunov,
            "det_residual": self.residual,
            "closing_defect": self.closing_defect,
            "notes": list(self.notes),
        }


def classify_monodromy(M, period, closing_defect=0.0, z=None):
    """Split off the two multipliers nearest 1 and classify the transverse pair."""
    eig = np.linalg.eigvals(M)
    order = np.argsort(np.abs(eig - 1.0))
    trivial, rest = eig[order[:2]], eig[order[2:]]
    rest = rest[np.argsort(-np.abs(rest))]
    mu, mu_inv = rest[0], rest[1]
    residual = abs(float(np.linalg.det(M)) - 1.0)
    notes = []
    cls = None
    if np.max(np.abs(trivial - 1.0)) > TRIVIAL_TOL:
        cls = "degenerate"
        notes.append(f"trivial multipliers off by {np.max(np.abs(trivial - 1.0)):.3g}")
    elif abs(mu * mu_inv - 1.0) > max(TRIVIAL_TOL, 1e-6 * abs(mu)):
        cls = "degenerate"
        notes.append(f"transverse pair not reciprocal: product {mu * mu_inv:.6g}")
    elif abs(mu - 1.0) <= HYPERBOLIC_GAP:
        # a perturbed Jordan block splits as 1 +- sqrt(eps): not a rotation
        cls = "parabolic"
    elif abs(mu.imag) < REAL_TOL * abs(mu) and abs(mu) > 1.0 + HYPERBOLIC_GAP:
        cls = "hyperbolic"
    elif abs(mu.imag) >= REAL_TOL * abs(mu) and abs(abs(mu) - 1.0) <= HYPERBOLIC_GAP:
        cls = "elliptic"
    else:
        cls = "parabolic"
    lyap = math.log(abs(mu)) / period if cls == "hyperbolic" else 0.0
    return FloquetReport(period, eig, complex(mu), complex(mu_inv), cls, lyap, residual,
                         closing_defect, tuple(z) if z is not None else None, notes)


def closed_orbit_initial(spec, loop):
    """Unit-speed initial state of the geodesic traced by a minimizing loop."""
    from .loop_minimizer import _spectral_derivative, _wavenumbers

    P = loop.points
    N = len(P)
    zvec = loop.zvec
    s = np.arange(N) / N
    V = zvec + _spectral_derivative(P - s[:, None] * zvec, _wavenumbers(N))
    x0, v0 = P[0], V[0]
    v0 = v0 / float(spec.F(x0, v0))
    return x0, v0


def _shoot(spec, x0, v0, zvec, T, step, iters=6, tol=1e-10):
    """Gauss-Newton on the closing defect in (transverse offset, direction, period).

    A step is kept only if it at least halves the defect, so a degenerate
    family of closed orbits (singular Jacobian) cannot throw the orbit away.
    """
    zhat = zvec / np.linalg.norm(zvec)
    nrm = np.array([-zhat[1], zhat[0]])
    rot = np.array([[0.0, -1.0], [1.0, 0.0]])
    accel = _field(spec)[0]

    def residual(x, v, t):
        end, Phi = flow_with_jacobian(spec, GeodesicState(x, v), t, step)
        r = np.concatenate([end.x - x - zvec, end.v - v])
        return end, Phi, r, float(np.linalg.norm(r))

    end, Phi, r, rn = residual(x0, v0, T)
    for _ in range(iters):
        if rn < tol:
            break
        # columns: d/ds (x0 += s n), d/dtheta (v0 rotated, speed kept), dT
        dxs = np.concatenate([nrm, np.zeros(2)])
        dth = np.concatenate([np.zeros(2), rot @ v0])
        cols = [Phi @ dxs - dxs, Phi @ dth - dth, np.concatenate([end.v, accel(end.x, end.v)])]
        delta, *_ = np.linalg.lstsq(np.column_stack(cols), -r, rcond=1e-10)
        if not np.all(np.isfinite(delta)):
            break
        c, sn = math.cos(delta[1]), math.sin(delta[1])
        cand = (x0 + delta[0] * nrm, np.array([[c, -sn], [sn, c]]) @ v0, T + delta[2])
        trial = residual(*cand)
        if not trial[3] <= 0.5 * rn:
            break
        (x0, v0, T), (end, Phi, r, rn) = cand, trial
    return x0, v0, T, Phi, rn


def monodromy_of_closed(spec, loop, step=None, closing_tol=1e-6, refine=True):
    """Floquet report of the closed geodesic approximated by ``loop``.

    The unit-speed period is the loop's length.  With ``refine`` the initial
    condition is corrected by shooting before the monodromy is taken.
    """
    from .loop_minimizer import discrete_length

    x0, v0 = closed_orbit_initial(spec, loop)
    zvec = loop.zvec
    T = discrete_length(spec, loop, "spectral")
    if step is None:
        step = T / max(200, int(math.ceil(T / 2e-3)))
    if refine:
        x0, v0, T, Phi, defect = _shoot(spec, x0, v0, zvec, T, step)
    else:
        end, Phi = flow_with_jacobian(spec, GeodesicState(x0, v0), T, step)
        defect = float(np.linalg.norm(np.concatenate([end.x - x0 - zvec, end.v - v0])))
    rep = classify_monodromy(Phi, T, defect, loop.z.tuple())
    if defect > closing_tol:
        rep.classification = "degenerate"
        rep.notes.append(f"closing defect {defect:.3g} exceeds {closing_tol:.3g}")
    return rep
