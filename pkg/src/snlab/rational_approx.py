"""Lattice vectors, continued-fraction convergents and lattice counts."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

# irrational slopes are carried as exact rationals with this many fractional bits
SLOPE_BITS = 96


@dataclass(frozen=True, order=True)
class LatticeVector:
    """Nonzero integer vector ``(a, b)``; the homotopy class of a closed curve."""

    a: int
    b: int

    def __post_init__(self):
        object.__setattr__(self, "a", int(self.a))
        object.__setattr__(self, "b", int(self.b))
        if self.a == 0 and self.b == 0:
            raise ValueError("the zero class has no closed minimizers")

    @classmethod
    def of(cls, z):
        if isinstance(z, LatticeVector):
            return z
        a, b = z
        if int(a) != a or int(b) != b:
            raise ValueError(f"{z!r} is not an integer vector")
        return cls(int(a), int(b))

    @property
    def primitive(self):
        return math.gcd(self.a, self.b) == 1

    @property
    def norm(self):
        return math.hypot(self.a, self.b)

    def __iter__(self):
        yield self.a
        yield self.b

    def __neg__(self):
        return LatticeVector(-self.a, -self.b)

    def __mul__(self, n):
        return LatticeVector(self.a * n, self.b * n)

    __rmul__ = __mul__

    def __add__(self, other):
        a, b = other
        return LatticeVector(self.a + a, self.b + b)

    def tuple(self):
        return (self.a, self.b)

    def reduce(self):
        """``(multiplicity, primitive)`` with ``self == multiplicity * primitive``."""
        g = math.gcd(self.a, self.b)
        return g, LatticeVector(self.a // g, self.b // g)

    def complement(self):
        """A lattice vector ``w`` with ``det(self, w) = 1`` (primitive only)."""
        if not self.primitive:
            raise ValueError(f"{self.tuple()} is not primitive")
        g, s, t = _egcd(self.a, self.b)
        # a*s + b*t = 1  =>  det((a, b), (-t, s)) = a*s + b*t = 1
        return LatticeVector(-t, s)


def _egcd(a, b):
    if b == 0:
        return (abs(a), 1 if a >= 0 else -1, 0)
    g, s, t = _egcd(b, a % b)
    return g, t, s - (a // b) * t


def perp(z):
    """Rotation by +90 degrees: ``(z1, z2) -> (-z2, z1)``."""
    a, b = z
    if isinstance(z, LatticeVector):
        return LatticeVector(-b, a)
    return (-b, a)


def det(z, w):
    return z[0] * w[1] - z[1] * w[0]


@dataclass(frozen=True)
class Convergent:
    p: int
    q: int
    error: float
    side: int  # sign of (p/q - omega)

    @property
    def value(self):
        return Fraction(self.p, self.q)


def to_fraction(omega, bits=SLOPE_BITS):
    """High-precision rational stand-in for a real slope."""
    if isinstance(omega, Fraction):
        return omega
    if isinstance(omega, int):
        return Fraction(omega)
    try:
        import mpmath

        if isinstance(omega, mpmath.mpf):
            m, e = mpmath.mpf(omega).man_exp
            return Fraction(int(m)) * Fraction(2) ** int(e)
    except ImportError:  # pragma: no cover
        pass
    return Fraction(omega)


def golden_conjugate():
    """``(sqrt 5 - 1)/2`` to ``SLOPE_BITS`` fractional bits."""
    s = math.isqrt(5 << (2 * SLOPE_BITS))
    return Fraction(s - (1 << SLOPE_BITS), 2 << SLOPE_BITS)


def sqrt2_minus_1():
    s = math.isqrt(2 << (2 * SLOPE_BITS))
    return Fraction(s - (1 << SLOPE_BITS), 1 << SLOPE_BITS)


def pi_minus_3():
    import mpmath

    with mpmath.workprec(SLOPE_BITS + 16):
        return to_fraction(+mpmath.pi) - 3


def cf_terms(omega):
    """Partial quotients of a rational number (finite)."""
    x = to_fraction(omega)
    while True:
        a = math.floor(x)
        yield a
        rem = x - a
        if rem == 0:
            return
        x = 1 / rem


def convergents(omega, q_max):
    """Continued-fraction convergents ``p/q`` of ``omega`` with ``q <= q_max``."""
    if q_max < 1:
        raise ValueError("q_max must be >= 1")
    x = to_fraction(omega)
    out = []
    p0, q0, p1, q1 = 0, 1, 1, 0
    for a in cf_terms(x):
        p0, q0, p1, q1 = p1, q1, a * p1 + p0, a * q1 + q0
        if q1 > q_max:
            break
        r = Fraction(p1, q1) - x
        if out and out[-1].q == q1:
            # a_1 = 1 repeats q = 1; the later convergent is the better one
            out.pop()
        out.append(Convergent(p1, q1, float(abs(r)), (r > 0) - (r < 0)))
        if r == 0:
            break
    return out


def primitive_vectors(Q):
    """All primitive ``z`` with ``0 < |z| <= Q``, both orientations, sorted by angle."""
    if Q < 1:
        raise ValueError("Q must be >= 1")
    Qf = float(Q)
    R = int(math.floor(Qf))
    out = []
    for a in range(-R, R + 1):
        for b in range(-R, R + 1):
            if (a or b) and a * a + b * b <= Qf * Qf + 1e-9 and math.gcd(a, b) == 1:
                out.append(LatticeVector(a, b))
    out.sort(key=lambda z: (math.atan2(z.b, z.a), z.norm))
    return out


def pick_count(z):
    """``1 + #(Z^2 in the open square spanned by z, perp(z))``."""
    z = LatticeVector.of(z)
    if not z.primitive:
        raise ValueError(f"{z.tuple()} is not primitive")
    a, b = z
    zp = perp((a, b))
    corners = [(0, 0), (a, b), zp, (a + zp[0], b + zp[1])]
    xs = [c[0] for c in corners]
    ys = [c[1] for c in corners]
    n2 = a * a + b * b
    count = 0
    for x in range(min(xs), max(xs) + 1):
        for y in range(min(ys), max(ys) + 1):
            # coordinates in the (z, perp z) frame scaled by |z|^2
            s = x * a + y * b
            t = x * zp[0] + y * zp[1]
            if 0 < s < n2 and 0 < t < n2:
                count += 1
    return 1 + count


def farey_bracket(direction, max_norm):
    """Adjacent primitive vectors enclosing ``direction`` (Stern-Brocot descent).

    Returns the list of brackets ``(left, right)`` visited, each with
    ``det(left, right) = 1`` and ``direction`` in the closed cone between them,
    stopping once a further descent would exceed ``max_norm``.  ``direction``
    is an exact pair of Fractions or floats.
    """
    x, y = (to_fraction(c) for c in direction)
    if x == 0 and y == 0:
        raise ValueError("zero direction")
    # start from the quadrant basis containing the direction
    quad = [((1, 0), (0, 1)), ((0, 1), (-1, 0)), ((-1, 0), (0, -1)), ((0, -1), (1, 0))]
    for left, right in quad:
        if det(left, (x, y)) >= 0 and det((x, y), right) >= 0 and not (det(left, (x, y)) == 0 and _dot(left, (x, y)) < 0):
            break
    brackets = [(left, right)]
    while True:
        med = (left[0] + right[0], left[1] + right[1])
        if math.hypot(*med) > max_norm:
            break
        d = det(med, (x, y))
        if d == 0:
            brackets.append((med, med))
            break
        if d > 0:
            left = med
        else:
            right = med
        brackets.append((left, right))
    return brackets


def _dot(u, v):
    return u[0] * v[0] + u[1] * v[1]
