"""Core dynamics of the even-degree unicritical family f(z) = z**d + c.

Everything downstream (parabolic location, Fatou coordinates, the branch
system, rendering) is built on the few primitives in this module: stable
evaluation and iteration, truncated-Taylor (jet) transport along orbits, and
a Newton cycle solver with minimal-period and multiplier reporting.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# Modulus beyond which a point counts as escaped.  Large enough that no
# bounded orbit ever trips it, small enough that one more evaluation cannot
# overflow to inf for the degrees we support (documented contract: overflow
# is reported as escape, never as a crash).
ESCAPE_CEILING = 1e150


class ConvergenceError(RuntimeError):
    """A Newton / limit computation failed to reach its tolerance."""


class PeriodError(ConvergenceError):
    """find_cycle converged onto a cycle whose minimal period divides k."""


@dataclass(frozen=True)
class Family:
    """The polynomial family z -> z**d + c with d even and c real."""

    d: int
    c: float

    def __post_init__(self):
        if not isinstance(self.d, int) or self.d < 2 or self.d % 2:
            raise ValueError(f"degree must be an even integer >= 2, got {self.d!r}")
        if not math.isfinite(self.c):
            raise ValueError(f"parameter c must be finite, got {self.c!r}")

    @property
    def escape_radius(self) -> float:
        """Radius beyond which escape to infinity is certain: max(2, |c|**(1/(d-1)) + 1)."""
        return max(2.0, abs(self.c) ** (1.0 / (self.d - 1)) + 1.0)


def _pow_even(z: complex, d: int) -> complex:
    """z**d for even d by repeated squaring (exact operation count, no pow branch)."""
    w = z * z
    e = d // 2
    out = 1.0 + 0.0j
    while e:
        if e & 1:
            out *= w
        w = w * w if e > 1 else w
        e >>= 1
    return out


def evaluate(fam: Family, z: complex) -> complex:
    """One application of the map.  Escaped input is passed through unchanged."""
    if not np.isfinite(z.real) or not np.isfinite(z.imag) or abs(z) > ESCAPE_CEILING:
        return complex(np.inf, 0.0)
    with np.errstate(over="ignore", invalid="ignore"):
        return _pow_even(complex(z), fam.d) + fam.c


def iterate(fam: Family, z: complex, m: int, sign: float = 1.0) -> complex:
    """m-fold iterate.  `sign=-1` iterates the even-conjugate -f(z) instead.

    Stops early (returning an escaped marker) once the modulus passes
    ESCAPE_CEILING, so callers never see overflow warnings.
    """
    if m < 0:
        raise ValueError("iterate wants m >= 0")
    w = complex(z)
    for _ in range(m):
        if abs(w) > ESCAPE_CEILING or not math.isfinite(w.real) or not math.isfinite(w.imag):
            return complex(np.inf, 0.0)
        w = sign * (_pow_even(w, fam.d) + fam.c)
    return w


# ---------------------------------------------------------------------------
# Jets: truncated Taylor expansions z0 + c1*h + c2*h**2 + ... used to push
# derivatives through compositions without symbolic work.
# ---------------------------------------------------------------------------


class Jet:
    """Truncated Taylor polynomial; coef[i] is the coefficient of h**i."""

    __slots__ = ("coef",)

    def __init__(self, coef):
        self.coef = np.asarray(coef, dtype=complex)
        if self.coef.ndim != 1 or len(self.coef) < 1:
            raise ValueError("jet needs a 1-D coefficient array")

    @classmethod
    def identity(cls, z0: complex, order: int) -> "Jet":
        c = np.zeros(order + 1, dtype=complex)
        c[0] = z0
        if order >= 1:
            c[1] = 1.0
        return cls(c)

    @property
    def order(self) -> int:
        return len(self.coef) - 1

    @property
    def value(self) -> complex:
        return complex(self.coef[0])

    def derivative(self, i: int) -> complex:
        """i-th derivative of the represented function at the base point."""
        if i > self.order:
            raise ValueError(f"jet of order {self.order} has no derivative {i}")
        return complex(self.coef[i]) * math.factorial(i)

    def __add__(self, other):
        if isinstance(other, Jet):
            n = min(len(self.coef), len(other.coef))
            return Jet(self.coef[:n] + other.coef[:n])
        a = self.coef.copy()
        a[0] += other
        return Jet(a)

    __radd__ = __add__

    def __mul__(self, other):
        if isinstance(other, Jet):
            n = min(self.order, other.order)
            out = np.zeros(n + 1, dtype=complex)
            for i in range(n + 1):
                out[i] = np.dot(self.coef[: i + 1], other.coef[i::-1][: i + 1])
            return Jet(out)
        return Jet(self.coef * other)

    __rmul__ = __mul__

    def pow_int(self, d: int) -> "Jet":
        """Integer power by repeated squaring, truncated at this jet's order."""
        if d < 1:
            raise ValueError("pow_int wants d >= 1")
        base = self
        out = None
        e = d
        while e:
            if e & 1:
                out = base if out is None else out * base
            e >>= 1
            if e:
                base = base * base
        return out

    def compose_poly(self, poly_coef) -> "Jet":
        """Evaluate the polynomial sum(poly_coef[i] * w**i) at this jet (Horner)."""
        p = np.asarray(poly_coef, dtype=complex)
        out = Jet(np.zeros(self.order + 1, dtype=complex))
        for a in p[::-1]:
            out = out * self + a
        return out


def evaluate_jet(fam: Family, jet: Jet, sign: float = 1.0) -> Jet:
    """Push a jet through one step of the (optionally sign-conjugated) map."""
    out = jet.pow_int(fam.d) + fam.c
    return out * sign if sign != 1.0 else out


def orbit_jet(fam: Family, z0: complex, m: int, order: int = 3, sign: float = 1.0) -> Jet:
    """Jet of the m-fold iterate at z0 (identity seed transported m times)."""
    j = Jet.identity(z0, order)
    for _ in range(m):
        j = evaluate_jet(fam, j, sign)
    return j


# ---------------------------------------------------------------------------
# Orbit derivative recurrences (first/second order in z and c).  These feed
# the 2-D Newton in the parabolic locator and the persistence checks; they
# are the cheap forward-mode alternative to full jets when only a handful of
# partials is needed.
# ---------------------------------------------------------------------------


def orbit_partials(fam: Family, z0: complex, m: int):
    """Return (z_m, dz, dc, dzz, dzc) for the m-fold iterate at z0.

    dz  = d z_m / d z0          dc  = d z_m / d c
    dzz = d^2 z_m / d z0^2      dzc = d^2 z_m / d z0 d c
    """
    d = fam.d
    z = complex(z0)
    p = 1.0 + 0j
    q = 0.0 + 0j
    p2 = 0.0 + 0j
    pq = 0.0 + 0j
    for _ in range(m):
        zd1 = _pow_even(z, d - 2) * z if d > 2 else z  # z**(d-1)
        zd2 = _pow_even(z, d - 2) if d > 2 else 1.0 + 0j  # z**(d-2)
        fp = d * zd1
        fpp = d * (d - 1) * zd2
        p2 = fp * p2 + fpp * p * p
        pq = fp * pq + fpp * p * q
        q = fp * q + 1.0
        p = fp * p
        z = _pow_even(z, d) + fam.c
    return z, p, q, p2, pq


# ---------------------------------------------------------------------------
# Cycle solving
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Cycle:
    """A periodic orbit: points in map order, its period, and the multiplier."""

    points: tuple
    k: int
    multiplier: complex

    def __iter__(self):
        return iter(self.points)


NEWTON_TOL = 1e-12
NEWTON_MAX_ITER = 200


def find_cycle(fam: Family, k: int, seed: complex, tol: float = NEWTON_TOL,
               max_iter: int = NEWTON_MAX_ITER) -> Cycle:
    """Newton-solve f^k(z) = z from `seed` and package the resulting cycle.

    Raises PeriodError if the solution's minimal period properly divides k
    (e.g. a fixed point picked up while hunting a period-2 cycle), and
    ConvergenceError if Newton stalls.  The multiplier is read off a jet so
    the same transported derivative feeds every caller.
    """
    if k < 1:
        raise ValueError("period k must be >= 1")
    z = complex(seed)
    ok = False
    for _ in range(max_iter):
        zk, p, _, _, _ = orbit_partials(fam, z, k)
        g = zk - z
        if abs(g) < tol:
            ok = True
            break
        dg = p - 1.0
        if dg == 0:
            # Degenerate tangency direction: nudge along the second-order term.
            z += tol
            continue
        step = g / dg
        # Damping: halve until the residual actually decreases.
        t = 1.0
        for _ in range(40):
            z_try = z - t * step
            g_try = iterate(fam, z_try, k) - z_try
            if abs(g_try) < abs(g) or t < 1e-6:
                z = z_try
                break
            t *= 0.5
    if not ok:
        zk, _, _, _, _ = orbit_partials(fam, z, k)
        if abs(zk - z) >= tol:
            raise ConvergenceError(
                f"cycle Newton stalled at residual {abs(zk - z):.3e} (tol {tol:g})")
    # Minimal-period check against proper divisors.
    scale = max(1.0, abs(z))
    for m in range(1, k):
        if k % m == 0 and abs(iterate(fam, z, m) - z) < 1e-6 * scale:
            raise PeriodError(
                f"requested period {k} but orbit closes up at divisor period {m}")
    pts = [z]
    for _ in range(k - 1):
        pts.append(evaluate(fam, pts[-1]))
    mult = orbit_jet(fam, z, k, order=1).coef[1]
    return Cycle(points=tuple(pts), k=k, multiplier=complex(mult))
