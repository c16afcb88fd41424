"""Saddle-node parameter location on the real line and local return-map data.

This module finds the real parameters c0 where z -> z**d + c has a periodic
cycle with multiplier exactly +1, and extracts the quadratic/cubic Taylor
data of the return map at the cycle point that attracts the critical orbit.

Orientation convention: every downstream computation runs on the *oriented*
return map  z -> sign * f^k(z)  with sign in {+1, -1}.  Because the family
is even, conjugating by z -> -z is the same as flipping the sign of each
iterate, so the oriented m-fold return map is simply sign * f^(m*k).  The
sign is chosen so that the anchor fixed point is positive and the quadratic
coefficient of the return map there is positive; when neither orientation
achieves that, location fails loudly rather than guessing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import brentq

from .dynamics import (
    ESCAPE_CEILING,
    NEWTON_MAX_ITER,
    NEWTON_TOL,
    ConvergenceError,
    Cycle,
    Family,
    PeriodError,
    evaluate,
    find_cycle,
    iterate,
    orbit_jet,
    orbit_partials,
)

__all__ = [
    "ConnectednessInterval",
    "ParabolicData",
    "connectedness_interval",
    "locate_parabolic",
    "local_form",
    "germ_at",
    "window_center",
]

# Below this size the quadratic coefficient is treated as degenerate (more
# than one attracting petal), which the toolkit does not handle.
DEGENERATE_A = 1e-8


@dataclass(frozen=True)
class ConnectednessInterval:
    """Closed real parameter interval on which the Julia set is connected."""

    d: int
    a_end: float
    b_end: float

    def __contains__(self, c) -> bool:
        return self.a_end < float(c) < self.b_end


def connectedness_interval(d: int) -> ConnectednessInterval:
    """Compute both interval endpoints by bracketed 1-D root finding.

    The right endpoint carries a real fixed point of multiplier one: solve
    d*z**(d-1) = 1 for z > 0 and set c = z - z**d.  The left endpoint is
    the a < 0 at which the second image of the critical point lands on a
    fixed point: with u(a) = a**d + a, solve u**d + a = u.
    """
    Family(d, 0.0)  # validates evenness / range of d

    zb = brentq(lambda z: d * z ** (d - 1) - 1.0, 1e-9, 1.0, xtol=1e-13)
    b_end = zb - zb ** d

    def second_image_defect(a: float) -> float:
        u = a ** d + a
        return u ** d + a - u

    a_end = brentq(second_image_defect, -2.5, -1.0, xtol=1e-13)
    return ConnectednessInterval(d=d, a_end=float(a_end), b_end=float(b_end))


@dataclass(frozen=True)
class ParabolicData:
    """A located multiplier-1 parameter with its local return-map data.

    Fields:
      d, c0, k   -- the family member and the cycle period.
      cycle      -- the genuine cycle of f (points, period, multiplier ~ 1).
      alpha      -- anchor: fixed point of the oriented return map
                    sign * f^k that attracts the critical orbit; alpha > 0.
      a_coef     -- quadratic Taylor coefficient of the oriented return map
                    at alpha (positive by the orientation convention).
      b_coef     -- cubic Taylor coefficient there.
      A          -- shape invariant 1 - b_coef/a_coef**2, positive because
                    the critical point sits in the attracting petal.
      sign       -- orientation flag (+1.0 or -1.0), see module docstring.

    a_coef/b_coef/A are NaN until local_form() fills them; locate_parabolic
    returns them already filled.
    """

    d: int
    c0: float
    k: int
    alpha: float
    a_coef: float
    b_coef: float
    A: float
    sign: float
    cycle: Cycle

    @property
    def family(self) -> Family:
        return Family(self.d, self.c0)

    def return_map(self, z, m: int = 1):
        """The m-fold oriented return map sign * f^(m*k)."""
        return iterate(self.family, z, m * self.k, self.sign)

    def return_jet(self, z, m: int = 1, order: int = 3):
        """Taylor jet of the m-fold oriented return map at z."""
        return orbit_jet(self.family, z, m * self.k, order=order, sign=self.sign)

    def to_dict(self) -> dict:
        return {
            "d": self.d,
            "c0": self.c0,
            "k": self.k,
            "alpha": self.alpha,
            "a_coef": self.a_coef,
            "b_coef": self.b_coef,
            "A": self.A,
            "sign": self.sign,
            "cycle_points_re": [p.real for p in self.cycle.points],
            "cycle_points_im": [p.imag for p in self.cycle.points],
            "multiplier_re": self.cycle.multiplier.real,
            "multiplier_im": self.cycle.multiplier.imag,
        }


# ---------------------------------------------------------------------------
# Tangency system: F(z,c) = (f_c^k(z) - z, d/dz f_c^k(z) - 1) = 0 solved by
# damped Newton in two real unknowns.  The Jacobian comes from the orbit
# partial recurrences; at a nondegenerate saddle-node the corner entry
# (dz f^k - 1) vanishes but the off-diagonal pair keeps the determinant away
# from zero, so convergence is quadratic all the way in.
# ---------------------------------------------------------------------------


def _tangency_newton(d: int, k: int, z0: float, c0: float,
                     tol: float = NEWTON_TOL, max_iter: int = NEWTON_MAX_ITER):
    """Solve the two-equation tangency system from one (z, c) seed.

    Returns (z, c, residual) on success, None when the seed stalls or
    wanders off to non-finite territory.
    """
    z, c = float(z0), float(c0)

    def residuals(z, c):
        zk, p, q, p2, pq = orbit_partials(Family(d, c), complex(z), k)
        return (zk.real - z, p.real - 1.0,
                p.real, q.real, p2.real, pq.real)

    g1, g2, p, q, p2, pq = residuals(z, c)
    for _ in range(max_iter):
        if not (math.isfinite(g1) and math.isfinite(g2)):
            return None
        if abs(g1) < tol * max(1.0, abs(z)) and abs(g2) < 10.0 * tol:
            return z, c, math.hypot(g1, g2)
        det = (p - 1.0) * pq - q * p2
        if det == 0.0 or not math.isfinite(det):
            return None
        dz = (pq * g1 - q * g2) / det
        dc = (-p2 * g1 + (p - 1.0) * g2) / det
        # Backtracking damping on the residual norm.
        t = 1.0
        best = None
        r_old = math.hypot(g1, g2)
        for _ in range(30):
            zt, ct = z - t * dz, c - t * dc
            h1, h2, tp, tq, tp2, tpq = residuals(zt, ct)
            if math.isfinite(h1) and math.isfinite(h2) and math.hypot(h1, h2) < r_old:
                best = (zt, ct, h1, h2, tp, tq, tp2, tpq)
                break
            t *= 0.5
        if best is None:
            return None
        z, c, g1, g2, p, q, p2, pq = best
    return None


def _cluster_solutions(hits):
    """Group (z, c, res) triples by c and return clusters sorted by size."""
    hits = sorted(hits, key=lambda t: t[1])
    clusters = []
    for h in hits:
        if clusters and abs(h[1] - clusters[-1][-1][1]) < 5e-8:
            clusters[-1].append(h)
        else:
            clusters.append([h])
    # Most seed votes first; ties broken toward the left end of the bracket.
    clusters.sort(key=lambda cl: (-len(cl), cl[0][1]))
    return clusters


def _critical_anchor(fam: Family, k: int, cycle: Cycle,
                     settle_steps: int = 600):
    """Anchor point and orientation for the critical orbit's landing petal.

    Follows the critical point under f^k until it settles beside one cycle
    point x*, then picks the orientation that makes the anchor positive
    with a positive quadratic coefficient.  The attracting side of the
    petal at x* is the side the critical orbit arrives from, and it is the
    left side exactly when the quadratic coefficient at x* is positive;
    evenness of the family lets z -> -z trade (x*, a) for (-x*, -a).
    """
    pts = np.array([p for p in cycle.points], dtype=complex)
    z = 0.0 + 0.0j
    checkpoints = []
    for n in range(settle_steps):
        z = iterate(fam, z, k)
        if not math.isfinite(z.real) or abs(z) > fam.escape_radius:
            raise ConvergenceError(
                "critical orbit escapes: 0 is not in the parabolic basin")
        if n in (settle_steps // 2 - 1, settle_steps - 1):
            checkpoints.append(int(np.argmin(np.abs(pts - z))))
    if checkpoints[0] != checkpoints[1]:
        raise ConvergenceError(
            "critical orbit has not settled beside a single cycle point; "
            "increase settle_steps")
    x_star = pts[checkpoints[-1]].real
    a_raw = orbit_jet(fam, x_star, k, order=3).coef[2].real
    if x_star > 0 and a_raw > 0:
        return x_star, 1.0
    if x_star < 0 and a_raw < 0:
        return -x_star, -1.0
    raise ConvergenceError(
        "no orientation arranges a positive anchor with positive quadratic "
        f"coefficient (landing point {x_star:.6g}, coefficient {a_raw:.6g})")


def locate_parabolic(d: int, k: int, bracket) -> ParabolicData:
    """Find the period-k saddle-node parameter inside a real bracket.

    Runs the damped two-unknown Newton from a grid of 64 seeds (8 parameter
    values crossed with up to 8 critical-orbit points each), screens the
    converged roots for exact period k (multiplier -1 boundaries close up
    at a shorter period and are rejected here), votes among root clusters,
    and returns the winner with its local form filled in.

    Raises ValueError for a malformed bracket or one not strictly inside
    the connectedness interval, PeriodError when every root in the bracket
    closes up at a shorter period, and ConvergenceError when nothing is
    found at all.
    """
    if k < 2:
        raise ValueError("period k must be >= 2 (fixed points have their own endpoint)")
    try:
        lo, hi = (float(bracket[0]), float(bracket[1]))
    except (TypeError, ValueError, IndexError) as exc:
        raise ValueError(f"bracket must be a pair of reals, got {bracket!r}") from exc
    if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
        raise ValueError(f"bracket must satisfy lo < hi, got ({lo}, {hi})")
    ci = connectedness_interval(d)
    if not (ci.a_end < lo and hi < ci.b_end):
        raise ValueError(
            f"bracket ({lo}, {hi}) must sit strictly inside the "
            f"connectedness interval ({ci.a_end:.12g}, {ci.b_end:.12g})")

    hits = []
    period_rejects = []
    for i in range(8):
        c_seed = lo + (hi - lo) * (i + 0.5) / 8.0
        famc = Family(d, c_seed)
        z, z_seeds = 0.0 + 0.0j, []
        for _ in range(8):
            z = evaluate(famc, z)
            if abs(z) > famc.escape_radius:
                break
            z_seeds.append(z.real)
        for z_seed in z_seeds:
            sol = _tangency_newton(d, k, z_seed, c_seed)
            if sol is None:
                continue
            z_root, c_root, res = sol
            if not (lo < c_root < hi):
                continue
            try:
                cyc = find_cycle(Family(d, c_root), k, complex(z_root))
            except PeriodError as exc:
                period_rejects.append(str(exc))
                continue
            except ConvergenceError:
                continue
            # Degenerate-boundary screen: near a period-doubling the tangency
            # system has a flat triple root, and Newton can settle on a fake
            # near-cycle straddling the shorter-period orbit within residual
            # tolerance.  Genuine saddle-node cycles have macroscopically
            # separated points; nearly coincident ones mean the bracket end
            # is a multiplier -1 boundary, not a multiplier +1 tangency.
            pts = cyc.points
            spacing = min(abs(pts[i] - pts[j])
                          for i in range(k) for j in range(i + 1, k))
            scale = max(1.0, max(abs(p) for p in pts))
            if spacing < 1e-4 * scale:
                period_rejects.append(
                    f"cycle points nearly coincide (spacing {spacing:.2e}) at "
                    f"c = {c_root:.12g}: a degenerate shorter-period boundary, "
                    "not a saddle-node")
                continue
            hits.append((z_root, c_root, res))

    if not hits:
        if period_rejects:
            raise PeriodError(
                "every tangency in the bracket closes up at a shorter period "
                "(a multiplier -1 boundary, not a saddle-node): "
                + period_rejects[0])
        raise ConvergenceError(
            f"no period-{k} saddle-node parameter found in ({lo}, {hi})")

    cluster = _cluster_solutions(hits)[0]
    z_root, c_root, _ = min(cluster, key=lambda t: t[2])

    fam = Family(d, c_root)
    cycle = find_cycle(fam, k, complex(z_root))
    alpha, sign = _critical_anchor(fam, k, cycle)
    pd = ParabolicData(d=d, c0=float(c_root), k=k, alpha=float(alpha),
                       a_coef=float("nan"), b_coef=float("nan"),
                       A=float("nan"), sign=sign, cycle=cycle)
    return local_form(pd)


def germ_at(fam: Family, k: int, point, sign: float = 1.0):
    """(a, b, A) Taylor data of the oriented k-fold return map at `point`.

    No positivity checks -- useful for comparing the shape invariant A
    across different points of the same cycle, where a and b vary but A
    must not.
    """
    jet = orbit_jet(fam, complex(point), k, order=3, sign=sign)
    a = complex(jet.coef[2])
    b = complex(jet.coef[3])
    if abs(a) < DEGENERATE_A:
        raise ConvergenceError(
            f"quadratic coefficient {abs(a):.3e} below degeneracy threshold")
    A = 1.0 - b / (a * a)
    return a, b, A


def local_form(pd: ParabolicData) -> ParabolicData:
    """Fill (a_coef, b_coef, A) from an order-3 jet of the oriented return map.

    Checks the anchor is genuinely fixed with unit derivative, rejects
    degenerate quadratic coefficients (|a| < 1e-8 means extra petals), and
    asserts the positivity a_coef > 0, A > 0 that the orientation
    convention promises.
    """
    jet = pd.return_jet(pd.alpha)
    drift = abs(jet.value - pd.alpha)
    if drift > 1e-7 * max(1.0, abs(pd.alpha)):
        raise ConvergenceError(
            f"anchor is not fixed by the oriented return map (drift {drift:.3e})")
    if abs(jet.coef[1] - 1.0) > 1e-6:
        raise ConvergenceError(
            f"anchor multiplier {jet.coef[1]:.12g} is not 1")
    a = jet.coef[2]
    b = jet.coef[3]
    if abs(a.imag) > 1e-9 * max(1.0, abs(a.real)) or abs(b.imag) > 1e-9 * max(1.0, abs(b.real)):
        raise ConvergenceError("return-map jet is not real on the real line")
    a, b = a.real, b.real
    if abs(a) < DEGENERATE_A:
        raise ConvergenceError(
            f"degenerate parabolic point: |a| = {abs(a):.3e} < {DEGENERATE_A:g} "
            "(more than one petal)")
    if a < 0:
        raise ConvergenceError(
            f"orientation failed: quadratic coefficient {a:.6g} is negative")
    A = 1.0 - b / (a * a)
    if not (A > 0):
        raise ConvergenceError(f"shape invariant A = {A:.6g} must be positive")
    return replace(pd, a_coef=float(a), b_coef=float(b), A=float(A))


def window_center(pd: ParabolicData, span: float = 0.08, step: float = 1e-4) -> float:
    """Superattracting center of the attracting window left of c0.

    Scans c downward from c0 for the first sign change of c -> f_c^k(0) and
    polishes it with brentq; the center is the nearest parameter below c0
    where the critical point itself is periodic (multiplier exactly 0).
    Windows of a shorter period encountered on the way are skipped.
    """
    fam0 = pd.family

    def crit_image(c: float) -> float:
        return iterate(Family(pd.d, c), 0.0, pd.k).real

    c_prev = pd.c0
    v_prev = crit_image(c_prev)
    n_steps = int(span / step)
    for i in range(1, n_steps + 1):
        c_cur = pd.c0 - i * step
        v_cur = crit_image(c_cur)
        if v_prev == 0.0 or v_prev * v_cur < 0.0:
            c_star = brentq(crit_image, c_cur, c_prev, xtol=1e-13)
            try:
                find_cycle(Family(pd.d, c_star), pd.k, 0.0)
            except PeriodError:
                c_prev, v_prev = c_cur, v_cur
                continue  # a shorter-period window; keep walking
            return float(c_star)
        c_prev, v_prev = c_cur, v_cur
    raise ConvergenceError(
        f"no superattracting period-{pd.k} center within {span} below c0")
