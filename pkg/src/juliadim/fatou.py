"""Attracting/repelling coordinate machinery at the parabolic anchor.

Everything here works on the oriented return map z -> sign * f^k(z) of a
located ParabolicData.  The central object is FatouEvaluator, which owns

  * the exact shifted return polynomial Q with  F(alpha + zeta) =
    alpha + zeta + Q(zeta)  as a polynomial identity (built once by
    polynomial composition, so local stepping never re-expands the map),
  * an automatically selected petal-disk radius delta,
  * the attracting coordinate phi_minus via the orbit-limit algorithm,
  * the inverse repelling coordinate psi_plus via a deep-left shift,
    an asymptotic Newton inversion, and an exact pushforward.

Branch conventions: phi_minus uses the principal logarithm (slit along the
negative reals, constant term 0); psi_plus uses the logarithm slit along
the *positive* reals with log(w) = log|w| + i*pi for w < 0, and carries
the constant i*A*pi.  With those choices both functional equations
phi(F(z)) = phi(z) + 1 and psi(w+1) = F(psi(w)) hold, phi is real on the
real slice of the basin, and psi is real on the deep repelling real axis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial import polynomial as npoly

from . import kernels
from .dynamics import ESCAPE_CEILING, ConvergenceError
from .parabolic import ParabolicData

__all__ = [
    "BasinError",
    "WindowEscape",
    "SectorSpec",
    "FatouEvaluator",
]

# Largest return-polynomial degree we are willing to build (d**k).
MAX_RETURN_DEGREE = 4096


class BasinError(RuntimeError):
    """The point is not in the attracting basin of the anchor petal."""


class WindowEscape(ConvergenceError):
    """The pushforward orbit left the bounded evaluation window.

    psi_plus is entire, but we evaluate it by finitely many forward steps;
    points whose orbit blows past the escape radius inside that window are
    reported with this distinct error rather than a generic failure.
    """


@dataclass(frozen=True)
class SectorSpec:
    """Sector geometry in the approximate-coordinate plane.

    kappa is the slope, R the offset.  The right sector is
    {Re w > R - kappa*|Im w|}, the left sector {Re w < -R + kappa*|Im w|},
    and the gate sector their intersection with the upper half-plane.
    All membership predicates are total.
    """

    kappa: float
    R: float

    def __post_init__(self):
        if not (self.kappa > 0 and self.R > 0):
            raise ValueError("sector needs kappa > 0 and R > 0")

    def in_right(self, w) -> bool:
        w = complex(w)
        return w.real > self.R - self.kappa * abs(w.imag)

    def in_left(self, w) -> bool:
        w = complex(w)
        return w.real < -self.R + self.kappa * abs(w.imag)

    def in_gate(self, w) -> bool:
        w = complex(w)
        return w.imag > 0 and self.in_right(w) and self.in_left(w)


def _log_plus(u):
    """Logarithm slit along the positive reals: arg in (0, 2*pi)."""
    u = np.asarray(u, dtype=complex)
    theta = np.angle(u)
    theta = np.where(theta <= 0.0, theta + 2.0 * np.pi, theta)
    out = np.log(np.abs(u)) + 1j * theta
    return out if out.shape else complex(out)


class FatouEvaluator:
    """Configured evaluator of the attracting and repelling coordinates.

    Parameters
    ----------
    pd      : ParabolicData with the local form filled in.
    n_max   : orbit budget (whole return-map steps) for phi_minus.
    tol     : Cauchy-increment stopping tolerance for phi_minus.
    delta   : petal disk radius; None selects the largest dyadic
              delta <= 0.1 whose tangent disk is mapped into itself
              (checked on 256 boundary samples of the exact return map).
    depth   : left-shift depth for psi_plus; the asymptotic inversion runs
              at Re(u) <= -depth, where its defect is O(1/depth) and is
              then carried forward with unit-size distortion.
    """

    def __init__(self, pd: ParabolicData, n_max: int = 400_000,
                 tol: float = 1e-10, delta: float | None = None,
                 depth: int = 20_000):
        if n_max < 50:
            raise ValueError("n_max must be >= 50")
        if not (0 < tol <= 1e-9):
            raise ValueError("tol must be positive and <= 1e-9")
        if depth < 100:
            raise ValueError("depth must be >= 100")
        if not (pd.a_coef > 0 and pd.A > 0):
            raise ValueError("evaluator needs a filled local form with "
                             "a_coef > 0 and A > 0")
        self.pd = pd
        self.n_max = int(n_max)
        self.tol = float(tol)
        self.depth = int(depth)
        self.esc_r = pd.family.escape_radius
        self.qcoef = _return_polynomial(pd)
        self._qtrunc_cache: dict[int, np.ndarray] = {}
        if delta is None:
            delta = _select_delta(self.qcoef)
        else:
            delta = float(delta)
            if not _petal_disk_invariant(self.qcoef, delta):
                raise ValueError(
                    f"petal disk of radius {delta:g} is not forward-invariant")
        self.delta = delta
        self.gamma = self._fit_gamma()
        self.expansion_bound = self._fit_expansion_bound()

    # -- construction helpers ------------------------------------------------

    @classmethod
    def from_germ(cls, pd: ParabolicData, qcoef, delta: float,
                  n_max: int = 400_000, tol: float = 1e-10,
                  depth: int = 20_000) -> "FatouEvaluator":
        """Build an evaluator over an explicit local model polynomial.

        Used for synthetic germs (planted normal forms, translation models)
        where the stepping polynomial is prescribed rather than derived
        from a family; inputs must stay inside the petal disk since there
        is no ambient plane map to fall back to.
        """
        ev = object.__new__(cls)
        ev.pd = pd
        ev.n_max = int(n_max)
        ev.tol = float(tol)
        ev.depth = int(depth)
        ev.esc_r = pd.family.escape_radius
        q = np.asarray(qcoef, dtype=complex).copy()
        q[:2] = 0.0
        ev.qcoef = q
        ev._qtrunc_cache = {}
        ev.delta = float(delta)
        ev.gamma = ev._fit_gamma()
        ev.expansion_bound = ev._fit_expansion_bound()
        return ev

    def _fit_gamma(self) -> complex:
        """Expansion coefficient gamma = B2 - A^2 + A/2 of both Fatou
        coordinates, Phi(u) = u - A*log(u) + C + gamma/u + O(log u / u^2).

        B2 is the 1/w^2 coefficient of the conjugated map, measured at two
        radii with a Richardson step to cancel the next-order term.
        """
        A = self.pd.A
        out = []
        for radius in (1e5, 2e5):
            w = radius * np.exp(2j * np.pi * (np.arange(16) + 0.11) / 16)
            b2 = (self.conjugated_step(w) - 1.0 - A / w) * w * w
            out.append(np.mean(b2))
        b2 = 2.0 * out[1] - out[0]
        gam = complex(b2 - A * A + A / 2.0)
        if np.max(np.abs(self.qcoef.imag)) < 1e-12:
            gam = complex(gam.real)  # real map => real expansion coefficient
        return gam

    def _fit_expansion_bound(self) -> float:
        """K with |F_conj(w) - w - 1 - A/w| <= K/|w|^2 sampled on |w| >= 100."""
        A = self.pd.A
        worst = 0.0
        for radius in (100.0, 316.0, 1000.0, 10_000.0):
            w = radius * np.exp(2j * np.pi * (np.arange(32) + 0.37) / 32)
            resid = self.conjugated_step(w) - 1.0 - A / w
            worst = max(worst, float(np.max(np.abs(resid) * radius * radius)))
        return 1.25 * worst

    def qcoef_truncated(self, rho: float) -> np.ndarray:
        """Return polynomial truncated so the dropped tail is below 1e-17
        of the leading quadratic term on |zeta| <= rho."""
        key = int(np.ceil(np.log2(max(rho, 1e-12))))
        got = self._qtrunc_cache.get(key)
        if got is not None:
            return got
        r = 2.0 ** key
        mags = np.abs(self.qcoef) * r ** np.arange(len(self.qcoef))
        floor = 1e-17 * self.pd.a_coef * r * r
        keep = len(self.qcoef)
        tail = 0.0
        for i in range(len(self.qcoef) - 1, 1, -1):
            if tail + mags[i] > floor:
                break
            tail += mags[i]
            keep = i
        out = self.qcoef[:keep]
        self._qtrunc_cache[key] = out
        return out

    # -- approximate coordinate ----------------------------------------------

    def approx_coord(self, z):
        """w = -1/(a*(z - alpha)); the model chart near the anchor."""
        z = complex(z)
        dz = z - self.pd.alpha
        if dz == 0:
            raise ValueError("approximate coordinate has a pole at the anchor")
        return -1.0 / (self.pd.a_coef * dz)

    def approx_coord_inv(self, w):
        w = complex(w)
        if w == 0:
            raise ValueError("approximate coordinate inverse has a pole at 0")
        return self.pd.alpha - 1.0 / (self.pd.a_coef * w)

    def conjugated_step(self, w):
        """F_conj(w) - w computed without cancellation.

        With zeta = -1/(a*w) and zeta' = zeta + Q(zeta), the difference is
        Q(zeta)/(a*zeta*zeta'), which stays fully accurate even at
        |w| ~ 1e6 where forming F_conj(w) - w by subtraction would lose
        ten digits.
        """
        w = np.asarray(w, dtype=complex)
        a = self.pd.a_coef
        zeta = -1.0 / (a * w)
        q = npoly.polyval(zeta, self.qcoef)
        zp = zeta + q
        if np.any(zp == 0):
            raise ValueError("conjugated image hits the pole at the anchor")
        out = q / (a * zeta * zp)
        return out if out.shape else complex(out)

    def conjugated_map(self, w):
        """I o F o I^{-1}, asymptotically w + 1 + A/w for large |w|."""
        w = np.asarray(w, dtype=complex)
        if np.any(w == 0):
            raise ValueError("conjugated map has a pole at w = 0")
        out = w + self.conjugated_step(w)
        return out if out.shape else complex(out)

    def default_sector(self, kappa: float = 1.0) -> SectorSpec:
        """Sector clear of the petal-exit zone: R ~ the chart radius at
        which local stepping hands over to plane iteration."""
        R = max(10.0, 2.0 / (self.pd.a_coef * self.delta))
        return SectorSpec(kappa=float(kappa), R=R)

    # -- attracting side -----------------------------------------------------

    def phi_minus_batch(self, z, want_deriv: bool = False):
        """Raw batch evaluation: (phi, dphi, status, steps); see kernels
        for the status codes.  No exceptions — callers route statuses."""
        pd = self.pd
        return kernels.phi_orbit(
            z, pd.d, pd.c0, pd.sign, pd.k, pd.alpha, pd.a_coef, pd.A,
            self.gamma, self.qcoef, self.delta, self.tol, self.n_max,
            self.esc_r, want_deriv)

    def phi_minus(self, z, want_deriv: bool = False):
        """Attracting coordinate phi(z); phi(F(z)) = phi(z) + 1 on the basin.

        Raises BasinError when the orbit escapes (not in the basin) and
        ConvergenceError when it fails to settle within the budget.
        """
        phi, dphi, status, _ = self.phi_minus_batch(
            np.asarray([z], dtype=complex), want_deriv)
        st = int(status[0])
        if st == 1:
            raise BasinError(f"orbit of {z} escapes: not in the basin")
        if st == 2:
            raise ConvergenceError(
                f"orbit of {z} did not enter the petal disk within "
                f"{self.n_max} return steps")
        if st == 3:
            raise ConvergenceError(
                f"coordinate increments did not reach tol={self.tol:g} "
                f"within {self.n_max} steps")
        if want_deriv:
            return complex(phi[0]), complex(dphi[0])
        return complex(phi[0])

    def petal_entry(self, z, budget: int | None = None):
        """(entered, steps): does the forward orbit reach the petal disk.

        `steps` counts single map applications (not whole return steps).
        The default budget is the basin-test convention 10 * n_max return
        steps.
        """
        pd = self.pd
        if budget is None:
            budget = 10 * self.n_max
        status, iters, _, _ = kernels.escape_dem(
            np.asarray([z], dtype=complex), pd.d, pd.c0, pd.sign,
            int(budget) * pd.k, self.esc_r,
            self.petal_center, self.delta, True, petal_stride=pd.k)
        return int(status[0]) == 2, int(iters[0])

    @property
    def petal_center(self) -> complex:
        return complex(self.pd.alpha - self.delta)

    def in_basin(self, z, budget: int | None = None) -> bool:
        """Basin test: the orbit enters the petal disk within budget."""
        entered, _ = self.petal_entry(z, budget)
        return entered

    # -- repelling side ------------------------------------------------------

    def _invert_phi_hat(self, target):
        """Newton-solve u - A*log_plus(u) + i*A*pi + gamma/u = target.

        This is the repelling coordinate's asymptotic expansion through the
        gamma/u term; inverting it deep in the left sector leaves a defect
        of only O(log|u| / |u|^2).
        """
        A = self.pd.A
        gam = self.gamma
        iap = 1j * A * np.pi
        t = np.asarray(target, dtype=complex)
        u = t - iap + A * _log_plus(t - iap)
        prev = np.full(u.shape, np.inf)
        for _ in range(60):
            g = u - A * _log_plus(u) + iap + gam / u - t
            du = g / (1.0 - A / u - gam / (u * u))
            u = u - du
            adu = np.abs(du)
            # quadratic convergence hits the ulp floor in a few steps; stop
            # once the correction lands there or stops shrinking
            if np.all((adu <= 1e-15 * np.maximum(1.0, np.abs(u)))
                      | (adu >= 0.5 * prev)):
                break
            prev = adu
        else:
            raise ConvergenceError("asymptotic inversion Newton stalled")
        if np.any(u.real >= 0):
            raise ConvergenceError(
                "asymptotic inversion left the deep sector; raise depth")
        return u

    def _shift_counts(self, w, depth: int | None = None):
        d = self.depth if depth is None else int(depth)
        re = np.ceil(np.asarray(w, dtype=complex).real) + d
        return np.maximum(0, re.astype(np.int64))

    def psi_plus_batch(self, w, want_deriv: bool = False,
                       rho: float | None = None,
                       depth: int | None = None):
        """Raw batch evaluation of psi_plus: (z, dz, status).

        rho bounds |zeta| along the pushforward path and controls how hard
        the stepping polynomial may be truncated.  The default is the full
        chart radius delta (always valid); callers whose paths provably
        stay deep in the chart may pass a smaller bound to cut the cost of
        high-degree return maps.  depth overrides the evaluator's sector
        depth for this call; lattice sweeps that tolerate ~1e-8 absolute
        error can run much shallower than the default.
        """
        pd = self.pd
        w = np.asarray(w, dtype=complex)
        m = self._shift_counts(w, depth)
        u0 = self._invert_phi_hat(w - m)
        q = self.qcoef_truncated(self.delta if rho is None else rho)
        z, dz, status = kernels.psi_push(
            u0, m, pd.d, pd.c0, pd.sign, pd.k, pd.alpha, pd.a_coef,
            q, self.delta, self.esc_r, want_deriv)
        if want_deriv:
            # dz is d z / d u0; fold in du0/dw = 1/(1 - A/u0).
            dz = dz / (1.0 - pd.A / u0)
        return z, dz, status

    def psi_plus(self, w, want_deriv: bool = False):
        """Entire inverse repelling coordinate; psi(w+1) = F(psi(w)).

        Raises WindowEscape when the forward push exits the bounded
        evaluation window (a legitimate event for an entire function
        evaluated dynamically).
        """
        z, dz, status = self.psi_plus_batch(np.asarray([w], dtype=complex),
                                            want_deriv)
        if int(status[0]) == 1:
            raise WindowEscape(
                f"pushforward from {w} escaped the evaluation window")
        if want_deriv:
            return complex(z[0]), complex(dz[0])
        return complex(z[0])


# ---------------------------------------------------------------------------
# module helpers (kept free functions so construction stays testable)
# ---------------------------------------------------------------------------


def _return_polynomial(pd: ParabolicData) -> np.ndarray:
    """Exact shifted return polynomial Q(zeta) = F(alpha+zeta) - alpha - zeta.

    Built by composing the family polynomial k times over the coefficient
    ring and shifting to the anchor.  The constant and linear coefficients
    are asserted tiny (the anchor is a multiplier-1 fixed point) and then
    zeroed exactly, which pins the fixed point at zeta = 0 and makes every
    later chart step free of re-derived roundoff.
    """
    d, k, c = pd.d, pd.k, pd.c0
    if d ** k > MAX_RETURN_DEGREE:
        raise ValueError(
            f"return polynomial degree {d}**{k} exceeds {MAX_RETURN_DEGREE}")
    p = np.array([pd.alpha, 1.0], dtype=complex)  # alpha + zeta
    for _ in range(k):
        q = npoly.polypow(p, d)
        q[0] += c
        p = pd.sign * q
    p[0] -= pd.alpha
    p[1] -= 1.0
    if abs(p[0]) > 1e-8 or abs(p[1]) > 1e-6:
        raise ConvergenceError(
            f"anchor drifted during polynomial composition: "
            f"({abs(p[0]):.2e}, {abs(p[1]):.2e})")
    p[0] = 0.0
    p[1] = 0.0
    return p


def _petal_disk_invariant(qcoef, delta: float, samples: int = 256) -> bool:
    """Check F(D) subset D for the disk tangent at the anchor.

    256 boundary points (the tangency itself excluded by the half-step
    offset) must map strictly inside; in the local coordinate the disk is
    |zeta + delta| < delta.
    """
    theta = 2.0 * np.pi * (np.arange(samples) + 0.5) / samples
    zeta = delta * (np.exp(1j * theta) - 1.0)
    zp = zeta + npoly.polyval(zeta, np.asarray(qcoef, dtype=complex))
    return bool(np.all(np.abs(zp + delta) < delta))


def _select_delta(qcoef, cap: float = 0.1, tries: int = 40) -> float:
    """Largest dyadic delta <= cap with a forward-invariant petal disk."""
    delta = cap
    for _ in range(tries):
        if _petal_disk_invariant(qcoef, delta):
            return delta
        delta *= 0.5
    raise ConvergenceError(
        f"no forward-invariant petal disk above {delta:g}; "
        "the local form is degenerate or the map is misconfigured")
