"""Dimension exponent of the branch system: pressure, Moran bounds, persistence.

The branch family carries a critical exponent theta = inf{t : sum of
max|psi'|^t converges} = 2d/(d+1); finite windows witness it through the
growth exponent of the partial sums over label shells.  Moran-type roots of
sum(lambda^t) = 1 with lambda the per-branch derivative extrema bracket the
dimension of the limit set of any finite subfamily, and a Newton
continuation to the perturbed polynomial f_{c0+eps} checks that the whole
system persists as honest expanding return branches at the fitted implosion
parameters.  A box-counting helper serves the rendered sets.

All reductions run in a fixed pairwise tree order, so repeated runs sum in
exactly the same sequence and results are bit-reproducible.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .dynamics import ConvergenceError
from .ifs import IfsSystem, _branch_h_batch, _preimage_newton, _psi_inverse_newton
from .lavaurs import implosion_fit

__all__ = [
    "MoranResult",
    "PersistenceReport",
    "PressureSeries",
    "SLOPE_CONVERGENT",
    "SLOPE_DIVERGENT",
    "box_counting",
    "dimension_record",
    "moran_bounds",
    "persistence_check",
    "pressure_sum",
    "theta_bracket",
    "theta_estimate",
    "write_record",
]

# growth-exponent thresholds for classifying the pressure series
SLOPE_DIVERGENT = 0.05
SLOPE_CONVERGENT = 0.01


def _pairwise_sum(values) -> float:
    """Sum in a fixed pairwise tree (deterministic, well-conditioned)."""
    a = np.asarray(values, dtype=float)
    n = a.size
    if n == 0:
        return 0.0
    if n <= 8:
        return float(math.fsum(a.tolist()))
    h = n // 2
    return _pairwise_sum(a[:h]) + _pairwise_sum(a[h:])


# ----------------------------------------------------------------------
# pressure series


@dataclass(frozen=True)
class PressureSeries:
    """Partial pressure sum at exponent t with its fitted growth power.

    tail_model is the fitted exponent beta of S(s) ~ s^beta for the partial
    sums over label shells s = n + |r| (obtained from the shell decay, which
    settles at small windows; the finite-window secant of log S does not).
    Positive beta means the series grows as a power of the window, i.e.
    diverges; negative beta means a finite limit.
    """

    exponent: float
    window: tuple
    partial_sum: float
    tail_model: float

    def __post_init__(self):
        if not (self.exponent > 0):
            raise ValueError("pressure exponent must be positive")

    @property
    def classification(self) -> str:
        if self.tail_model > SLOPE_DIVERGENT:
            return "divergent"
        if self.tail_model < SLOPE_CONVERGENT:
            return "convergent"
        return "inconclusive"


def pressure_sum(branches, t: float) -> PressureSeries:
    """Sum deriv_max**t over the window and fit the partial-sum growth.

    Shells are indexed by s = (n - n_min) + |r|, anchored at the first
    populated row: a shell is then complete (count exactly 2s + 1) up to
    min(n_max - n_min, r_max), so the window's depth offset contributes
    no count ramp.  The growth power of the partial sums is q + 1 where
    q is the fitted slope of log(shell sum) against log s over the top
    third of the complete shells.  The fit carries 1/s, 1/s**2, 1/s**3
    regressors (dropped one by one when the fit range is short) that
    absorb the finite-window transients -- Riemann-sum endpoint
    corrections, the saturating drift of the branch prefactors, and the
    residual of the row-offset entering each branch modulus -- which
    otherwise bias q by O(n_min/s_top).
    """
    if not branches:
        raise ValueError("no branches")
    if not (t > 0):
        raise ValueError("pressure exponent must be positive")
    n_arr = np.array([b.n for b in branches])
    r_arr = np.array([b.r for b in branches])
    dmax = np.array([b.deriv_max for b in branches])
    n_min = int(np.min(n_arr))
    n_max = int(np.max(n_arr))
    r_max = int(np.max(np.abs(r_arr)))
    s_of = (n_arr - n_min) + np.abs(r_arr)
    # shell s is complete when every n with n - n_min <= s contributes
    # both of its r = +-(s - (n - n_min)) labels within |r| <= r_max
    s_top = min(n_max - n_min, r_max)
    shells = []
    idx = []
    for s in range(1, s_top + 1):
        m = s_of == s
        if np.any(m):
            shells.append(_pairwise_sum(np.sort(dmax[m]) ** t))
            idx.append(s)
    if len(shells) < 4:
        raise ValueError("window too small to fit the pressure growth")
    shells = np.asarray(shells)
    idx = np.asarray(idx, dtype=float)
    total = _pairwise_sum(dmax ** t)
    keep = idx >= 0.65 * idx[-1]
    ls = np.log(idx[keep])
    n_corr = 3 if ls.size >= 8 else (2 if ls.size >= 6 else
                                     (1 if ls.size >= 4 else 0))
    cols = [ls] + [idx[keep] ** (-j) for j in range(1, n_corr + 1)]
    cols.append(np.ones_like(ls))
    coef, *_ = np.linalg.lstsq(np.column_stack(cols), np.log(shells[keep]),
                               rcond=None)
    q = float(coef[0])
    return PressureSeries(exponent=float(t), window=(n_max, r_max),
                          partial_sum=total, tail_model=q + 1.0)


def _halved(branches):
    n_arr = np.array([b.n for b in branches])
    r_arr = np.array([b.r for b in branches])
    n0 = int(np.min(n_arr))
    n_half = n0 + (int(np.max(n_arr)) - n0) // 2
    r_half = int(np.max(np.abs(r_arr))) // 2
    return [b for b in branches if b.n <= n_half and abs(b.r) <= r_half]


def theta_bracket(branches, t_lo: float = 0.8, t_hi: float = 2.0,
                  width: float = 0.02) -> tuple:
    """Bisection bracket for theta from the convergence classification.

    Returns (lo, hi) with hi - lo <= width, where the series is not yet
    classified convergent at lo and is convergent at hi.  Raises
    ConvergenceError when the window is too small for the endpoint
    classifications to survive halving it.
    """
    if not branches:
        raise ValueError("no branches")
    half = _halved(branches)
    for t, want_conv in ((t_lo, False), (t_hi, True)):
        for fam in (branches, half):
            cls = pressure_sum(fam, t).classification
            if (cls == "convergent") != want_conv:
                raise ConvergenceError(
                    f"classification at t = {t} is unstable: window too small")
    lo, hi = float(t_lo), float(t_hi)
    while hi - lo > width:
        mid = 0.5 * (lo + hi)
        if pressure_sum(branches, mid).classification == "convergent":
            hi = mid
        else:
            lo = mid
    return lo, hi


def theta_estimate(branches) -> float:
    """Midpoint of the bisection bracket for the critical exponent."""
    lo, hi = theta_bracket(branches)
    return 0.5 * (lo + hi)


# ----------------------------------------------------------------------
# Moran bounds


@dataclass(frozen=True)
class MoranResult:
    """Roots of sum(lambda^t) = 1 with lambda = deriv_min resp. deriv_max."""

    t_lower: float
    t_upper: float
    branch_count: int

    def __post_init__(self):
        if not (self.t_lower <= self.t_upper):
            raise ValueError("Moran bounds are out of order")


def _moran_root(lams, tol: float) -> float:
    lams = np.sort(np.asarray(lams, dtype=float))
    if np.any(lams <= 0.0) or np.any(lams >= 1.0):
        raise ValueError("contraction ratios must lie in (0, 1)")

    def total(t):
        return _pairwise_sum(lams ** t)

    lo, hi = 1e-12, 2.0
    if total(hi) > 1.0:
        raise ValueError("Moran root above 2: selection is too heavy")
    # sum is strictly decreasing in t; bisect far past tol so the residual
    # at the returned root is at the rounding floor
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if total(mid) > 1.0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-15 * max(1.0, hi):
            break
    root = 0.5 * (lo + hi)
    if abs(total(root) - 1.0) > tol:
        raise ConvergenceError("Moran bisection did not meet its tolerance")
    return root


def moran_bounds(branches, tol: float = 1e-6) -> MoranResult:
    """Dimension bracket of the finite subsystem by monotone bisection."""
    if not branches:
        raise ValueError("empty selection")
    t_lower = _moran_root([b.deriv_min for b in branches], tol)
    t_upper = _moran_root([b.deriv_max for b in branches], tol)
    return MoranResult(t_lower=t_lower, t_upper=t_upper,
                       branch_count=len(branches))


# ----------------------------------------------------------------------
# persistence under the implosion


@dataclass(frozen=True)
class PersistenceReport:
    """Perturbed realization of a branch subset at one implosion stage.

    Each inverse branch is replaced by an iterate of the perturbed
    polynomial (the Lavaurs map costs k*N genuine steps at the fitted
    eps_N); max_defect is the largest shift of the perturbed preimages,
    min_expansion the smallest derivative modulus of the perturbed return
    iterates -- expansion means it exceeds 1.
    """

    N: int
    eps: float
    labels: tuple
    max_defect: float
    min_expansion: float
    expansion_ok: bool
    t_lower_perturbed: float
    t_lower_unperturbed: float


def _branch_values_at(sys: IfsSystem, n: int, r: int, zs):
    """Branch values and |derivative| at arbitrary points of the ball."""
    ev = sys.lm.ev
    pd = ev.pd
    zs = np.asarray(zs, dtype=complex)
    x, ok = _preimage_newton(ev, zs, sys.bprime)
    if not np.all(ok) or np.any(x.imag <= 0):
        raise ConvergenceError("preimage step failed at a sample point")
    phi, _, pst, _ = ev.phi_minus_batch(x)
    if np.any(pst != 0):
        raise ConvergenceError("attracting chart failed at a sample point")
    W0, dpsi0 = _psi_inverse_newton(ev, x, phi + 1j * np.pi * pd.A, sys.depth)
    dq = np.polynomial.polynomial.polyder(ev.qcoef)
    fpx = 1.0 + np.polynomial.polynomial.polyval(x - pd.alpha, dq)
    dW0 = 1.0 / (dpsi0 * fpx)
    W = W0 + n * sys.step + r
    y, dydW, st = ev.psi_plus_batch(W, want_deriv=True, depth=sys.depth)
    if np.any(st != 0):
        raise ConvergenceError(
            f"repelling push escaped its window at branch {(n, r)}")
    w, dh, stage = _branch_h_batch(sys.hs, y)
    if np.any(stage != 0):
        raise ConvergenceError(f"inverse chain failed at branch {(n, r)}")
    return w, np.abs(dh * dydW * dW0)


def _perturbed_newton(d: int, c: float, sign: float, M: int, seeds, targets,
                      esc_r: float, max_iter: int = 30):
    """Solve sign * f_c^M(w) = target near the seeds; returns (w, |dF|).

    Plain Newton from the seeds first.  Deep iterates (M in the tens of
    thousands) have Newton basins far smaller than the seed defect, so on
    failure the targets are walked from wherever the seeds actually land
    to the requested points, correcting along the path.
    """
    t = np.asarray(targets, dtype=complex) * sign
    scale = np.maximum(1.0, np.abs(t))

    def f_m(w):
        v = w.copy()
        dv = np.ones_like(w)
        for _ in range(M):
            dv = dv * d * v ** (d - 1)
            v = v ** d + c
            if np.any(np.abs(v) > esc_r * 4.0):
                raise ConvergenceError(
                    "perturbed orbit escaped during continuation; "
                    "retry with larger N")
        return v, dv

    def polish(w):
        w = w.copy()
        best = np.inf
        for _ in range(max_iter):
            v, dv = f_m(w)
            res = v - t
            rmax = float(np.max(np.abs(res) / scale))
            # a near-neutral orbit of M steps evaluates with an amplified
            # roundoff floor ~ M * |dF| * eps; accept either a clean hit
            # or a stall at that floor (no more quadratic progress,
            # residual small)
            if rmax <= 1e-10 or (rmax >= 0.5 * best and best <= 1e-6):
                return w, np.abs(dv)
            best = min(best, rmax)
            w = w - res / dv
        return None

    seeds = np.asarray(seeds, dtype=complex)
    try:
        got = polish(seeds)
        if got is not None:
            return got
    except ConvergenceError:
        pass
    v0, _ = f_m(seeds)
    for n_seg in (8, 32, 128):
        w = seeds.copy()
        try:
            for i in range(1, n_seg + 1):
                ts = v0 + (i / n_seg) * (t - v0)
                for _ in range(3):
                    v, dv = f_m(w)
                    res = v - ts
                    if float(np.max(np.abs(res) / scale)) <= 1e-8:
                        break
                    w = w - res / dv
            got = polish(w)
            if got is not None:
                return got
        except ConvergenceError:
            continue
    raise ConvergenceError(
        "perturbed-branch continuation did not converge; retry with larger N")


def persistence_check(sys: IfsSystem, branches, N: int,
                      z_test: complex | None = None,
                      eps: float | None = None,
                      n_samples: int = 8) -> PersistenceReport:
    """Realize a branch subset inside the perturbed polynomial dynamics.

    For the fitted implosion parameter eps_N, the inverse of psi_{n,r} is
    an iterate of f_{c0+eps} of length j + k*(1 - r + N*(n+1)); Newton
    continuation from the unperturbed branch images locates the perturbed
    compacts mapping onto the base ball, and the report compares them with
    the Lavaurs-limit branches.
    """
    if not branches:
        raise ValueError("empty selection")
    ev = sys.lm.ev
    pd = ev.pd
    if z_test is None:
        z_test = complex(pd.alpha - ev.delta)
    if eps is None:
        eps = implosion_fit(ev, sys.lm.sigma, N, z_test)
    c_pert = pd.c0 + eps

    ring = sys.ball.center + 0.6 * sys.ball.radius * np.exp(
        2j * np.pi * np.arange(n_samples - 1) / (n_samples - 1))
    zs = np.concatenate([[sys.ball.center], ring])

    defect = 0.0
    expand_min = np.inf
    lam_pert = []
    lam_unpert = []
    labels = []
    for b in branches:
        w0, dpsi = _branch_values_at(sys, b.n, b.r, zs)
        M = sys.sol.j + pd.k * (1 - b.r + N * (b.n + 1))
        if M <= 0:
            raise ValueError(f"branch {(b.n, b.r)} has no positive iterate")
        w_pert, dF = _perturbed_newton(pd.d, c_pert, pd.sign, M, w0, zs,
                                       ev.esc_r)
        defect = max(defect, float(np.max(np.abs(w_pert - w0))))
        expand_min = min(expand_min, float(np.min(dF)))
        lam_pert.append(float(np.min(1.0 / dF)))
        lam_unpert.append(float(np.min(dpsi)))
        labels.append(b.label)
    # Moran lower roots on matching per-branch strongest contractions
    t_p = _moran_root(lam_pert, 1e-6)
    t_u = _moran_root(lam_unpert, 1e-6)
    return PersistenceReport(N=int(N), eps=float(eps), labels=tuple(labels),
                             max_defect=defect, min_expansion=expand_min,
                             expansion_ok=bool(expand_min > 1.0),
                             t_lower_perturbed=t_p, t_lower_unperturbed=t_u)


# ----------------------------------------------------------------------
# box counting


def box_counting(grid, scales) -> float:
    """Least-squares box-counting slope of a marked grid.

    grid is anything with a 2-D boolean .cells array (or the array
    itself); scales are box sides in cells, at least four of them.
    """
    cells = np.asarray(getattr(grid, "cells", grid))
    if cells.ndim != 2:
        raise ValueError("grid cells must be a 2-D array")
    mask = cells != 0
    total = int(np.count_nonzero(mask))
    if total == 0 or total == mask.size:
        raise ValueError("degenerate grid: empty or full")
    scales = sorted(int(s) for s in scales)
    if len(scales) < 4 or scales[0] < 1:
        raise ValueError("need at least four positive scales")
    counts = []
    for s in scales:
        h = (mask.shape[0] + s - 1) // s
        w = (mask.shape[1] + s - 1) // s
        pad = np.zeros((h * s, w * s), dtype=bool)
        pad[: mask.shape[0], : mask.shape[1]] = mask
        boxes = pad.reshape(h, s, w, s).any(axis=(1, 3))
        counts.append(int(np.count_nonzero(boxes)))
    if min(counts) == 0:
        raise ValueError("degenerate grid: empty at some scale")
    slope = np.polyfit(np.log(1.0 / np.asarray(scales, dtype=float)),
                       np.log(np.asarray(counts, dtype=float)), 1)[0]
    return float(slope)


def box_counting_report(grid, scales) -> tuple:
    """(slope, stderr) of the box-counting fit, for error-bar comparisons."""
    cells = np.asarray(getattr(grid, "cells", grid))
    mask = cells != 0
    scales = sorted(int(s) for s in scales)
    if len(scales) < 4 or scales[0] < 1:
        raise ValueError("need at least four positive scales")
    counts = []
    for s in scales:
        h = (mask.shape[0] + s - 1) // s
        w = (mask.shape[1] + s - 1) // s
        pad = np.zeros((h * s, w * s), dtype=bool)
        pad[: mask.shape[0], : mask.shape[1]] = mask
        counts.append(int(np.count_nonzero(
            pad.reshape(h, s, w, s).any(axis=(1, 3)))))
    if min(counts) == 0:
        raise ValueError("degenerate grid: empty at some scale")
    x = np.log(1.0 / np.asarray(scales, dtype=float))
    y = np.log(np.asarray(counts, dtype=float))
    coef, cov = np.polyfit(x, y, 1, cov=True)
    return float(coef[0]), float(np.sqrt(cov[0, 0]))


# ----------------------------------------------------------------------
# result records


def dimension_record(pd, sigma: float, window: tuple, theta_br: tuple,
                     moran: MoranResult, timestamp: str = "") -> dict:
    """Flat JSON-ready record of one dimension run."""
    return {
        "d": int(pd.d),
        "c0": float(pd.c0),
        "k": int(pd.k),
        "sigma": float(sigma),
        "window": [int(window[0]), int(window[1])],
        "theta_bracket": [float(theta_br[0]), float(theta_br[1])],
        "t_lower": float(moran.t_lower),
        "t_upper": float(moran.t_upper),
        "timestamps": {"created": timestamp},
    }


def write_record(record: dict, path) -> None:
    with open(path, "w") as fh:
        json.dump(record, fh, indent=2, sort_keys=True)
        fh.write("\n")
