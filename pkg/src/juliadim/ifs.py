"""Contracting branch system of a Lavaurs map on a ball at the critical point.

The branches are

    psi_{n,r} = h o F^r o G^n o F^{-1}        (n >= n0, r integer)

where F is the oriented return map, F^{-1} its inverse branch carrying the
base ball B0 into the upper attracting region (image ball B'), G the inverse
Lavaurs branch, negative powers of F use the inverse branch fixing alpha, and
h is a final local inverse that carries a neighborhood of alpha back inside
B0 through the critical-value chain.  Each branch is a contraction of B0 into
itself; together they generate a conformal iterated function system indexed
by the label lattice (n, r), and the Hausdorff dimension of its limit set is
what the pressure/Moran machinery downstream brackets.

Numerically everything is driven through the repelling chart.  Writing
W0(z) for the repelling coordinate of F^{-1}(z), the n-fold inverse Lavaurs
branch followed by r return steps is a single translation,

    (F^r o G^n o F^{-1})(z) = psi_plus(W0(z) + n*(-sigma + i*pi*A) + r),

up to the exponentially small horn cocycle (|error| ~ e^{-2 pi Im W}, below
1e-9 for every label used here, and checked against the direct composition
in the tests).  W0 itself is obtained by Newton inversion of psi_plus, so no
asymptotic matching error enters at the shallow end.  One evaluation of the
chart per sample then prices an entire column of r-values, because
psi(W + 1) = F(psi(W)) exactly.

h is realized as the preimage chain of f-steps from alpha back to the
Lavaurs critical value, followed by inversion of the degree-d local model of
g_sigma at the critical point (a Fourier-calibrated jet), taking the d-th
root branch with argument in (0, 2*pi/d).  Its domain is a disk around alpha
slit along the real ray {x >= alpha}; the slit is exactly the image of the
wedge boundary, so the branch choice is continuous on the slit complement.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace

import numpy as np
import numpy.polynomial.polynomial as npoly

from .dynamics import ConvergenceError
from .fatou import FatouEvaluator
from .lavaurs import LavaursMap, SigmaSolution, lavaurs_eval_batch

__all__ = [
    "BaseBall",
    "BranchH",
    "IfsBranch",
    "IfsSystem",
    "SeparationReport",
    "WindowReport",
    "branch_fixed_point",
    "branch_h",
    "branch_point_eval",
    "build_branch",
    "build_system",
    "build_window",
    "choose_base_ball",
    "distortion_constant",
    "export_branches",
    "make_branch_h",
    "separation_check",
]

# Margin applied to sampled derivative extrema and image enclosures.  It
# absorbs the gap between a 16x16 sample of the ball and the true sup/inf
# (classical distortion control on the enlarged ball keeps the truth within
# a few percent of the samples; 25% is deliberately generous).
SAMPLING_MARGIN = 1.25


# ----------------------------------------------------------------------
# base ball


@dataclass(frozen=True)
class BaseBall:
    """Ball around the critical point on which the branch system acts.

    center is always 0; radius is a dyadic value kept at distance >= 2r
    from the postcritical set, and enlarged_radius > radius bounds the
    region where distortion of the branches is controlled.
    """

    center: complex
    radius: float
    enlarged_radius: float

    def __post_init__(self):
        if self.center != 0:
            raise ValueError("base ball must be centered at the critical point")
        if not (0.0 < self.radius < self.enlarged_radius):
            raise ValueError("need 0 < radius < enlarged_radius")


def choose_base_ball(pd, critical_orbit_len: int = 4096) -> BaseBall:
    """Largest dyadic ball (radius <= 0.05) around 0 clearing the postcritical set.

    The postcritical set is sampled by the forward orbit of the critical
    value; the radius r is the largest power of two with r <= 0.05 and
    2r <= dist(0, orbit sample).  Doubling the orbit length can shrink the
    result by at most one dyadic step once the orbit has closed in on its
    attractor.
    """
    if critical_orbit_len < 8:
        raise ValueError("critical_orbit_len too small to sample the orbit")
    z = complex(pd.c0)  # critical value
    dmin = abs(z)
    for _ in range(critical_orbit_len - 1):
        z = z ** pd.d + pd.c0
        az = abs(z)
        if az < dmin:
            dmin = az
        if az > 1e3:
            break  # escaped far from the ball; no further constraint
    bound = min(0.05, 0.5 * dmin)
    if bound <= 2.0 ** -40:
        raise ValueError(
            "postcritical set reaches the critical point; no base ball")
    m = math.ceil(-math.log2(bound))
    radius = 2.0 ** -m
    return BaseBall(center=0j, radius=radius, enlarged_radius=1.5 * radius)


# ----------------------------------------------------------------------
# the final local inverse h


@dataclass(frozen=True)
class BranchH:
    """Local inverse of f^j o g_sigma near alpha.

    Domain: the disk |w - alpha| <= u_radius minus the slit {x >= alpha};
    range: a disk at 0 intersected with the wedge Arg in (0, 2*pi/d).
    chain holds the forward f-orbit from the Lavaurs critical value
    x_target to alpha (oriented frame); jet is the Fourier-calibrated
    polynomial model of g_sigma on |z| <= jet_radius, trusted for
    |z| <= z_max.  jet_err records the measured model defect at the
    working radius.
    """

    j: int
    d: int
    sign: float
    c0: float
    alpha: float
    x_target: float
    u_radius: float
    u_range: float
    chain: tuple
    jet: tuple
    jet_deriv: tuple
    jet_radius: float
    z_max: float
    g0: complex
    jet_err: float


def _chain_invert(hs: BranchH, w, max_iter: int = 40):
    """Pull w back along the critical-value chain: solve ftil^j(y) = w.

    Returns (y, dF, ok) with dF the derivative of ftil^j at y.  Vectorized
    over w; each single f-step is Newton-inverted from the chain point it
    tracks.
    """
    w = np.asarray(w, dtype=complex)
    y = w.copy()
    dF = np.ones_like(w)
    ok = np.ones(w.shape, dtype=bool)
    d, sg, c0 = hs.d, hs.sign, hs.c0
    for i in range(hs.j - 1, -1, -1):
        target = y.copy()
        yi = np.full_like(w, hs.chain[i])
        scale = np.maximum(1.0, np.abs(target))
        conv = np.zeros(w.shape, dtype=bool)
        for _ in range(max_iter):
            der = sg * d * yi ** (d - 1)
            res = sg * (yi ** d + c0) - target
            conv = np.abs(res) <= 1e-12 * scale
            if np.all(conv | ~ok):
                break
            step = np.where(conv | ~ok | (der == 0), 0.0, res / np.where(der == 0, 1.0, der))
            yi = yi - step
        ok = ok & conv
        y = yi
        dF = dF * sg * d * yi ** (d - 1)
    return y, dF, ok


def _jet_invert(hs: BranchH, y0, max_iter: int = 40):
    """Invert the local model: jet(z) = y0 with Arg z in (0, 2*pi/d)."""
    y0 = np.asarray(y0, dtype=complex)
    d = hs.d
    cd = hs.jet[d]
    t = (y0 - hs.g0) / cd
    ok = np.abs(t) > 0
    rad = np.abs(t) ** (1.0 / d)
    ang = np.angle(t) / d
    ang = np.where(ang <= 0.0, ang + 2.0 * np.pi / d, ang)
    z = rad * np.exp(1j * ang)
    jc = np.asarray(hs.jet)
    jd = np.asarray(hs.jet_deriv)
    scale = np.maximum(1.0, np.abs(y0))
    conv = np.zeros(y0.shape, dtype=bool)
    for _ in range(max_iter):
        res = npoly.polyval(z, jc) - y0
        conv = np.abs(res) <= 1e-12 * scale
        if np.all(conv | ~ok):
            break
        der = npoly.polyval(z, jd)
        bad = der == 0
        z = z - np.where(conv | ~ok | bad, 0.0, res / np.where(bad, 1.0, der))
    ok = ok & conv
    dg = npoly.polyval(z, jd)
    return z, dg, ok


_H_STAGES = (
    "outside the domain disk of h",
    "on the deleted real ray of h",
    "preimage chain Newton did not converge",
    "local model inversion did not converge",
    "image left the trusted local model disk",
    "image argument left the branch wedge",
)


def _branch_h_batch(hs: BranchH, w):
    """Evaluate h and h' on an array; returns (z, dh, stage) with stage 0 ok."""
    w = np.asarray(w, dtype=complex)
    stage = np.zeros(w.shape, dtype=np.uint8)
    rel = w - hs.alpha
    stage[np.abs(rel) > hs.u_radius * (1.0 + 1e-9)] = 1
    on_slit = (rel.imag == 0.0) & (rel.real >= 0.0)
    stage[on_slit & (stage == 0)] = 2
    y0, dF, ok1 = _chain_invert(hs, w)
    stage[(~ok1) & (stage == 0)] = 3
    z, dg, ok2 = _jet_invert(hs, y0)
    stage[(~ok2) & (stage == 0)] = 4
    with np.errstate(invalid="ignore"):
        stage[(np.abs(z) > hs.z_max) & (stage == 0)] = 5
        theta = np.mod(np.angle(z), 2.0 * np.pi)
        bad_wedge = (theta <= 0.0) | (theta >= 2.0 * np.pi / hs.d)
    stage[bad_wedge & (stage == 0)] = 6
    dtotal = dF * dg
    safe = dtotal != 0
    dh = np.where(safe, 1.0 / np.where(safe, dtotal, 1.0), np.nan)
    z = np.where(stage == 0, z, np.nan + 0j)
    dh = np.where(stage == 0, dh, np.nan + 0j)
    return z, dh, stage


def branch_h(hs: BranchH, w) -> complex:
    """The local inverse h at a single point of its slit-disk domain.

    Raises ValueError off the domain and ConvergenceError when a stage of
    the inversion fails; the message names the stage.
    """
    z, _, stage = _branch_h_batch(hs, np.asarray([w], dtype=complex))
    s = int(stage[0])
    if s == 0:
        return complex(z[0])
    msg = f"{_H_STAGES[s - 1]} (w = {w})"
    if s in (1, 2):
        raise ValueError(msg)
    raise ConvergenceError(msg)


def make_branch_h(lm: LavaursMap, sol: SigmaSolution, ball: BaseBall,
                  u_radius: float | None = None, jet_degree: int = 24,
                  n_circle: int = 64) -> BranchH:
    """Calibrate the local inverse h for the given Lavaurs solution.

    The model radius is adaptive: the chain inversion of the domain disk
    boundary measures how much range the degree-d model must cover, and
    the Fourier circle is placed between 1.6 and 3 times the needed
    preimage radius, as far out as actually validates -- the region where
    g_sigma is both evaluable and analytic can be surprisingly small,
    because the repelling-chart image of even a tiny ball at the critical
    point is large.
    """
    ev = lm.ev
    pd = ev.pd
    if abs(lm.sigma - sol.sigma_star) > 1e-9:
        raise ValueError("Lavaurs map and sigma solution disagree")
    d = pd.d
    if u_radius is None:
        u_radius = ev.delta
    # forward chain from the Lavaurs critical value to alpha
    x = float(sol.x_target)
    chain = [x]
    for _ in range(sol.j):
        x = pd.sign * (x ** d + pd.c0)
        chain.append(x)
    if abs(chain[-1] - pd.alpha) > 1e-7:
        raise ConvergenceError("critical-value chain does not land on alpha")
    for p in chain[:-1]:
        if abs(p) ** (d - 1) * d < 1e-6:
            raise ConvergenceError("critical-value chain passes a critical point")

    probe = BranchH(j=sol.j, d=d, sign=pd.sign, c0=pd.c0, alpha=pd.alpha,
                    x_target=sol.x_target, u_radius=u_radius, u_range=np.inf,
                    chain=tuple(chain), jet=(0.0,) * (jet_degree + 1),
                    jet_deriv=(0.0,) * jet_degree, jet_radius=1.0, z_max=1.0,
                    g0=0j, jet_err=np.nan)
    theta = 2.0 * np.pi * (np.arange(32) + 0.5) / 32

    # leading model coefficient from a small calibration circle
    r_t = ball.radius / 4.0
    cd_est = None
    while r_t > ball.radius / 64.0:
        zs = r_t * np.exp(2j * np.pi * np.arange(n_circle) / n_circle)
        vals, st = lavaurs_eval_batch(lm, zs)
        if np.all(st == 0):
            coef = np.fft.fft(vals) / n_circle
            cd_est = abs(coef[d]) / r_t ** d
            break
        r_t *= 0.6
    if cd_est is None or cd_est == 0.0:
        raise ConvergenceError("local model calibration circle not evaluable")

    # Evaluability of a circle does not prove the model disk is analytic:
    # the Fourier circle may enclose singular points and still evaluate
    # pointwise, leaving a flat, useless coefficient tail.  So candidate
    # radii are accepted only after the finished jet reproduces direct
    # evaluation at the needed preimage radius.  When no circle between
    # 1.59 and 3 times that radius validates, the domain disk of h is
    # halved, which shrinks the range the model must cover.
    u_r = float(u_radius)
    reason = "local model disk not evaluable over the needed range"
    while True:
        wb = pd.alpha + u_r * np.exp(1j * theta)
        yb, _, okb = _chain_invert(probe, wb)
        if not np.all(okb):
            raise ConvergenceError(
                "chain inversion failed on the domain boundary")
        u_range = 1.15 * float(np.max(np.abs(yb - sol.x_target)))
        r_need = (u_range / cd_est) ** (1.0 / d)
        zv = r_need * np.exp(2j * np.pi * (np.arange(16) + 0.37) / 16)
        direct, stv = lavaurs_eval_batch(lm, zv)
        if np.all(stv == 0):
            dscale = max(1.0, float(np.max(np.abs(direct))))
            for fac in (1.6, 2.2, 3.0):
                r_jet = fac * r_need
                zs = r_jet * np.exp(
                    2j * np.pi * np.arange(n_circle) / n_circle)
                vals, st = lavaurs_eval_batch(lm, zs)
                if not np.all(st == 0):
                    continue
                coef = np.fft.fft(vals) / n_circle
                coef = coef[: jet_degree + 1] \
                    / r_jet ** np.arange(jet_degree + 1)
                scale = max(1.0, abs(coef[d]) * r_jet ** d)
                low = max(abs(coef[m]) * r_jet ** m for m in range(1, d))\
                    if d > 1 else 0.0
                if low > 1e-8 * scale:
                    reason = ("local model has sub-principal terms; "
                              "the Fourier circle is not trustworthy")
                    continue
                err = float(np.max(np.abs(
                    npoly.polyval(zv, np.asarray(coef)) - direct)))
                if err > 1e-8 * dscale:
                    reason = (f"local model defect {err:.3e} "
                              "at its working radius")
                    continue
                jet_deriv = npoly.polyder(coef)
                return BranchH(j=sol.j, d=d, sign=pd.sign, c0=pd.c0,
                               alpha=pd.alpha, x_target=sol.x_target,
                               u_radius=u_r, u_range=u_range,
                               chain=tuple(chain), jet=tuple(coef),
                               jet_deriv=tuple(jet_deriv),
                               jet_radius=float(r_jet),
                               z_max=float(1.10 * r_need),
                               g0=complex(coef[0]), jet_err=err)
        else:
            reason = "local model validation circle not evaluable"
        if u_r <= u_radius / 16.0:
            raise ConvergenceError(reason)
        u_r *= 0.5


# ----------------------------------------------------------------------
# branch system


@dataclass(frozen=True)
class IfsBranch:
    """One contracting branch, labelled (n, r), with certified-style bounds.

    deriv_min/deriv_max bound |psi_{n,r}'| on the base ball (sampled
    extrema widened by the sampling margin); image_center/image_radius
    enclose the image of the ball.
    """

    n: int
    r: int
    deriv_min: float
    deriv_max: float
    image_center: complex
    image_radius: float

    def __post_init__(self):
        if not (0.0 < self.deriv_min <= self.deriv_max < 1.0):
            raise ValueError("branch derivative bounds must sit in (0, 1)")
        if not (self.image_radius > 0.0):
            raise ValueError("image radius must be positive")

    @property
    def label(self) -> tuple:
        return (self.n, self.r)


@dataclass(frozen=True)
class IfsSystem:
    """Carrier for the branch family: charts, base-ball grid, and h.

    grid_z samples the base ball; W0 holds the repelling-chart coordinates
    of the F-preimages of the grid in the upper petal (image ball B'),
    dW0 their z-derivatives.  step = -sigma + i*pi*A advances one inverse
    Lavaurs application in the chart.  Immutable and free of open handles,
    so branch construction can be farmed out with any parallel map.
    """

    lm: LavaursMap
    sol: SigmaSolution
    ball: BaseBall
    hs: BranchH
    bprime: complex
    n0: int
    step: complex
    depth: int
    grid_z: np.ndarray
    grid_x: np.ndarray
    W0: np.ndarray
    dW0: np.ndarray


@dataclass(frozen=True)
class SeparationReport:
    ok: bool
    inside: bool
    disjoint: bool
    min_gap: float
    max_radius: float
    worst_pair: tuple


@dataclass(frozen=True)
class WindowReport:
    """Diagnostics of a rectangular label window build."""

    n0: int
    n_max: int
    r_max: int
    count: int
    skipped: tuple        # labels rejected for non-contraction
    t0: int               # all labels with n + |r| >= t0 are contractive
    prefactor: float      # fitted scale c* of deriv ~ c* |label|^(-1-1/d)
    c1: float             # law tightness: ratios within [c*/c1, c*·c1]
    ratio_lo: float       # raw band of deriv / |label|^(-1-1/d)
    ratio_hi: float


def _fprime(ev: FatouEvaluator, z):
    """Derivative of the oriented return map, via the shifted polynomial."""
    dq = npoly.polyder(ev.qcoef)
    return 1.0 + npoly.polyval(np.asarray(z, dtype=complex) - ev.pd.alpha, dq)


def _f_step(ev: FatouEvaluator, z):
    zeta = np.asarray(z, dtype=complex) - ev.pd.alpha
    return z + npoly.polyval(zeta, ev.qcoef)


def _preimage_newton(ev: FatouEvaluator, targets, seed, max_iter: int = 60):
    """Solve F(y) = target near the seed; returns (y, ok)."""
    q = ev.qcoef
    dq = npoly.polyder(q)
    t = np.asarray(targets, dtype=complex)
    y = np.full(t.shape, complex(seed))
    scale = np.maximum(1.0, np.abs(t))
    conv = np.zeros(t.shape, dtype=bool)
    for _ in range(max_iter):
        zeta = y - ev.pd.alpha
        res = y + npoly.polyval(zeta, q) - t
        conv = np.abs(res) <= 1e-13 * scale
        if np.all(conv):
            break
        der = 1.0 + npoly.polyval(zeta, dq)
        bad = der == 0
        y = y - np.where(conv | bad, 0.0, res / np.where(bad, 1.0, der))
    return y, conv


def _psi_inverse_newton(ev: FatouEvaluator, x, seed, depth: int,
                        max_iter: int = 12):
    """Solve psi_plus(W) = x by Newton from the horn-shifted seed."""
    W = np.asarray(seed, dtype=complex).copy()
    x = np.asarray(x, dtype=complex)
    scale = np.maximum(1.0, np.abs(x))
    for _ in range(max_iter):
        z, dz, st = ev.psi_plus_batch(W, want_deriv=True, depth=depth)
        if np.any(st != 0):
            raise ConvergenceError(
                "repelling chart left its window while matching the preimage grid")
        res = z - x
        if np.all(np.abs(res) <= 1e-12 * scale):
            break
        W = W - res / dz
    z, dz, st = ev.psi_plus_batch(W, want_deriv=True, depth=depth)
    if np.any(st != 0) or np.any(np.abs(z - x) > 1e-10 * scale):
        raise ConvergenceError("repelling-chart matching failed on the grid")
    return W, dz


def build_system(lm: LavaursMap, sol: SigmaSolution,
                 ball: BaseBall | None = None, grid_n: int = 16,
                 depth: int = 4000, n_cap: int = 64) -> IfsSystem:
    """Assemble the branch-system carrier for one Lavaurs solution.

    Picks the base ball, calibrates h, locates the upper F-preimage ball
    B' (the preimage component closest to alpha in the upper half-plane),
    matches the repelling chart on the sampled grid, and determines n0 --
    the smallest n for which G^n(B') lies inside the domain disk of h at
    alpha, where the inverse chain is under control.
    """
    ev = lm.ev
    pd = ev.pd
    if ball is None:
        ball = choose_base_ball(pd)
    hs = make_branch_h(lm, sol, ball)
    step = complex(-lm.sigma, np.pi * pd.A)

    # B': upper-half preimage of the ball center closest to alpha
    qc = np.array(ev.qcoef, dtype=complex).copy()
    qc[1] += 1.0
    qc[0] += pd.alpha - ball.center
    roots = npoly.polyroots(qc) + pd.alpha
    cands = sorted((r for r in roots if r.imag > 1e-9),
                   key=lambda r: abs(r - pd.alpha))
    bprime = None
    for r in cands:
        if ev.in_basin(complex(r)):
            bprime = complex(r)
            break
    if bprime is None:
        raise ConvergenceError(
            "no upper-half preimage of the base ball in the attracting region")

    # grid on the ball and its F-preimage near B'
    side = np.linspace(-ball.radius, ball.radius, grid_n)
    gx, gy = np.meshgrid(side, side)
    grid_z = (gx + 1j * gy).ravel() + ball.center
    grid_z = grid_z[np.abs(grid_z - ball.center) <= ball.radius]
    grid_x, okp = _preimage_newton(ev, grid_z, bprime)
    if not np.all(okp):
        raise ConvergenceError("preimage Newton failed on the base-ball grid")
    if np.any(grid_x.imag <= 0):
        raise ConvergenceError("preimage grid left the upper half-plane")

    phi, _, pst, _ = ev.phi_minus_batch(grid_x)
    if np.any(pst != 0):
        raise ConvergenceError("preimage grid left the attracting chart")
    W0, dpsi = _psi_inverse_newton(ev, grid_x, phi + 1j * np.pi * pd.A, depth)
    dW0 = 1.0 / (dpsi * _fprime(ev, grid_x))

    # n0: smallest n with G^n(B') inside the h-domain disk at alpha
    n0 = None
    for n in range(1, n_cap + 1):
        y, _, st = ev.psi_plus_batch(W0 + n * step, depth=depth)
        if np.any(st != 0):
            continue
        if 1.10 * float(np.max(np.abs(y - pd.alpha))) < hs.u_radius:
            n0 = n
            break
    if n0 is None:
        raise ConvergenceError(
            "inverse Lavaurs branch never pulled the preimage ball "
            "into the delta-disk")

    # raise n0 until the branch images also nest inside the base ball
    # (probing small |r|; image size decays as a power of the label)
    sys0 = IfsSystem(lm=lm, sol=sol, ball=ball, hs=hs, bprime=bprime,
                     n0=n0, step=step, depth=depth, grid_z=grid_z,
                     grid_x=grid_x, W0=W0, dW0=dW0)
    # coarse containment probe: a grid subsample at reduced chart depth is
    # plenty for a reach estimate (the window builder and separation_check
    # re-derive the real enclosures afterwards)
    sub = slice(None, None, 7)
    W0s = W0[sub]
    dW0s = dW0[sub]

    def _fits(n: int) -> bool:
        try:
            yy, dd, st = ev.psi_plus_batch(W0s + n * step - 8,
                                           want_deriv=True, depth=600)
            if np.any(st != 0):
                return False
            reach = 0.0
            for r in range(-8, 9):
                if float(np.max(np.abs(yy - pd.alpha))) \
                        > hs.u_radius * (1.0 + 1e-9):
                    return False
                z_img, dh, stage = _branch_h_batch(hs, yy)
                if np.any(stage != 0):
                    return False
                if np.max(np.abs(dh * dd * dW0s)) * SAMPLING_MARGIN >= 1.0:
                    return False
                center = complex(np.mean(z_img))
                rad = 1.10 * SAMPLING_MARGIN \
                    * float(np.max(np.abs(z_img - center)))
                reach = max(reach, abs(center - ball.center) + rad)
                if r < 8:
                    dd = dd * _fprime(ev, yy)
                    yy = _f_step(ev, yy)
        except (ValueError, ConvergenceError):
            return False
        return reach < ball.radius

    # image size decays like a power of n (softened to its 1/d-th power
    # by the critical point), so bracket the threshold exponentially and
    # finish with bisection
    if not _fits(n0):
        bad, good, gap = n0, None, 1
        trial = n0 + 1
        while good is None:
            if _fits(trial):
                good = trial
            else:
                bad = trial
                if trial >= n_cap:
                    raise ConvergenceError(
                        "no return depth keeps the branch images inside "
                        "the base ball")
                gap *= 2
                trial = min(trial + gap, n_cap)
        while good - bad > 1:
            mid = (good + bad) // 2
            if _fits(mid):
                good = mid
            else:
                bad = mid
        n0 = good
    return replace(sys0, n0=n0)


def _finish_branch(sys: IfsSystem, n: int, r: int, y, dydW):
    """Common tail of branch construction: h, bounds, enclosure."""
    hs = sys.hs
    off = np.abs(y - hs.alpha)
    if float(np.max(off)) > hs.u_radius * (1.0 + 1e-9):
        raise ConvergenceError(
            f"return steps left the inverse-chain domain at branch {(n, r)}")
    z_img, dh, stage = _branch_h_batch(hs, y)
    if np.any(stage != 0):
        s = int(stage[stage != 0][0])
        raise ConvergenceError(f"{_H_STAGES[s - 1]} at branch {(n, r)}")
    deriv = np.abs(dh * dydW * sys.dW0)
    dmin = float(np.min(deriv)) / SAMPLING_MARGIN
    dmax = float(np.max(deriv)) * SAMPLING_MARGIN
    if dmax >= 1.0:
        raise ValueError(
            f"branch {(n, r)} is not uniformly contracting (bound {dmax:.3f})")
    center = complex(np.mean(z_img))
    radius = SAMPLING_MARGIN * float(np.max(np.abs(z_img - center)))
    return IfsBranch(n=n, r=r, deriv_min=dmin, deriv_max=dmax,
                     image_center=center, image_radius=radius)


def build_branch(sys: IfsSystem, n: int, r: int) -> IfsBranch:
    """Construct the branch psi_{n,r} with derivative and image enclosures.

    n must be at least the system's n0; r may be any integer (negative
    values run the alpha-fixing inverse return branch).  Raises
    ConvergenceError naming the failing stage, or ValueError if the label
    is invalid or the branch fails to contract.
    """
    if n < sys.n0:
        raise ValueError(f"n = {n} is below the system threshold n0 = {sys.n0}")
    ev = sys.lm.ev
    W = sys.W0 + n * sys.step + r
    y, dydW, st = ev.psi_plus_batch(W, want_deriv=True, depth=sys.depth)
    if np.any(st != 0):
        raise ConvergenceError(
            f"repelling push escaped its window at branch {(n, r)}")
    return _finish_branch(sys, n, r, y, dydW)


def build_window(sys: IfsSystem, n_max: int = 30, r_max: int = 30):
    """Build every branch with n0 <= n <= n_max, |r| <= r_max.

    Returns (branches, report).  A column of r-values shares one chart
    evaluation: the anchor at r = -r_max is pushed forward by exact return
    steps, which is what makes the full window affordable.  Labels whose
    sampled contraction bound reaches 1 are skipped and recorded on the
    report; t0 is the smallest label size n + |r| beyond which nothing was
    skipped.
    """
    if n_max < sys.n0:
        raise ValueError("window is empty: n_max < n0")
    ev = sys.lm.ev
    ns = np.arange(sys.n0, n_max + 1)
    G = sys.W0.shape[0]
    anchors = (sys.W0[None, :] + ns[:, None] * sys.step - r_max).ravel()
    y, dydW, st = ev.psi_plus_batch(anchors, want_deriv=True, depth=sys.depth)
    if np.any(st != 0):
        raise ConvergenceError("repelling push escaped its window on an anchor")
    y = y.reshape(len(ns), G)
    dydW = dydW.reshape(len(ns), G)

    d = ev.pd.d
    branches = []
    skipped = []
    ratios = []
    for i, n in enumerate(ns):
        yy = y[i].copy()
        dd = dydW[i].copy()
        for r in range(-r_max, r_max + 1):
            try:
                br = _finish_branch(sys, int(n), r, yy, dd)
                branches.append(br)
                rho = abs(r + sys.step * n) ** (-1.0 - 1.0 / d)
                ratios.append(math.sqrt(br.deriv_min * br.deriv_max) / rho)
            except ValueError:
                skipped.append((int(n), r))
            if r < r_max:
                dd = dd * _fprime(ev, yy)
                yy = _f_step(ev, yy)

    if not branches:
        raise ConvergenceError("window produced no contracting branches")
    ratios = np.asarray(ratios)
    # one fitted scale, then the smallest symmetric factor containing the band;
    # the law's constant is only defined up to the coordinate normalization,
    # so its tightness is what is measured
    c_star = float(np.exp(np.mean(np.log(ratios))))
    lo, hi = float(np.min(ratios)), float(np.max(ratios))
    c1 = float(max(hi / c_star, c_star / lo))
    t0 = sys.n0
    if skipped:
        t0 = 1 + max(n + abs(r) for n, r in skipped)
    report = WindowReport(n0=sys.n0, n_max=n_max, r_max=r_max,
                          count=len(branches), skipped=tuple(skipped), t0=t0,
                          prefactor=c_star, c1=c1, ratio_lo=lo, ratio_hi=hi)
    return branches, report


# ----------------------------------------------------------------------
# checks, exports, and pointwise evaluation


def separation_check(branches, ball: BaseBall) -> SeparationReport:
    """Pairwise disjointness of image disks, all strictly inside the ball."""
    if not branches:
        raise ValueError("no branches to check")
    c = np.array([b.image_center for b in branches])
    rr = np.array([b.image_radius for b in branches])
    inside = bool(np.all(np.abs(c - ball.center) + rr < ball.radius))
    if len(branches) == 1:
        return SeparationReport(ok=inside, inside=inside, disjoint=True,
                                min_gap=np.inf, max_radius=float(rr[0]),
                                worst_pair=())
    gap = np.abs(c[:, None] - c[None, :]) - rr[:, None] - rr[None, :]
    iu = np.triu_indices(len(branches), k=1)
    gaps = gap[iu]
    kmin = int(np.argmin(gaps))
    i, jj = iu[0][kmin], iu[1][kmin]
    min_gap = float(gaps[kmin])
    disjoint = bool(min_gap > 0.0)
    return SeparationReport(
        ok=inside and disjoint, inside=inside, disjoint=disjoint,
        min_gap=min_gap, max_radius=float(np.max(rr)),
        worst_pair=(branches[i].label, branches[jj].label))


def distortion_constant(branches) -> float:
    """Largest ratio deriv_max/deriv_min over the family."""
    if not branches:
        raise ValueError("no branches")
    return float(max(b.deriv_max / b.deriv_min for b in branches))


def export_branches(branches, path) -> None:
    """CSV table of labels, derivative bounds, and image enclosures."""
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["n", "r", "deriv_min", "deriv_max",
                     "center_re", "center_im", "radius"])
        for b in branches:
            wr.writerow([b.n, b.r, repr(b.deriv_min), repr(b.deriv_max),
                         repr(b.image_center.real), repr(b.image_center.imag),
                         repr(b.image_radius)])


def branch_point_eval(sys: IfsSystem, n: int, r: int, z,
                      w_hint: complex | None = None) -> complex:
    """Evaluate psi_{n,r} at a single point of the base ball.

    Independent of the cached grid: the preimage, chart matching, and h
    are all recomputed at z, which makes this the reference route for
    spot checks (and the engine of the Banach fixed-point iteration).
    """
    ev = sys.lm.ev
    pd = ev.pd
    if abs(z - sys.ball.center) > sys.ball.radius * (1 + 1e-12):
        raise ValueError("point is outside the base ball")
    x, ok = _preimage_newton(ev, np.asarray([z], dtype=complex), sys.bprime)
    if not ok[0] or x[0].imag <= 0:
        raise ConvergenceError("preimage step failed at the evaluation point")
    if w_hint is None:
        phi, _, pst, _ = ev.phi_minus_batch(x)
        if pst[0] != 0:
            raise ConvergenceError("attracting chart failed at the evaluation point")
        seed = phi + 1j * np.pi * pd.A
    else:
        seed = np.asarray([w_hint], dtype=complex)
    W0, _ = _psi_inverse_newton(ev, x, seed, sys.depth)
    W = W0 + n * sys.step + r
    y, _, st = ev.psi_plus_batch(W, depth=sys.depth)
    if st[0] != 0:
        raise ConvergenceError(
            f"repelling push escaped its window at branch {(n, r)}")
    return branch_h(sys.hs, complex(y[0]))


def branch_fixed_point(sys: IfsSystem, n: int, r: int, tol: float = 1e-12,
                       max_iter: int = 80):
    """Banach fixed point of psi_{n,r} on the base ball.

    Returns (z_star, residual); the iteration starts at the ball center
    and the residual is |psi_{n,r}(z_star) - z_star| after convergence.
    """
    z = sys.ball.center
    prev = None
    for _ in range(max_iter):
        znew = branch_point_eval(sys, n, r, z)
        delta = abs(znew - z)
        z = znew
        if prev is not None and delta <= tol:
            break
        prev = delta
    resid = abs(branch_point_eval(sys, n, r, z) - z)
    return z, resid
