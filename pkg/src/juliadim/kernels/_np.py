"""Pure numpy/Python kernels: escape iteration, petal orbits, pushforwards.

This is the fallback backend (and the readable reference for the compiled
one in ``_cy.pyx``).  Batch inputs are processed with index-compacted numpy
loops; tiny batches take plain scalar paths, which are also the cleanest
statement of each algorithm.

Status-code conventions shared by both backends:

escape_dem:   0 bounded (budget exhausted), 1 escaped, 2 entered petal disk
phi_orbit:    0 ok, 1 escaped (not in basin), 2 petal entry budget exhausted,
              3 increment did not reach tol within n_max
psi_push:     0 ok, 1 escaped the iteration window
"""

from __future__ import annotations

import numpy as np

_SCALAR_CUTOFF = 16  # batches up to this size take the plain-Python path


# ---------------------------------------------------------------------------
# small helpers
# ---------------------------------------------------------------------------


def _pow_even_arr(z, d):
    """z**d for even d, vectorized repeated squaring."""
    w = z * z
    e = d // 2
    out = None
    while e:
        if e & 1:
            out = w if out is None else out * w
        e >>= 1
        if e:
            w = w * w
    return out


def _pow_even_sc(z, d):
    w = z * z
    e = d // 2
    out = None
    while e:
        if e & 1:
            out = w if out is None else out * w
        e >>= 1
        if e:
            w = w * w
    return out


def _horner_arr(coef, z):
    out = np.full_like(z, coef[-1])
    for a in coef[-2::-1]:
        out = out * z + a
    return out


def _horner_sc(coef, z):
    out = coef[-1]
    for a in coef[-2::-1]:
        out = out * z + a
    return out


# ---------------------------------------------------------------------------
# iterate / escape-time with derivative tracking
# ---------------------------------------------------------------------------


def iterate_points(z0, d, c, sign, m, esc_r):
    """m-fold sign*(z**d+c); escaped points are frozen at their first big value."""
    z = np.array(z0, dtype=np.complex128, copy=True)
    flat = z.reshape(-1)
    live = np.arange(flat.size)
    for _ in range(m):
        if live.size == 0:
            break
        w = flat[live]
        w = sign * (_pow_even_arr(w, d) + c)
        flat[live] = w
        ok = np.isfinite(w.real) & np.isfinite(w.imag) & (np.abs(w) <= esc_r)
        live = live[ok]
    return z


def escape_dem(z0, d, c, sign, max_iter, esc_r,
               petal_center=0j, petal_rad=0.0, check_petal=False,
               petal_stride=1):
    """Escape-time loop with derivative tracking (for distance estimates).

    Returns (status uint8, iters int32, z_final, dz_final) where dz_final is
    the derivative of the iterate that was reached.  With check_petal, entry
    into the disk |z - petal_center| < petal_rad stops the point with
    status 2 (used to hand orbits over to Lavaurs steps).  The petal test
    runs only at steps divisible by petal_stride: stride 1 catches any
    phase of a cycle, stride k restricts to whole return-map steps.
    """
    z = np.asarray(z0, dtype=np.complex128).reshape(-1).copy()
    n = z.size
    dz = np.ones(n, dtype=np.complex128)
    status = np.zeros(n, dtype=np.uint8)
    iters = np.full(n, max_iter, dtype=np.int32)
    zf = z.copy()
    dzf = dz.copy()
    live = np.arange(n)

    esc2 = esc_r * esc_r
    prad2 = petal_rad * petal_rad

    # Points already escaped / already in the petal disk resolve at step 0.
    def _settle(step):
        nonlocal live
        w = z[live]
        m2 = w.real * w.real + w.imag * w.imag
        esc = (m2 > esc2) | ~np.isfinite(m2)
        if check_petal and step % petal_stride == 0:
            pv = w - petal_center
            pet = (pv.real * pv.real + pv.imag * pv.imag < prad2) & ~esc
        else:
            pet = np.zeros_like(esc)
        done = esc | pet
        if done.any():
            sel = live[done]
            status[sel] = np.where(esc[done], 1, 2).astype(np.uint8)
            iters[sel] = step
            zf[sel] = z[sel]
            dzf[sel] = dz[sel]
            live = live[~done]

    with np.errstate(over="ignore", invalid="ignore"):
        _settle(0)
        for step in range(1, max_iter + 1):
            if live.size == 0:
                break
            w = z[live]
            zd1 = _pow_even_arr(w, d - 2) * w if d > 2 else w
            dz[live] = sign * d * zd1 * dz[live]
            z[live] = sign * (zd1 * w + c)
            _settle(step)
    if live.size:
        zf[live] = z[live]
        dzf[live] = dz[live]
    shape = np.asarray(z0).shape
    return (status.reshape(shape), iters.reshape(shape),
            zf.reshape(shape), dzf.reshape(shape))


# ---------------------------------------------------------------------------
# attracting-side Fatou orbit limit
# ---------------------------------------------------------------------------


def _phi_orbit_scalar(z0, d, c, sign, k, alpha, a, A, gamma, qcoef, qdcoef,
                      delta, tol, n_max, esc_r, want_deriv):
    z = complex(z0)
    dz = 1.0 + 0j
    pc = alpha - delta
    n = 0
    # Phase A: whole-map steps in the plane until the orbit enters the petal
    # disk |z - (alpha-delta)| < delta.
    while abs(z - pc) >= delta:
        if n >= n_max:
            return 0j, 0j, 2, n
        for _ in range(k):
            if abs(z) > esc_r or z != z:
                return 0j, 0j, 1, n
            if want_deriv:
                zd1 = _pow_even_sc(z, d - 2) * z if d > 2 else z
                dz = sign * d * zd1 * dz
                z = sign * (zd1 * z + c)
            else:
                z = sign * (_pow_even_sc(z, d) + c)
        n += 1
    # Phase B: local coordinate zeta = z - alpha, stepped by the exact
    # shifted return polynomial; stop when the coordinate increments settle.
    zeta = z - alpha
    s_prev = None
    while n < n_max:
        q = _horner_sc(qcoef, zeta)
        if want_deriv:
            dz = (1.0 + _horner_sc(qdcoef, zeta)) * dz
        zeta = zeta + q
        n += 1
        w = -1.0 / (a * zeta)
        s_cur = w - A * np.log(w) - n
        if s_prev is not None and abs(s_cur - s_prev) < tol:
            # the truncation tail of s_n is gamma/w_n + O(log n / n^2);
            # adding the known leading term back sharpens the limit by
            # roughly four orders of magnitude at typical stopping indices
            phi = s_cur + gamma / w
            if want_deriv:
                dphi = (1.0 - A / w) * (1.0 / (a * zeta * zeta)) * dz
            else:
                dphi = 0j
            return complex(phi), complex(dphi), 0, n
        s_prev = s_cur
    return (complex(s_prev) if s_prev is not None else 0j), 0j, 3, n


def phi_orbit(z0, d, c, sign, k, alpha, a, A, gamma, qcoef, delta,
              tol, n_max, esc_r, want_deriv=False):
    """Attracting Fatou coordinate by the orbit-limit algorithm.

    phi(z) = lim_n [ w_n - A*log(w_n) ] - n  with  w_n = -1/(a*(F^n(z)-alpha)),
    stopping when successive terms differ by less than tol and correcting
    the remaining tail with the known expansion coefficient gamma.  Also
    returns d(phi)/dz when want_deriv is set.
    """
    qcoef = np.asarray(qcoef, dtype=np.complex128)
    qdcoef = qcoef[1:] * np.arange(1, len(qcoef))
    z0a = np.asarray(z0, dtype=np.complex128)
    shape = z0a.shape
    flat = z0a.reshape(-1)
    m = flat.size
    if m <= _SCALAR_CUTOFF:
        phi = np.zeros(m, dtype=np.complex128)
        dphi = np.zeros(m, dtype=np.complex128)
        status = np.zeros(m, dtype=np.uint8)
        nsteps = np.zeros(m, dtype=np.int64)
        for i in range(m):
            phi[i], dphi[i], status[i], nsteps[i] = _phi_orbit_scalar(
                flat[i], d, c, sign, k, alpha, a, A, gamma, qcoef, qdcoef,
                delta, tol, n_max, esc_r, want_deriv)
        return (phi.reshape(shape), dphi.reshape(shape),
                status.reshape(shape), nsteps.reshape(shape))

    # ----- vectorized path -----
    z = flat.copy()
    dz = np.ones(m, dtype=np.complex128)
    phi = np.zeros(m, dtype=np.complex128)
    dphi = np.zeros(m, dtype=np.complex128)
    status = np.full(m, 2, dtype=np.uint8)
    nsteps = np.zeros(m, dtype=np.int64)
    pc = alpha - delta

    live = np.arange(m)
    in_b = np.zeros(m, dtype=bool)        # reached phase B
    zeta = np.zeros(m, dtype=np.complex128)
    s_prev = np.zeros(m, dtype=np.complex128)
    has_prev = np.zeros(m, dtype=bool)

    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        # move already-in-petal points to phase B
        w0 = flat - pc
        b0 = np.abs(w0) < delta
        in_b[b0] = True
        zeta[b0] = flat[b0] - alpha
        for n in range(1, n_max + 1):
            if live.size == 0:
                break
            la = live[~in_b[live]]
            lb = live[in_b[live]]
            if la.size:
                w = z[la]
                dw = dz[la]
                bad = np.zeros(la.size, dtype=bool)
                for _ in range(k):
                    zd1 = _pow_even_arr(w, d - 2) * w if d > 2 else w
                    if want_deriv:
                        dw = sign * d * zd1 * dw
                    w = sign * (zd1 * w + c)
                    bad |= (np.abs(w) > esc_r) | ~np.isfinite(w.real)
                z[la] = w
                dz[la] = dw
                if bad.any():
                    sel = la[bad]
                    status[sel] = 1
                    nsteps[sel] = n
                    live = np.setdiff1d(live, sel, assume_unique=True)
                    la = la[~bad]
                ent = np.abs(z[la] - pc) < delta
                if ent.any():
                    sel = la[ent]
                    in_b[sel] = True
                    zeta[sel] = z[sel] - alpha
            if lb.size:
                zt = zeta[lb]
                q = _horner_arr(qcoef, zt)
                if want_deriv:
                    dz[lb] = (1.0 + _horner_arr(qcoef[1:] * np.arange(1, len(qcoef)), zt)) * dz[lb]
                zt = zt + q
                zeta[lb] = zt
                w = -1.0 / (a * zt)
                s_cur = w - A * np.log(w) - n
                done = has_prev[lb] & (np.abs(s_cur - s_prev[lb]) < tol)
                if done.any():
                    sel = lb[done]
                    phi[sel] = s_cur[done] + gamma / w[done]
                    if want_deriv:
                        wd = w[done]
                        dphi[sel] = (1.0 - A / wd) / (a * zeta[sel] ** 2) * dz[sel]
                    status[sel] = 0
                    nsteps[sel] = n
                    live = np.setdiff1d(live, sel, assume_unique=True)
                    keep = ~done
                    lb = lb[keep]
                    s_cur = s_cur[keep]
                s_prev[lb] = s_cur
                has_prev[lb] = True
        if live.size:
            status[live] = np.where(in_b[live], 3, 2).astype(np.uint8)
            nsteps[live] = n_max
            phi[live] = s_prev[live]
    return (phi.reshape(shape), dphi.reshape(shape),
            status.reshape(shape), nsteps.reshape(shape))


# ---------------------------------------------------------------------------
# repelling-side pushforward
# ---------------------------------------------------------------------------


def _psi_push_scalar(u0, mm, d, c, sign, k, alpha, a, qcoef, qdcoef, delta, esc_r,
                     want_deriv):
    u = complex(u0)
    zeta = -1.0 / (a * u)
    dzdu = 1.0 / (a * u * u) if want_deriv else 0j
    in_zeta = True
    z = 0j
    for _ in range(mm):
        if in_zeta and abs(zeta) > delta:
            z = alpha + zeta
            in_zeta = False
        if in_zeta:
            if want_deriv:
                dzdu = (1.0 + _horner_sc(qdcoef, zeta)) * dzdu
            zeta = zeta + _horner_sc(qcoef, zeta)
        else:
            for _ in range(k):
                if abs(z) > esc_r or z != z:
                    return 0j, 0j, 1
                if want_deriv:
                    zd1 = _pow_even_sc(z, d - 2) * z if d > 2 else z
                    dzdu = sign * d * zd1 * dzdu
                    z = sign * (zd1 * z + c)
                else:
                    z = sign * (_pow_even_sc(z, d) + c)
    if in_zeta:
        z = alpha + zeta
    return complex(z), complex(dzdu), 0


def psi_push(u0, m_count, d, c, sign, k, alpha, a, qcoef, delta, esc_r,
             want_deriv=False):
    """Push z = alpha - 1/(a*u0) forward by m_count whole-map steps.

    Starts in the local coordinate (exact shifted return polynomial) and
    switches to plane iteration once |zeta| > delta.  Returns (z, dz/du0,
    status).
    """
    qcoef = np.asarray(qcoef, dtype=np.complex128)
    qdcoef = qcoef[1:] * np.arange(1, len(qcoef))
    u0a = np.asarray(u0, dtype=np.complex128)
    shape = u0a.shape
    uf = u0a.reshape(-1)
    mc = np.broadcast_to(np.asarray(m_count, dtype=np.int64), uf.shape)
    n = uf.size
    if n <= _SCALAR_CUTOFF:
        z = np.zeros(n, dtype=np.complex128)
        dz = np.zeros(n, dtype=np.complex128)
        st = np.zeros(n, dtype=np.uint8)
        for i in range(n):
            z[i], dz[i], st[i] = _psi_push_scalar(
                uf[i], int(mc[i]), d, c, sign, k, alpha, a, qcoef, qdcoef,
                delta, esc_r, want_deriv)
        return z.reshape(shape), dz.reshape(shape), st.reshape(shape)

    z = np.zeros(n, dtype=np.complex128)
    zeta = -1.0 / (a * uf)
    dz = (1.0 / (a * uf * uf)) if want_deriv else np.zeros(n, dtype=np.complex128)
    in_zeta = np.ones(n, dtype=bool)
    status = np.zeros(n, dtype=np.uint8)
    live = np.arange(n)[mc > 0]
    done_at = mc.copy()
    steps = np.zeros(n, dtype=np.int64)
    with np.errstate(over="ignore", invalid="ignore"):
        while live.size:
            sw = live[in_zeta[live] & (np.abs(zeta[live]) > delta)]
            if sw.size:
                z[sw] = alpha + zeta[sw]
                in_zeta[sw] = False
            lz = live[in_zeta[live]]
            lp = live[~in_zeta[live]]
            if lz.size:
                zt = zeta[lz]
                if want_deriv:
                    dz[lz] = (1.0 + _horner_arr(qdcoef, zt)) * dz[lz]
                zeta[lz] = zt + _horner_arr(qcoef, zt)
            if lp.size:
                w = z[lp]
                dw = dz[lp]
                bad = np.zeros(lp.size, dtype=bool)
                for _ in range(k):
                    zd1 = _pow_even_arr(w, d - 2) * w if d > 2 else w
                    if want_deriv:
                        dw = sign * d * zd1 * dw
                    w = sign * (zd1 * w + c)
                    bad |= (np.abs(w) > esc_r) | ~np.isfinite(w.real)
                z[lp] = w
                dz[lp] = dw
                if bad.any():
                    sel = lp[bad]
                    status[sel] = 1
                    live = np.setdiff1d(live, sel, assume_unique=True)
            steps[live] += 1
            fin = live[steps[live] >= done_at[live]]
            if fin.size:
                live = np.setdiff1d(live, fin, assume_unique=True)
    still = in_zeta & (status == 0)
    z[still] = alpha + zeta[still]
    return z.reshape(shape), dz.reshape(shape), status.reshape(shape)
