# cython: boundscheck=False, wraparound=False, cdivision=True
# cython: language_level=3
"""Compiled kernels: escape iteration, petal orbits, pushforwards.

Mirrors ``_np`` exactly — same signatures, same status codes, same
per-point arithmetic order as the scalar reference paths there.  Points
are processed one at a time in C; there is no index compaction because
nothing is vectorized.
"""

import numpy as np

cimport cython

cdef extern from "complex.h" nogil:
    double cabs(double complex)
    double complex clog(double complex)
    double creal(double complex)
    double cimag(double complex)


cdef inline double complex _pow_even(double complex z, int d) nogil:
    """z**d for even d by repeated squaring (matches _pow_even_sc)."""
    cdef double complex w = z * z
    cdef double complex out = 0
    cdef bint have = False
    cdef int e = d >> 1
    while e:
        if e & 1:
            if have:
                out = out * w
            else:
                out = w
                have = True
        e >>= 1
        if e:
            w = w * w
    return out


cdef inline double complex _horner(const double complex[::1] coef,
                                   double complex z) nogil:
    cdef Py_ssize_t i = coef.shape[0] - 1
    cdef double complex out = coef[i]
    i -= 1
    while i >= 0:
        out = out * z + coef[i]
        i -= 1
    return out


cdef inline bint _bad(double complex z, double esc_r) nogil:
    return cabs(z) > esc_r or z != z


# ---------------------------------------------------------------------------
# iterate / escape-time with derivative tracking
# ---------------------------------------------------------------------------


def iterate_points(z0, int d, double c, double sign, int m, double esc_r):
    """m-fold sign*(z**d+c); escaped points are frozen at their first big value."""
    z_arr = np.array(z0, dtype=np.complex128, copy=True)
    cdef double complex[::1] z = z_arr.reshape(-1)
    cdef Py_ssize_t i, n = z.shape[0]
    cdef int step
    cdef double complex w
    with nogil:
        for i in range(n):
            w = z[i]
            for step in range(m):
                w = sign * (_pow_even(w, d) + c)
                z[i] = w
                if not (w == w and cabs(w) <= esc_r):
                    break
    return z_arr


def escape_dem(z0, int d, double c, double sign, int max_iter, double esc_r,
               petal_center=0j, double petal_rad=0.0, bint check_petal=False,
               int petal_stride=1):
    """Escape-time loop with derivative tracking (for distance estimates).

    Returns (status uint8, iters int32, z_final, dz_final); see the numpy
    backend for the full contract.  The petal test runs only at steps
    divisible by petal_stride.
    """
    z_in = np.asarray(z0, dtype=np.complex128)
    shape = z_in.shape
    z_arr = z_in.reshape(-1).copy()
    cdef Py_ssize_t n = z_arr.size
    status_arr = np.zeros(n, dtype=np.uint8)
    iters_arr = np.full(n, max_iter, dtype=np.int32)
    zf_arr = z_arr.copy()
    dzf_arr = np.ones(n, dtype=np.complex128)

    cdef double complex[::1] zv = z_arr
    cdef unsigned char[::1] st = status_arr
    cdef int[::1] it = iters_arr
    cdef double complex[::1] zf = zf_arr
    cdef double complex[::1] dzf = dzf_arr
    cdef double complex pc = petal_center
    cdef double esc2 = esc_r * esc_r
    cdef double prad2 = petal_rad * petal_rad
    cdef Py_ssize_t i
    cdef int step
    cdef double complex w, dw, zd1, pv
    cdef double m2

    with nogil:
        for i in range(n):
            w = zv[i]
            dw = 1.0 + 0j
            for step in range(0, max_iter + 1):
                m2 = creal(w) * creal(w) + cimag(w) * cimag(w)
                if m2 > esc2 or m2 != m2:
                    st[i] = 1
                    it[i] = step
                    zf[i] = w
                    dzf[i] = dw
                    break
                if check_petal and step % petal_stride == 0:
                    pv = w - pc
                    if creal(pv) * creal(pv) + cimag(pv) * cimag(pv) < prad2:
                        st[i] = 2
                        it[i] = step
                        zf[i] = w
                        dzf[i] = dw
                        break
                if step == max_iter:
                    zf[i] = w
                    dzf[i] = dw
                    break
                if d > 2:
                    zd1 = _pow_even(w, d - 2) * w
                else:
                    zd1 = w
                dw = sign * d * zd1 * dw
                w = sign * (zd1 * w + c)
    return (status_arr.reshape(shape), iters_arr.reshape(shape),
            zf_arr.reshape(shape), dzf_arr.reshape(shape))


# ---------------------------------------------------------------------------
# attracting-side Fatou orbit limit
# ---------------------------------------------------------------------------


def phi_orbit(z0, int d, double c, double sign, int k, double alpha,
              double a, double A, gamma, qcoef, double delta,
              double tol, long n_max, double esc_r, bint want_deriv=False):
    """Attracting Fatou coordinate by the orbit-limit algorithm.

    Same contract as the numpy backend: returns (phi, dphi, status, steps)
    with phi(z) = lim_n [w_n - A*log(w_n)] - n, tail-corrected by gamma.
    """
    qc = np.ascontiguousarray(qcoef, dtype=np.complex128)
    qd = np.ascontiguousarray(qc[1:] * np.arange(1, len(qc)))
    z_in = np.asarray(z0, dtype=np.complex128)
    shape = z_in.shape
    flat = z_in.reshape(-1)
    cdef Py_ssize_t m = flat.size
    phi_arr = np.zeros(m, dtype=np.complex128)
    dphi_arr = np.zeros(m, dtype=np.complex128)
    status_arr = np.zeros(m, dtype=np.uint8)
    nsteps_arr = np.zeros(m, dtype=np.int64)

    cdef const double complex[::1] z0v = flat
    cdef const double complex[::1] qcv = qc
    cdef const double complex[::1] qdv = qd
    cdef double complex[::1] phv = phi_arr
    cdef double complex[::1] dpv = dphi_arr
    cdef unsigned char[::1] stv = status_arr
    cdef long[::1] nsv = nsteps_arr
    cdef double complex gam = gamma
    cdef double complex pc = alpha - delta
    cdef Py_ssize_t i
    cdef long n
    cdef int j
    cdef bint stopped, has_prev
    cdef double complex z, dz, zd1, zeta, q, w, s_cur, s_prev, ph

    with nogil:
        for i in range(m):
            z = z0v[i]
            dz = 1.0 + 0j
            n = 0
            stopped = False
            # Phase A: whole-map steps until the orbit enters the petal disk.
            while cabs(z - pc) >= delta:
                if n >= n_max:
                    stv[i] = 2
                    nsv[i] = n
                    stopped = True
                    break
                for j in range(k):
                    if cabs(z) > esc_r or z != z:
                        stv[i] = 1
                        nsv[i] = n
                        stopped = True
                        break
                    if want_deriv:
                        if d > 2:
                            zd1 = _pow_even(z, d - 2) * z
                        else:
                            zd1 = z
                        dz = sign * d * zd1 * dz
                        z = sign * (zd1 * z + c)
                    else:
                        z = sign * (_pow_even(z, d) + c)
                if stopped:
                    break
                n += 1
            if stopped:
                continue
            # Phase B: local-coordinate steps until the increments settle.
            zeta = z - alpha
            s_prev = 0
            has_prev = False
            while n < n_max:
                q = _horner(qcv, zeta)
                if want_deriv:
                    dz = (1.0 + _horner(qdv, zeta)) * dz
                zeta = zeta + q
                n += 1
                w = -1.0 / (a * zeta)
                s_cur = w - A * clog(w) - n
                if has_prev and cabs(s_cur - s_prev) < tol:
                    ph = s_cur + gam / w
                    phv[i] = ph
                    if want_deriv:
                        dpv[i] = (1.0 - A / w) * (1.0 / (a * zeta * zeta)) * dz
                    stv[i] = 0
                    nsv[i] = n
                    stopped = True
                    break
                s_prev = s_cur
                has_prev = True
            if not stopped:
                if has_prev:
                    phv[i] = s_prev
                stv[i] = 3
                nsv[i] = n
    return (phi_arr.reshape(shape), dphi_arr.reshape(shape),
            status_arr.reshape(shape), nsteps_arr.reshape(shape))


# ---------------------------------------------------------------------------
# repelling-side pushforward
# ---------------------------------------------------------------------------


def psi_push(u0, m_count, int d, double c, double sign, int k, double alpha,
             double a, qcoef, double delta, double esc_r,
             bint want_deriv=False):
    """Push z = alpha - 1/(a*u0) forward by m_count whole-map steps.

    Same contract as the numpy backend: returns (z, dz/du0, status).
    """
    qc = np.ascontiguousarray(qcoef, dtype=np.complex128)
    qd = np.ascontiguousarray(qc[1:] * np.arange(1, len(qc)))
    u_in = np.asarray(u0, dtype=np.complex128)
    shape = u_in.shape
    uf = u_in.reshape(-1)
    mc_arr = np.ascontiguousarray(
        np.broadcast_to(np.asarray(m_count, dtype=np.int64), uf.shape))
    cdef Py_ssize_t n = uf.size
    z_arr = np.zeros(n, dtype=np.complex128)
    dz_arr = np.zeros(n, dtype=np.complex128)
    status_arr = np.zeros(n, dtype=np.uint8)

    cdef const double complex[::1] uv = uf
    cdef const long[::1] mcv = mc_arr
    cdef const double complex[::1] qcv = qc
    cdef const double complex[::1] qdv = qd
    cdef double complex[::1] zv = z_arr
    cdef double complex[::1] dzv = dz_arr
    cdef unsigned char[::1] stv = status_arr
    cdef Py_ssize_t i
    cdef long s, mm
    cdef int j
    cdef bint in_zeta, escaped
    cdef double complex u, z, zeta, dzdu, zd1

    with nogil:
        for i in range(n):
            u = uv[i]
            mm = mcv[i]
            zeta = -1.0 / (a * u)
            if want_deriv:
                dzdu = 1.0 / (a * u * u)
            else:
                dzdu = 0
            in_zeta = True
            z = 0
            escaped = False
            for s in range(mm):
                if in_zeta and cabs(zeta) > delta:
                    z = alpha + zeta
                    in_zeta = False
                if in_zeta:
                    if want_deriv:
                        dzdu = (1.0 + _horner(qdv, zeta)) * dzdu
                    zeta = zeta + _horner(qcv, zeta)
                else:
                    for j in range(k):
                        if cabs(z) > esc_r or z != z:
                            stv[i] = 1
                            escaped = True
                            break
                        if want_deriv:
                            if d > 2:
                                zd1 = _pow_even(z, d - 2) * z
                            else:
                                zd1 = z
                            dzdu = sign * d * zd1 * dzdu
                            z = sign * (zd1 * z + c)
                        else:
                            z = sign * (_pow_even(z, d) + c)
                    if escaped:
                        break
            if escaped:
                continue
            if in_zeta:
                z = alpha + zeta
            zv[i] = z
            dzv[i] = dzdu
    return z_arr.reshape(shape), dz_arr.reshape(shape), status_arr.reshape(shape)
