# cython: language_level=3
"""Compiled inner loops. Semantics mirror ``_pykernels`` exactly."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, sqrt, isfinite

cnp.import_array()


cdef inline void _msd_rhs(double x1, double x2, double force, double m, double s,
                          double c, double l, double a, double* d1, double* d2) noexcept nogil:
    cdef double r = sqrt(x1 * x1 + a * a)
    d1[0] = x2
    d2[0] = (force - s * (x1 / r) * (r - l) - c * x2) / m


def msd_rk4(double[::1] x0, double[::1] u, double dt, double m, double s,
            double c, double l, double a):
    cdef Py_ssize_t n = u.shape[0]
    cdef Py_ssize_t k
    cdef long bad = -1
    cdef double x1 = x0[0], x2 = x0[1], f, h2 = 0.5 * dt, h6 = dt / 6.0
    cdef double k11, k12, k21, k22, k31, k32, k41, k42
    out = np.empty((n + 1, 2), dtype=np.float64)
    cdef double[:, ::1] tr = out
    tr[0, 0] = x1
    tr[0, 1] = x2
    with nogil:
        for k in range(n):
            f = u[k]
            _msd_rhs(x1, x2, f, m, s, c, l, a, &k11, &k12)
            _msd_rhs(x1 + h2 * k11, x2 + h2 * k12, f, m, s, c, l, a, &k21, &k22)
            _msd_rhs(x1 + h2 * k21, x2 + h2 * k22, f, m, s, c, l, a, &k31, &k32)
            _msd_rhs(x1 + dt * k31, x2 + dt * k32, f, m, s, c, l, a, &k41, &k42)
            x1 = x1 + h6 * (k11 + 2.0 * k21 + 2.0 * k31 + k41)
            x2 = x2 + h6 * (k12 + 2.0 * k22 + 2.0 * k32 + k42)
            if not (isfinite(x1) and isfinite(x2)):
                bad = k
                break
            tr[k + 1, 0] = x1
            tr[k + 1, 1] = x2
    return out, bad


def affine_recursion(double[:, ::1] phi, double[::1] gam, double[::1] x0, double[::1] u):
    cdef Py_ssize_t n = u.shape[0], nx = x0.shape[0]
    cdef Py_ssize_t k, i, j
    cdef long bad = -1
    cdef double acc
    out = np.empty((n + 1, nx), dtype=np.float64)
    cdef double[:, ::1] tr = out
    for i in range(nx):
        tr[0, i] = x0[i]
    with nogil:
        for k in range(n):
            for i in range(nx):
                acc = gam[i] * u[k]
                for j in range(nx):
                    acc = acc + phi[i, j] * tr[k, j]
                tr[k + 1, i] = acc
            for i in range(nx):
                if not isfinite(tr[k + 1, i]):
                    bad = k
            if bad >= 0:
                break
    return out, bad


def sqdist_lower(double[:, ::1] z):
    """Fortran-ordered matrix with squared distances below the diagonal, zeros elsewhere."""
    cdef Py_ssize_t n = z.shape[0], d = z.shape[1]
    cdef Py_ssize_t i, j, q
    cdef double acc, t
    out = np.zeros((n, n), dtype=np.float64, order="F")
    cdef double[::1, :] kk = out
    with nogil:
        for j in range(n):
            for i in range(j + 1, n):
                acc = 0.0
                for q in range(d):
                    t = z[i, q] - z[j, q]
                    acc = acc + t * t
                kk[i, j] = acc
    return out


def se_cross(double[:, ::1] za, double[:, ::1] z, double sf2):
    cdef Py_ssize_t m = za.shape[0], n = z.shape[0], d = z.shape[1]
    cdef Py_ssize_t i, j, q
    cdef double acc, t
    out = np.empty((m, n), dtype=np.float64)
    cdef double[:, ::1] kk = out
    with nogil:
        for i in range(m):
            for j in range(n):
                acc = 0.0
                for q in range(d):
                    t = za[i, q] - z[j, q]
                    acc = acc + t * t
                kk[i, j] = sf2 * exp(-0.5 * acc)
    return out


cdef inline double _sigmoid(double z) noexcept nogil:
    cdef double e
    if z >= 0.0:
        return 1.0 / (1.0 + exp(-z))
    e = exp(z)
    return e / (1.0 + e)


def noe_run(double[::1] eta, int nh, int my, int mu, double[::1] u,
            double[::1] y, bint free_run, bint jac):
    """Network outputs over ``u``.

    ``free_run`` feeds predictions back into the regressor; otherwise the
    regressor is built from ``y``. In free-run mode only ``y[:n0]`` is read.
    Returns ``(yhat, S, bad)``; ``S`` is None unless ``jac``.
    """
    cdef Py_ssize_t n = u.shape[0]
    cdef int nx = my + mu
    cdef int n0 = my if my > mu else mu
    cdef Py_ssize_t p_len = eta.shape[0]
    cdef Py_ssize_t k, h, j, i, p, src
    cdef long bad = -1
    cdef double zz, out_k, g, wds
    cdef Py_ssize_t ob = nh * nx, ow = nh * nx + nh, obx = nh * nx + 2 * nh

    yhat_arr = np.zeros(n, dtype=np.float64)
    cdef double[::1] yh = yhat_arr
    xr_arr = np.zeros(nx, dtype=np.float64)
    cdef double[::1] xr = xr_arr
    sg_arr = np.zeros(nh, dtype=np.float64)
    cdef double[::1] sg = sg_arr
    cdef double[:, ::1] sm
    if jac:
        s_arr = np.zeros((n, p_len), dtype=np.float64)
        sm = s_arr
    else:
        s_arr = None

    for k in range(min(n0, n)):
        yh[k] = y[k]

    with nogil:
        for k in range(n0, n):
            for i in range(my):
                if free_run:
                    xr[i] = yh[k - 1 - i]
                else:
                    xr[i] = y[k - 1 - i]
            for i in range(mu):
                xr[my + i] = u[k - 1 - i]
            out_k = eta[obx]
            for h in range(nh):
                zz = eta[ob + h]
                for j in range(nx):
                    zz = zz + eta[h * nx + j] * xr[j]
                sg[h] = _sigmoid(zz)
                out_k = out_k + eta[ow + h] * sg[h]
            if not isfinite(out_k):
                bad = k
                break
            yh[k] = out_k
            if jac:
                for h in range(nh):
                    wds = eta[ow + h] * sg[h] * (1.0 - sg[h])
                    for j in range(nx):
                        sm[k, h * nx + j] = wds * xr[j]
                    sm[k, ob + h] = wds
                    sm[k, ow + h] = sg[h]
                sm[k, obx] = 1.0
                if free_run:
                    for i in range(my):
                        g = 0.0
                        for h in range(nh):
                            g = g + eta[ow + h] * sg[h] * (1.0 - sg[h]) * eta[h * nx + i]
                        src = k - 1 - i
                        if src >= n0:
                            for p in range(p_len):
                                sm[k, p] = sm[k, p] + g * sm[src, p]
    return yhat_arr, s_arr, bad
