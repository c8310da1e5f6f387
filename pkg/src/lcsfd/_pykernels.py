"""Pure-Python/numpy versions of the compiled kernels in ``_ckernels.pyx``.

Each function has the same signature and return convention as its compiled
counterpart, so either module can back :mod:`lcsfd.kernels`.
"""

import math

import numpy as np


def _msd_rhs(x1, x2, force, m, s, c, l, a):
    r = math.sqrt(x1 * x1 + a * a)
    return x2, (force - s * (x1 / r) * (r - l) - c * x2) / m


def msd_rk4(x0, u, dt, m, s, c, l, a):
    n = len(u)
    out = np.empty((n + 1, 2))
    x1, x2 = float(x0[0]), float(x0[1])
    out[0] = x1, x2
    h2, h6 = 0.5 * dt, dt / 6.0
    for k in range(n):
        f = float(u[k])
        k11, k12 = _msd_rhs(x1, x2, f, m, s, c, l, a)
        k21, k22 = _msd_rhs(x1 + h2 * k11, x2 + h2 * k12, f, m, s, c, l, a)
        k31, k32 = _msd_rhs(x1 + h2 * k21, x2 + h2 * k22, f, m, s, c, l, a)
        k41, k42 = _msd_rhs(x1 + dt * k31, x2 + dt * k32, f, m, s, c, l, a)
        x1 = x1 + h6 * (k11 + 2.0 * k21 + 2.0 * k31 + k41)
        x2 = x2 + h6 * (k12 + 2.0 * k22 + 2.0 * k32 + k42)
        if not (math.isfinite(x1) and math.isfinite(x2)):
            return out, k
        out[k + 1] = x1, x2
    return out, -1


def affine_recursion(phi, gam, x0, u):
    n, nx = len(u), len(x0)
    out = np.empty((n + 1, nx))
    out[0] = x0
    for k in range(n):
        out[k + 1] = phi @ out[k] + gam * u[k]
        if not np.all(np.isfinite(out[k + 1])):
            return out, k
    return out, -1


def sqdist_lower(z):
    sq = np.einsum("ij,ij->i", z, z)
    d2 = np.maximum(sq[:, None] + sq[None, :] - 2.0 * (z @ z.T), 0.0)
    return np.asfortranarray(np.tril(d2, -1))


def se_cross(za, z, sf2):
    d2 = ((za[:, None, :] - z[None, :, :]) ** 2).sum(axis=-1)
    return sf2 * np.exp(-0.5 * d2)


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def noe_run(eta, nh, my, mu, u, y, free_run, jac):
    eta = np.asarray(eta, dtype=float)
    n = len(u)
    nx = my + mu
    n0 = max(my, mu)
    p_len = len(eta)
    w = eta[: nh * nx].reshape(nh, nx)
    b = eta[nh * nx : nh * nx + nh]
    wx = eta[nh * nx + nh : nh * nx + 2 * nh]
    bx = eta[nh * nx + 2 * nh]
    yh = np.zeros(n)
    yh[: min(n0, n)] = y[: min(n0, n)]
    s_arr = np.zeros((n, p_len)) if jac else None
    src_y = yh if free_run else y
    for k in range(n0, n):
        xr = np.concatenate((src_y[k - my : k][::-1], u[k - mu : k][::-1]))
        sg = _sigmoid(w @ xr + b)
        out_k = float(wx @ sg + bx)
        if not math.isfinite(out_k):
            return yh, s_arr, k
        yh[k] = out_k
        if jac:
            wds = wx * sg * (1.0 - sg)
            row = s_arr[k]
            row[: nh * nx] = np.outer(wds, xr).ravel()
            row[nh * nx : nh * nx + nh] = wds
            row[nh * nx + nh : nh * nx + 2 * nh] = sg
            row[p_len - 1] = 1.0
            if free_run:
                g = wds @ w[:, :my]
                for i in range(my):
                    src = k - 1 - i
                    if src >= n0:
                        row += g[i] * s_arr[src]
    return yh, s_arr, -1
