# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled RK4 method-of-steps kernel for delayed quasi-linear systems."""
import numpy as np
cimport numpy as cnp
from libc.math cimport tanh, fabs

cnp.import_array()


cdef inline void _rhs(double[::1] out, Py_ssize_t s, double[::1] x, double[::1] xd,
                      const double[:, :, ::1] Ad, const double[:, :, ::1] Bc,
                      const double[::1] cubic, const double[:, ::1] env,
                      Py_ssize_t p) noexcept nogil:
    cdef Py_ssize_t i, j, ia, ib, ie
    cdef double acc, u, v, u2, v2
    ia = s if Ad.shape[0] > 1 else 0
    for i in range(p):
        acc = 0.0
        for j in range(p):
            acc += Ad[ia, i, j] * xd[j]
        out[i] = acc
    if Bc.shape[0] > 0:
        ib = s if Bc.shape[0] > 1 else 0
        for i in range(p):
            acc = 0.0
            for j in range(p):
                acc += Bc[ib, i, j] * x[j]
            out[i] += acc
    if cubic.shape[0] > 0:
        u = xd[0]
        v = xd[1]
        u2 = u * u
        v2 = v * v
        out[0] += (cubic[0] * u2 * u + 3.0 * cubic[1] * u2 * v
                   + 3.0 * cubic[2] * u * v2 + cubic[3] * v2 * v) / 6.0
        out[1] += (cubic[4] * u2 * u + 3.0 * cubic[5] * u2 * v
                   + 3.0 * cubic[6] * u * v2 + cubic[7] * v2 * v) / 6.0
    if env.shape[0] > 0:
        ie = s if env.shape[0] > 1 else 0
        for i in range(p):
            out[i] += env[ie, i] * tanh(xd[(i + 1) % p])


cdef inline void _delayed(double[::1] out, Py_ssize_t s, Py_ssize_t two_n,
                          const double[:, ::1] hist, double[:, ::1] xs,
                          double[:, ::1] ds, double h, Py_ssize_t p) noexcept nogil:
    cdef Py_ssize_t i, j, r
    if s <= two_n:
        for i in range(p):
            out[i] = hist[s, i]
        return
    r = s - two_n
    j = r // 2
    if r % 2 == 0:
        for i in range(p):
            out[i] = xs[j, i]
    else:
        for i in range(p):
            out[i] = 0.5 * (xs[j, i] + xs[j + 1, i]) + h * (ds[j, i] - ds[j + 1, i]) / 8.0


def rk4_delayed(hist_in, Ad_in, Bc_in, cubic_in, env_in, Py_ssize_t N, Py_ssize_t M,
                double h, double thr):
    cdef const double[:, ::1] hist = np.ascontiguousarray(hist_in, dtype=np.float64)
    cdef const double[:, :, ::1] Ad = np.ascontiguousarray(Ad_in, dtype=np.float64)
    cdef const double[:, :, ::1] Bc = np.ascontiguousarray(Bc_in, dtype=np.float64)
    cdef const double[::1] cubic = np.ascontiguousarray(cubic_in, dtype=np.float64)
    cdef const double[:, ::1] env = np.ascontiguousarray(env_in, dtype=np.float64)
    cdef Py_ssize_t p = hist.shape[1]
    cdef Py_ssize_t two_n = 2 * N
    xs_arr = np.zeros((M + 1, p))
    ds_arr = np.zeros((M + 1, p))
    cdef double[:, ::1] xs = xs_arr
    cdef double[:, ::1] ds = ds_arr
    cdef double[::1] k1 = np.zeros(p)
    cdef double[::1] k2 = np.zeros(p)
    cdef double[::1] k3 = np.zeros(p)
    cdef double[::1] k4 = np.zeros(p)
    cdef double[::1] xd = np.zeros(p)
    cdef double[::1] xtmp = np.zeros(p)
    cdef double[::1] x = np.zeros(p)
    cdef Py_ssize_t n, i, s
    cdef Py_ssize_t n_done = M
    cdef bint bad
    with nogil:
        for i in range(p):
            x[i] = hist[two_n, i]
            xs[0, i] = x[i]
        for n in range(M):
            s = 2 * n
            _delayed(xd, s, two_n, hist, xs, ds, h, p)
            _rhs(k1, s, x, xd, Ad, Bc, cubic, env, p)
            for i in range(p):
                ds[n, i] = k1[i]
            _delayed(xd, s + 1, two_n, hist, xs, ds, h, p)
            for i in range(p):
                xtmp[i] = x[i] + 0.5 * h * k1[i]
            _rhs(k2, s + 1, xtmp, xd, Ad, Bc, cubic, env, p)
            for i in range(p):
                xtmp[i] = x[i] + 0.5 * h * k2[i]
            _rhs(k3, s + 1, xtmp, xd, Ad, Bc, cubic, env, p)
            _delayed(xd, s + 2, two_n, hist, xs, ds, h, p)
            for i in range(p):
                xtmp[i] = x[i] + h * k3[i]
            _rhs(k4, s + 2, xtmp, xd, Ad, Bc, cubic, env, p)
            bad = False
            for i in range(p):
                x[i] = x[i] + h * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]) / 6.0
                if not (fabs(x[i]) <= thr):
                    bad = True
            if bad:
                n_done = n
                break
            for i in range(p):
                xs[n + 1, i] = x[i]
        if n_done == M:
            _delayed(xd, 2 * M, two_n, hist, xs, ds, h, p)
            _rhs(k1, 2 * M, x, xd, Ad, Bc, cubic, env, p)
            for i in range(p):
                ds[M, i] = k1[i]
    return xs_arr, ds_arr, n_done
