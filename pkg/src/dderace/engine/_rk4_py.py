"""Pure-Python twin of the compiled RK4 kernel.

Same arithmetic in the same order, so both backends agree to rounding.
"""
from __future__ import annotations

import math

import numpy as np


def _rhs(out, s, x, xd, Ad, Bc, cubic, env, p):
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
            out[i] += env[ie, i] * math.tanh(xd[(i + 1) % p])


def _delayed(out, s, two_n, hist, xs, ds, h, p):
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


def rk4_delayed(hist, Ad, Bc, cubic, env, N, M, h, thr):
    hist = np.asarray(hist, dtype=float)
    p = hist.shape[1]
    two_n = 2 * N
    xs = np.zeros((M + 1, p))
    ds = np.zeros((M + 1, p))
    # plain lists are much faster than numpy scalars in this loop
    Ad_l = np.asarray(Ad, dtype=float)
    Bc_l = np.asarray(Bc, dtype=float)
    cub = np.asarray(cubic, dtype=float)
    env_l = np.asarray(env, dtype=float)
    Ad_t = _Table3(Ad_l)
    Bc_t = _Table3(Bc_l)
    env_t = _Table2(env_l)
    hist_t = _Table2(hist)
    xs_t = _Rows(p, M + 1)
    ds_t = _Rows(p, M + 1)
    cub_t = _Vec(cub)

    k1 = [0.0] * p
    k2 = [0.0] * p
    k3 = [0.0] * p
    k4 = [0.0] * p
    xd = [0.0] * p
    xtmp = [0.0] * p
    x = [float(v) for v in hist[two_n]]
    xs_t[0] = list(x)
    n_done = M
    for n in range(M):
        s = 2 * n
        _delayed(xd, s, two_n, hist_t, xs_t, ds_t, h, p)
        _rhs(k1, s, x, xd, Ad_t, Bc_t, cub_t, env_t, p)
        ds_t[n] = list(k1)
        _delayed(xd, s + 1, two_n, hist_t, xs_t, ds_t, h, p)
        for i in range(p):
            xtmp[i] = x[i] + 0.5 * h * k1[i]
        _rhs(k2, s + 1, xtmp, xd, Ad_t, Bc_t, cub_t, env_t, p)
        for i in range(p):
            xtmp[i] = x[i] + 0.5 * h * k2[i]
        _rhs(k3, s + 1, xtmp, xd, Ad_t, Bc_t, cub_t, env_t, p)
        _delayed(xd, s + 2, two_n, hist_t, xs_t, ds_t, h, p)
        for i in range(p):
            xtmp[i] = x[i] + h * k3[i]
        _rhs(k4, s + 2, xtmp, xd, Ad_t, Bc_t, cub_t, env_t, p)
        bad = False
        for i in range(p):
            x[i] = x[i] + h * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]) / 6.0
            if not (abs(x[i]) <= thr):
                bad = True
        if bad:
            n_done = n
            break
        xs_t[n + 1] = list(x)
    if n_done == M:
        _delayed(xd, 2 * M, two_n, hist_t, xs_t, ds_t, h, p)
        _rhs(k1, 2 * M, x, xd, Ad_t, Bc_t, cub_t, env_t, p)
        ds_t[M] = list(k1)
    xs[: n_done + 1] = xs_t.rows[: n_done + 1]
    ds[: n_done + 1] = ds_t.rows[: n_done + 1]
    return xs, ds, n_done


class _Vec:
    __slots__ = ("data", "shape")

    def __init__(self, arr):
        self.data = arr.tolist()
        self.shape = arr.shape

    def __getitem__(self, i):
        return self.data[i]


class _Table2:
    __slots__ = ("data", "shape")

    def __init__(self, arr):
        self.data = arr.tolist()
        self.shape = arr.shape

    def __getitem__(self, key):
        i, j = key
        return self.data[i][j]


class _Table3:
    __slots__ = ("data", "shape")

    def __init__(self, arr):
        self.data = arr.tolist()
        self.shape = arr.shape

    def __getitem__(self, key):
        s, i, j = key
        return self.data[s][i][j]


class _Rows:
    __slots__ = ("rows",)

    def __init__(self, p, n):
        self.rows = [[0.0] * p for _ in range(n)]

    def __setitem__(self, j, row):
        self.rows[j] = row

    def __getitem__(self, key):
        j, i = key
        return self.rows[j][i]
