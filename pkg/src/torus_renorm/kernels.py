"""Hot loops with a compiled path and a pure-numpy fallback.

Every kernel exists twice: ``<name>_nb`` (numba, loop form) and
``<name>_np`` (vectorized numpy).  The public name is bound to one of them
according to :data:`torus_renorm._accel.USE_NUMBA`.  Both variants visit
candidates in the same lexicographic order and use strict comparisons, so
minima and maxima (and their argmins) agree exactly.
"""
import math

import numpy as np

from ._accel import USE_NUMBA, jit, prange

TWO_PI = 2.0 * math.pi
_CHUNK = 4096


# --------------------------------------------------------------------------
# Fourier evaluation at scattered points
# --------------------------------------------------------------------------

@jit()
def _axis_ranges(ks):
    d = ks.shape[1]
    kmin = np.zeros(d, dtype=np.int64)
    kspan = np.ones(d, dtype=np.int64)
    width = 1
    for j in range(d):
        lo = 0
        hi = 0
        for i in range(ks.shape[0]):
            lo = min(lo, ks[i, j])
            hi = max(hi, ks[i, j])
        kmin[j] = lo
        kspan[j] = hi - lo + 1
        width = max(width, kspan[j])
    return kmin, kspan, width


@jit()
def _power_tables(x, kmin, kspan, zp):
    # zp[j, m - kmin_j] = exp(2 pi i m x_j); negative powers by conjugation since |z| = 1
    d = x.shape[0]
    for j in range(d):
        ang = TWO_PI * (x[j] - math.floor(x[j]))
        z = complex(math.cos(ang), math.sin(ang))
        off = -kmin[j]
        zp[j, off] = 1.0
        for m in range(1, kspan[j] - off):
            zp[j, off + m] = zp[j, off + m - 1] * z
        zc = z.conjugate()
        for m in range(1, off + 1):
            zp[j, off - m] = zp[j, off - m + 1] * zc


@jit(parallel=True)
def eval_modes_nb(ks, coef, pts):
    n_pts, d = pts.shape
    m, c = coef.shape
    kmin, kspan, width = _axis_ranges(ks)
    out = np.zeros((n_pts, c), dtype=np.complex128)
    for p in prange(n_pts):
        zp = np.empty((d, width), dtype=np.complex128)
        _power_tables(pts[p], kmin, kspan, zp)
        for i in range(m):
            e = zp[0, ks[i, 0] - kmin[0]]
            for j in range(1, d):
                e *= zp[j, ks[i, j] - kmin[j]]
            for a in range(c):
                out[p, a] += coef[i, a] * e
    return out


def eval_modes_np(ks, coef, pts):
    n_pts = pts.shape[0]
    out = np.empty((n_pts, coef.shape[1]), dtype=np.complex128)
    ksf = ks.astype(np.float64)
    for start in range(0, n_pts, _CHUNK):
        block = pts[start:start + _CHUNK]
        phase = TWO_PI * (block @ ksf.T)
        out[start:start + _CHUNK] = np.exp(1j * phase) @ coef
    return out


def eval_modes(ks, coef, pts):
    """Evaluate ``sum_k coef_k exp(2 pi i k.x)`` at each row of ``pts``.

    Parameters
    ----------
    ks : ndarray of int64, shape (m, d)
    coef : ndarray of complex128, shape (m, c)
    pts : ndarray of float64, shape (p, d)

    Returns
    -------
    ndarray of complex128, shape (p, c)
    """
    ks = np.ascontiguousarray(ks, dtype=np.int64)
    coef = np.ascontiguousarray(coef, dtype=np.complex128)
    # reduce mod 1 so phases stay small for points far out on the cover
    pts = np.ascontiguousarray(np.mod(pts, 1.0), dtype=np.float64)
    if ks.shape[0] == 0:
        return np.zeros((pts.shape[0], coef.shape[1]), dtype=np.complex128)
    if USE_NUMBA:
        return eval_modes_nb(ks, coef, pts)
    return eval_modes_np(ks, coef, pts)


# --------------------------------------------------------------------------
# Lattice enumeration
# --------------------------------------------------------------------------

@jit()
def min_l1_box_nb(mat, radius):
    d = mat.shape[0]
    side = 2 * radius + 1
    total = side ** d
    best = np.inf
    arg = np.zeros(d, dtype=np.int64)
    k = np.empty(d, dtype=np.int64)
    for idx in range(total):
        rem = idx
        nonzero = False
        for j in range(d - 1, -1, -1):
            k[j] = rem % side - radius
            rem //= side
            if k[j] != 0:
                nonzero = True
        if not nonzero:
            continue
        s = 0.0
        for col in range(d):
            v = 0.0
            for row in range(d):
                v += k[row] * mat[row, col]
            s += abs(v)
        if s < best:
            best = s
            for j in range(d):
                arg[j] = k[j]
    return best, arg


def _box_chunks(d, radius):
    side = 2 * radius + 1
    total = side ** d
    step = max(1, _CHUNK * 16)
    for start in range(0, total, step):
        idx = np.arange(start, min(total, start + step), dtype=np.int64)
        k = np.empty((idx.size, d), dtype=np.int64)
        rem = idx.copy()
        for j in range(d - 1, -1, -1):
            k[:, j] = rem % side - radius
            rem //= side
        yield k


def min_l1_box_np(mat, radius):
    d = mat.shape[0]
    best = np.inf
    arg = np.zeros(d, dtype=np.int64)
    for k in _box_chunks(d, radius):
        vals = np.abs(k.astype(np.float64) @ mat).sum(axis=1)
        vals[~k.any(axis=1)] = np.inf
        i = int(np.argmin(vals))
        if vals[i] < best:
            best = float(vals[i])
            arg = k[i].copy()
    return best, arg


def min_l1_box(mat, radius):
    """Minimum of ``||k^T M||_1`` over nonzero ``k`` with ``||k||_inf <= radius``."""
    mat = np.ascontiguousarray(mat, dtype=np.float64)
    if USE_NUMBA:
        best, arg = min_l1_box_nb(mat, int(radius))
    else:
        best, arg = min_l1_box_np(mat, int(radius))
    return float(best), np.asarray(arg, dtype=np.int64)


@jit()
def cone_gain_nb(omega, sigma, tmat, radius):
    d = omega.shape[0]
    side = 2 * radius + 1
    total = side ** d
    sup = 0.0
    sup_inner = 0.0
    count = 0
    k = np.empty(d, dtype=np.int64)
    for idx in range(total):
        rem = idx
        nonzero = False
        inner = True
        for j in range(d - 1, -1, -1):
            k[j] = rem % side - radius
            rem //= side
            if k[j] != 0:
                nonzero = True
            if abs(k[j]) == radius:
                inner = False
        if not nonzero:
            continue
        dot = 0.0
        n1 = 0.0
        for j in range(d):
            dot += k[j] * omega[j]
            n1 += abs(k[j])
        if abs(dot) > sigma * n1:
            continue
        count += 1
        s = 0.0
        for row in range(d):
            v = 0.0
            for col in range(d):
                v += tmat[row, col] * k[col]
            s += abs(v)
        r = s / n1
        if r > sup:
            sup = r
        if inner and r > sup_inner:
            sup_inner = r
    return sup, sup_inner, count


def cone_gain_np(omega, sigma, tmat, radius):
    sup = 0.0
    sup_inner = 0.0
    count = 0
    for k in _box_chunks(omega.shape[0], radius):
        kf = k.astype(np.float64)
        n1 = np.abs(kf).sum(axis=1)
        keep = (n1 > 0) & (np.abs(kf @ omega) <= sigma * n1)
        if not keep.any():
            continue
        kf = kf[keep]
        n1 = n1[keep]
        r = np.abs(kf @ tmat.T).sum(axis=1) / n1
        count += int(r.size)
        sup = max(sup, float(r.max()))
        inner = (np.abs(k[keep]) < radius).all(axis=1)
        if inner.any():
            sup_inner = max(sup_inner, float(r[inner].max()))
    return sup, sup_inner, count


def cone_gain(omega, sigma, tmat, radius):
    """Sup of ``||T k||_1 / ||k||_1`` over the box part of the cone ``|k.w| <= s||k||_1``.

    Returns
    -------
    sup : float
        Sup over ``0 < ||k||_inf <= radius``.
    sup_inner : float
        Same sup over ``||k||_inf <= radius - 1``.
    count : int
        Number of cone vectors visited.
    """
    omega = np.ascontiguousarray(omega, dtype=np.float64)
    tmat = np.ascontiguousarray(tmat, dtype=np.float64)
    fn = cone_gain_nb if USE_NUMBA else cone_gain_np
    sup, inner, count = fn(omega, float(sigma), tmat, int(radius))
    return float(sup), float(inner), int(count)


@jit()
def min_abs_dot_l1_nb(omega, kmax):
    d = omega.shape[0]
    side = 2 * kmax + 1
    total = side ** d
    best = np.inf
    arg = np.zeros(d, dtype=np.int64)
    k = np.empty(d, dtype=np.int64)
    for idx in range(total):
        rem = idx
        n1 = 0
        for j in range(d - 1, -1, -1):
            k[j] = rem % side - kmax
            rem //= side
            n1 += abs(k[j])
        if n1 == 0 or n1 > kmax:
            continue
        dot = 0.0
        for j in range(d):
            dot += k[j] * omega[j]
        if abs(dot) < best:
            best = abs(dot)
            for j in range(d):
                arg[j] = k[j]
    return best, arg


def min_abs_dot_l1_np(omega, kmax):
    best = np.inf
    arg = np.zeros(omega.shape[0], dtype=np.int64)
    for k in _box_chunks(omega.shape[0], kmax):
        n1 = np.abs(k).sum(axis=1)
        vals = np.abs(k.astype(np.float64) @ omega)
        vals[(n1 == 0) | (n1 > kmax)] = np.inf
        i = int(np.argmin(vals))
        if vals[i] < best:
            best = float(vals[i])
            arg = k[i].copy()
    return best, arg


def min_abs_dot_l1(omega, kmax):
    """Smallest ``|k.omega|`` over nonzero integer ``k`` with ``||k||_1 <= kmax``."""
    omega = np.ascontiguousarray(omega, dtype=np.float64)
    fn = min_abs_dot_l1_nb if USE_NUMBA else min_abs_dot_l1_np
    best, arg = fn(omega, int(kmax))
    return float(best), np.asarray(arg, dtype=np.int64)


# --------------------------------------------------------------------------
# RK4 orbits for real trigonometric vector fields
# --------------------------------------------------------------------------

@jit()
def _field_at_nb(ks, coef, kmin, kspan, x, zp, out):
    d = x.shape[0]
    _power_tables(x, kmin, kspan, zp)
    for a in range(d):
        out[a] = 0.0
    for i in range(ks.shape[0]):
        e = zp[0, ks[i, 0] - kmin[0]]
        for j in range(1, d):
            e *= zp[j, ks[i, j] - kmin[j]]
        for a in range(d):
            out[a] += coef[i, a].real * e.real - coef[i, a].imag * e.imag


@jit(parallel=True)
def rk4_orbits_nb(ks, coef, x0, t_final, h):
    n_orb, d = x0.shape
    steps = int(round(t_final / h))
    kmin, kspan, width = _axis_ranges(ks)
    out = np.empty((n_orb, d), dtype=np.float64)
    for o in prange(n_orb):
        zp = np.empty((d, width), dtype=np.complex128)
        x = x0[o].copy()
        k1 = np.empty(d)
        k2 = np.empty(d)
        k3 = np.empty(d)
        k4 = np.empty(d)
        y = np.empty(d)
        for _ in range(steps):
            _field_at_nb(ks, coef, kmin, kspan, x, zp, k1)
            for j in range(d):
                y[j] = x[j] + 0.5 * h * k1[j]
            _field_at_nb(ks, coef, kmin, kspan, y, zp, k2)
            for j in range(d):
                y[j] = x[j] + 0.5 * h * k2[j]
            _field_at_nb(ks, coef, kmin, kspan, y, zp, k3)
            for j in range(d):
                y[j] = x[j] + h * k3[j]
            _field_at_nb(ks, coef, kmin, kspan, y, zp, k4)
            for j in range(d):
                x[j] += h * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]) / 6.0
        for j in range(d):
            out[o, j] = x[j]
    return out


def rk4_orbits_np(ks, coef, x0, t_final, h):
    steps = int(round(t_final / h))
    ksf = ks.astype(np.float64)

    def field(x):
        phase = TWO_PI * (np.mod(x, 1.0) @ ksf.T)
        return (np.exp(1j * phase) @ coef).real

    x = x0.astype(np.float64).copy()
    for _ in range(steps):
        k1 = field(x)
        k2 = field(x + 0.5 * h * k1)
        k3 = field(x + 0.5 * h * k2)
        k4 = field(x + h * k3)
        x = x + h * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0
    return x


def rk4_orbits(ks, coef, x0, t_final, h):
    """Integrate ``dx/dt = Re sum coef_k e^{2 pi i k.x}`` from each row of ``x0``.

    Integration happens on the universal cover; only the phase is reduced.
    """
    ks = np.ascontiguousarray(ks, dtype=np.int64)
    coef = np.ascontiguousarray(coef, dtype=np.complex128)
    x0 = np.ascontiguousarray(np.atleast_2d(x0), dtype=np.float64)
    if USE_NUMBA:
        return rk4_orbits_nb(ks, coef, x0, float(t_final), float(h))
    return rk4_orbits_np(ks, coef, x0, float(t_final), float(h))
