# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled mixture-bijection kernels (hot loop of root-finding inversion).

Mirrors :mod:`bumpflows.kernels.reference` exactly: same shifted-exponent
sigmoid quotient, same clamping, same normalization layout. Parameter
arrays may have one row per point or a single shared row.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, log, pow

cnp.import_array()

cdef double T_CUT = 150.0

ctypedef struct Jet4:
    double s0
    double s1
    double s2
    double s3


cdef inline double _powb(double z, double beta) nogil:
    # beta is 1 or 2 in practice; fall back to libm otherwise
    if beta == 2.0:
        return z * z
    if beta == 1.0:
        return z
    return pow(z, beta)


cdef inline double _powi(double z, int k) nogil:
    cdef double r = 1.0
    cdef int i
    if k < 0:
        return pow(z, k)
    for i in range(k):
        r *= z
    return r


cdef inline void _ramp_exp(double t, double tref, double x, double beta, int order,
                           double* r) nogil:
    cdef double e = t - tref
    cdef double h1, h2, h3
    if e > T_CUT:
        r[0] = 0.0; r[1] = 0.0; r[2] = 0.0; r[3] = 0.0
        return
    # the shifted near side always has e == 0; exp(-0) == 1 exactly
    r[0] = 1.0 if e == 0.0 else exp(-e)
    if order >= 1:
        h1 = beta * t / x
        r[1] = h1 * r[0]
        if order >= 3:
            h2 = -beta * (beta + 1.0) * t / (x * x)
            h3 = beta * (beta + 1.0) * (beta + 2.0) * t / (x * x * x)
            r[2] = (h2 + h1 * h1) * r[0]
            r[3] = (h3 + 3.0 * h1 * h2 + h1 * h1 * h1) * r[0]


cdef inline void _ramp_mono(double z, int k, int order, double* r) nogil:
    r[0] = _powi(z, k)
    if order >= 1:
        r[1] = k * _powi(z, k - 1)
        if order >= 3:
            r[2] = k * (k - 1) * _powi(z, k - 2) if k >= 2 else 0.0
            r[3] = k * (k - 1) * (k - 2) * _powi(z, k - 3) if k >= 3 else 0.0


cdef inline void _sigma(double z, double alpha, int kind, double shape, int order,
                        Jet4* out) nogil:
    cdef double n[4]
    cdef double m[4]
    cdef double om, tn, tm, tref, d0, d1, d2, d3
    out.s1 = 0.0; out.s2 = 0.0; out.s3 = 0.0
    if z <= 0.0:
        out.s0 = 0.0
        return
    if z >= 1.0:
        out.s0 = 1.0
        return
    om = 1.0 - z
    if kind == 1:
        tn = 1.0 / (alpha * _powb(z, shape))
        tm = 1.0 / (alpha * _powb(om, shape))
        tref = tn if tn < tm else tm
        _ramp_exp(tn, tref, z, shape, order, n)
        _ramp_exp(tm, tref, om, shape, order, m)
    else:
        _ramp_mono(z, <int> shape, order, n)
        _ramp_mono(om, <int> shape, order, m)
    d0 = n[0] + m[0]
    out.s0 = n[0] / d0
    if order >= 1:
        out.s1 = (n[1] * m[0] + m[1] * n[0]) / (d0 * d0)
        if order >= 3:
            d1 = n[1] - m[1]
            d2 = n[2] + m[2]
            d3 = n[3] - m[3]
            out.s2 = (n[2] / d0 - 2.0 * n[1] * d1 / (d0 * d0) - n[0] * d2 / (d0 * d0)
                      + 2.0 * n[0] * d1 * d1 / (d0 * d0 * d0))
            out.s3 = (n[3] / d0 - 3.0 * n[2] * d1 / (d0 * d0) - 3.0 * n[1] * d2 / (d0 * d0)
                      + 6.0 * n[1] * d1 * d1 / (d0 * d0 * d0) - n[0] * d3 / (d0 * d0)
                      + 6.0 * n[0] * d1 * d2 / (d0 * d0 * d0)
                      - 6.0 * n[0] * d1 * d1 * d1 / (d0 * d0 * d0 * d0))


cdef inline double _sigma_val(double z, double alpha, int kind, double shape) nogil:
    # value-only fast path: sigma = 1 / (1 + exp(t(z) - t(1-z))) for the
    # exponential ramp (single exp; overflow saturates to the clamp values)
    cdef double om, pz, pm, d, n0, m0
    if z <= 0.0:
        return 0.0
    if z >= 1.0:
        return 1.0
    om = 1.0 - z
    if kind == 1:
        pz = _powb(z, shape)
        pm = _powb(om, shape)
        d = (pm - pz) / (alpha * pz * pm)
        return 1.0 / (1.0 + exp(d))
    n0 = _powi(z, <int> shape)
    m0 = _powi(om, <int> shape)
    return n0 / (n0 + m0)


cdef int _kind_flag(kind) except -1:
    if kind == "exponential":
        return 1
    if kind == "monomial":
        return 0
    raise ValueError(f"unknown ramp kind {kind!r}")


cdef void _norms(double[:, ::1] a, double[:, ::1] b, double[:, ::1] alpha,
                 int has_alpha, int kindf, double shape, bint circle,
                 double[:, ::1] base, double[:, ::1] norm) nogil:
    cdef Py_ssize_t r = a.shape[0], n = a.shape[1], i, k
    cdef double av, bv, al, acc
    cdef int kk
    for i in range(r):
        for k in range(n):
            av = a[i, k]; bv = b[i, k]
            al = alpha[i, k] if has_alpha else 1.0
            if circle:
                acc = 0.0
                for kk in range(-1, 2):
                    acc = acc + _sigma_val(av * ((0.0 + kk) - bv) + 0.5, al, kindf, shape)
                base[i, k] = acc
                norm[i, k] = 1.0
            else:
                base[i, k] = _sigma_val(av * (0.0 - bv) + 0.5, al, kindf, shape)
                norm[i, k] = _sigma_val(av * (1.0 - bv) + 0.5, al, kindf, shape) - base[i, k]


def _prep(x, a, b, alpha, w, c):
    a = np.ascontiguousarray(a, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    w = np.ascontiguousarray(w, dtype=np.float64)
    c = np.ascontiguousarray(c, dtype=np.float64)
    if alpha is None:
        alpha_arr = np.zeros((1, a.shape[1]))
        has_alpha = 0
    else:
        alpha_arr = np.ascontiguousarray(alpha, dtype=np.float64)
        has_alpha = 1
    return a, b, alpha_arr, has_alpha, w, c


def mixture_values(x, a, b, alpha, w, c, kind, shape, circle):
    cdef int kindf = _kind_flag(kind)
    x = np.ascontiguousarray(x, dtype=np.float64)
    a, b, alpha, has_alpha, w, c = _prep(x, a, b, alpha, w, c)
    cdef double[::1] xv = x
    cdef double[:, ::1] av = a, bv = b, alv = alpha, wv = w
    cdef double[::1] cv = c
    cdef Py_ssize_t m = xv.shape[0], n = av.shape[1], rows = av.shape[0]
    cdef int ha = has_alpha
    cdef bint circ = circle
    cdef double sh = shape
    base_np = np.empty((rows, n)); norm_np = np.empty((rows, n))
    cdef double[:, ::1] basev = base_np, normv = norm_np
    out_np = np.empty(m)
    cdef double[::1] out = out_np
    cdef Py_ssize_t i, k, ri
    cdef int kk
    cdef double acc, u, xi, al, cc
    with nogil:
        _norms(av, bv, alv, ha, kindf, sh, circ, basev, normv)
        for i in range(m):
            ri = i if rows > 1 else 0
            xi = xv[i]
            acc = 0.0
            for k in range(n):
                al = alv[ri, k] if ha else 1.0
                if circ:
                    u = -basev[ri, k]
                    for kk in range(-1, 2):
                        u = u + _sigma_val(av[ri, k] * ((xi + kk) - bv[ri, k]) + 0.5,
                                           al, kindf, sh)
                else:
                    u = (_sigma_val(av[ri, k] * (xi - bv[ri, k]) + 0.5, al, kindf, sh)
                         - basev[ri, k]) / normv[ri, k]
                acc = acc + wv[ri, k] * u
            cc = cv[ri]
            out[i] = (1.0 - cc) * acc + cc * xi
    return out_np


def prepare_norms(a, b, alpha, kind, shape, circle):
    """Per-component normalization constants (base, norm), reusable across
    repeated grid evaluations with the same parameters."""
    cdef int kindf = _kind_flag(kind)
    a = np.ascontiguousarray(a, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    if alpha is None:
        alpha_arr = np.zeros((1, a.shape[1]))
        has_alpha = 0
    else:
        alpha_arr = np.ascontiguousarray(alpha, dtype=np.float64)
        has_alpha = 1
    cdef double[:, ::1] av = a, bv = b, alv = alpha_arr
    cdef int ha = has_alpha
    cdef bint circ = circle
    cdef double sh = shape
    base_np = np.empty((a.shape[0], a.shape[1]))
    norm_np = np.empty((a.shape[0], a.shape[1]))
    cdef double[:, ::1] basev = base_np, normv = norm_np
    with nogil:
        _norms(av, bv, alv, ha, kindf, sh, circ, basev, normv)
    return base_np, norm_np


def mixture_values_grid(s, a, b, alpha, w, c, kind, shape, circle, norms=None):
    cdef int kindf = _kind_flag(kind)
    s = np.ascontiguousarray(s, dtype=np.float64)
    a, b, alpha, has_alpha, w, c = _prep(s, a, b, alpha, w, c)
    cdef double[:, ::1] sv = s
    cdef double[:, ::1] av = a, bv = b, alv = alpha, wv = w
    cdef double[::1] cv = c
    cdef Py_ssize_t m = sv.shape[0], G = sv.shape[1], n = av.shape[1], rows = av.shape[0]
    cdef int ha = has_alpha
    cdef bint circ = circle
    cdef double sh = shape
    if norms is None:
        base_np = np.empty((rows, n)); norm_np = np.empty((rows, n))
        need_norms = True
    else:
        base_np = np.ascontiguousarray(norms[0], dtype=np.float64)
        norm_np = np.ascontiguousarray(norms[1], dtype=np.float64)
        need_norms = False
    cdef double[:, ::1] basev = base_np, normv = norm_np
    cdef bint compute_norms = need_norms
    out_np = np.empty((m, G))
    cdef double[:, ::1] out = out_np
    cdef Py_ssize_t i, j, k, ri
    cdef int kk
    cdef double acc, u, xi, al, cc
    with nogil:
        if compute_norms:
            _norms(av, bv, alv, ha, kindf, sh, circ, basev, normv)
        for i in range(m):
            ri = i if rows > 1 else 0
            cc = cv[ri]
            for j in range(G):
                xi = sv[i, j]
                acc = 0.0
                for k in range(n):
                    al = alv[ri, k] if ha else 1.0
                    if circ:
                        u = -basev[ri, k]
                        for kk in range(-1, 2):
                            u = u + _sigma_val(av[ri, k] * ((xi + kk) - bv[ri, k]) + 0.5,
                                               al, kindf, sh)
                    else:
                        u = (_sigma_val(av[ri, k] * (xi - bv[ri, k]) + 0.5, al, kindf, sh)
                             - basev[ri, k]) / normv[ri, k]
                    acc = acc + wv[ri, k] * u
                out[i, j] = (1.0 - cc) * acc + cc * xi
    return out_np


def mixture_jets(x, a, b, alpha, w, c, kind, shape, circle):
    cdef int kindf = _kind_flag(kind)
    x = np.ascontiguousarray(x, dtype=np.float64)
    a, b, alpha, has_alpha, w, c = _prep(x, a, b, alpha, w, c)
    cdef double[::1] xv = x
    cdef double[:, ::1] av = a, bv = b, alv = alpha, wv = w
    cdef double[::1] cv = c
    cdef Py_ssize_t m = xv.shape[0], n = av.shape[1], rows = av.shape[0]
    cdef int ha = has_alpha
    cdef bint circ = circle
    cdef double sh = shape
    base_np = np.empty((rows, n)); norm_np = np.empty((rows, n))
    cdef double[:, ::1] basev = base_np, normv = norm_np
    y_np = np.empty(m); dy_np = np.empty(m); d2y_np = np.empty(m); d3y_np = np.empty(m)
    g_np = np.empty(m); dg_np = np.empty(m); d2g_np = np.empty(m)
    cdef double[::1] yv = y_np, dyv = dy_np, d2yv = d2y_np, d3yv = d3y_np
    cdef double[::1] gv = g_np, dgv = dg_np, d2gv = d2g_np
    cdef Py_ssize_t i, k, ri
    cdef int kk
    cdef double xi, al, cc, oc, u0, u1, u2, u3, s0a, s1a, s2a, s3a
    cdef double aa, weight, yk, dyk, d2yk, d3yk, dgk
    cdef Jet4 jt
    with nogil:
        _norms(av, bv, alv, ha, kindf, sh, circ, basev, normv)
        for i in range(m):
            ri = i if rows > 1 else 0
            xi = xv[i]
            cc = cv[ri]
            oc = 1.0 - cc
            yk = 0.0; dyk = 0.0; d2yk = 0.0; d3yk = 0.0
            for k in range(n):
                aa = av[ri, k]
                al = alv[ri, k] if ha else 1.0
                weight = wv[ri, k]
                if circ:
                    s0a = -basev[ri, k]; s1a = 0.0; s2a = 0.0; s3a = 0.0
                    for kk in range(-1, 2):
                        _sigma(aa * ((xi + kk) - bv[ri, k]) + 0.5, al, kindf, sh, 3, &jt)
                        s0a += jt.s0; s1a += jt.s1; s2a += jt.s2; s3a += jt.s3
                    u0 = s0a
                    u1 = s1a * aa
                    u2 = s2a * aa * aa
                    u3 = s3a * aa * aa * aa
                else:
                    _sigma(aa * (xi - bv[ri, k]) + 0.5, al, kindf, sh, 3, &jt)
                    u0 = (jt.s0 - basev[ri, k]) / normv[ri, k]
                    u1 = jt.s1 * aa / normv[ri, k]
                    u2 = jt.s2 * aa * aa / normv[ri, k]
                    u3 = jt.s3 * aa * aa * aa / normv[ri, k]
                yk += weight * u0
                dyk += weight * u1
                d2yk += weight * u2
                d3yk += weight * u3
            yv[i] = oc * yk + cc * xi
            dyv[i] = oc * dyk + cc
            d2yv[i] = oc * d2yk
            d3yv[i] = oc * d3yk
            gv[i] = log(dyv[i])
            dgk = d2yv[i] / dyv[i]
            dgv[i] = dgk
            d2gv[i] = d3yv[i] / dyv[i] - dgk * dgk
    return y_np, dy_np, d2y_np, d3y_np, g_np, dg_np, d2g_np
