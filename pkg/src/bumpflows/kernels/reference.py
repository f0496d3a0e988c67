"""Pure NumPy evaluation of bump-mixture bijections (fallback backend).

All functions take constrained parameters, one row per batch element:

* ``a``      (m, n)  concentration per component, > 0 (>= 1 on the circle)
* ``b``      (m, n)  location in [0, 1]
* ``alpha``  (m, n)  exponential-ramp scale, or None for monomial ramps
* ``w``      (m, n)  mixture weights on the simplex
* ``c``      (m,)    identity-mix floor in (0, 1]

``kind`` is 'monomial' or 'exponential'; ``shape`` is the monomial order
k or the exponential beta. ``circle`` selects the wrapped variant.

The sigmoid quotient rho(x) / (rho(x) + rho(1-x)) is invariant under
rescaling of rho, and every derivative formula below is homogeneous of
degree zero in the ramp jets. Exponential-ramp jets are therefore
evaluated with the exponent shifted by the smaller of the two exponents,
which keeps one side at exp(0) and makes the quotient immune to
underflow for any alpha > 0.
"""

from __future__ import annotations

import numpy as np

T_CUT = 150.0


def _exp_ramp_jets(t, tref, xval, beta, order):
    """Shifted exponential-ramp jets: exp(tref) * (rho, rho', rho'', rho''')."""
    e = t - tref
    live = e <= T_CUT
    es = np.where(live, e, 0.0)
    ts = np.where(live, t, 1.0)
    xs = np.where(live, xval, 1.0)
    r = np.where(live, np.exp(-es), 0.0)
    if order == 0:
        return (r,)
    h1 = beta * ts / xs
    r1 = h1 * r
    if order == 1:
        return r, r1
    h2 = -beta * (beta + 1.0) * ts / xs ** 2
    h3 = beta * (beta + 1.0) * (beta + 2.0) * ts / xs ** 3
    r2 = (h2 + h1 * h1) * r
    r3 = (h3 + 3.0 * h1 * h2 + h1 ** 3) * r
    return r, r1, r2, r3


def _mono_ramp_jets(z, k, order):
    r = z ** k
    if order == 0:
        return (r,)
    r1 = k * z ** (k - 1)
    if order == 1:
        return r, r1
    r2 = k * (k - 1) * z ** (k - 2) if k >= 2 else np.zeros_like(z)
    r3 = k * (k - 1) * (k - 2) * z ** (k - 3) if k >= 3 else np.zeros_like(z)
    return r, r1, r2, r3


def sigmoid_jets(z, alpha, kind, shape, order=3):
    """sigma and derivatives at ``z`` (any shape), clamped outside (0, 1).

    Returns ``order + 1`` arrays. ``alpha`` must broadcast against ``z``
    for exponential ramps and is ignored for monomial ones.
    """
    z = np.asarray(z, dtype=np.float64)
    inside = (z > 0.0) & (z < 1.0)
    zs = np.where(inside, z, 0.5)
    om = 1.0 - zs

    if kind == "exponential":
        tn = 1.0 / (alpha * zs ** shape)
        tm = 1.0 / (alpha * om ** shape)
        tref = np.minimum(tn, tm)
        nj = _exp_ramp_jets(tn, tref, zs, shape, order)
        mj = _exp_ramp_jets(tm, tref, om, shape, order)
    else:
        nj = _mono_ramp_jets(zs, shape, order)
        mj = _mono_ramp_jets(om, shape, order)

    n0, m0 = nj[0], mj[0]
    d0 = n0 + m0
    s = np.where(inside, n0 / d0, (z >= 1.0).astype(np.float64))
    out = [s]
    if order >= 1:
        n1, m1 = nj[1], mj[1]
        d1 = n1 - m1
        s1 = (n1 * m0 + m1 * n0) / d0 ** 2
        out.append(np.where(inside, s1, 0.0))
    if order >= 2:
        n2, m2 = nj[2], mj[2]
        d2 = n2 + m2
        s2 = (n2 / d0 - 2.0 * n1 * d1 / d0 ** 2 - n0 * d2 / d0 ** 2
              + 2.0 * n0 * d1 ** 2 / d0 ** 3)
        out.append(np.where(inside, s2, 0.0))
    if order >= 3:
        n3, m3 = nj[3], mj[3]
        d3 = n3 - m3
        s3 = (n3 / d0 - 3.0 * n2 * d1 / d0 ** 2 - 3.0 * n1 * d2 / d0 ** 2
              + 6.0 * n1 * d1 ** 2 / d0 ** 3 - n0 * d3 / d0 ** 2
              + 6.0 * n0 * d1 * d2 / d0 ** 3 - 6.0 * n0 * d1 ** 3 / d0 ** 4)
        out.append(np.where(inside, s3, 0.0))
    return tuple(out)


def _sigma_value(z, alpha, kind, shape):
    return sigmoid_jets(z, alpha, kind, shape, order=0)[0]


def prepare_norms(a, b, alpha, kind, shape, circle):
    """Per-component normalization constants, reusable across grid calls.

    Interval: (G0, norm) with norm = sigma(z(1)) - sigma(z(0)).
    Circle:   (offset, 1) with offset the wrapped-sum value at x = 0.
    """
    if circle:
        off = np.zeros_like(a)
        for k in (-1.0, 0.0, 1.0):
            off = off + _sigma_value(a * ((0.0 + k) - b) + 0.5, alpha, kind, shape)
        return off, np.ones_like(a)
    g0 = _sigma_value(a * (0.0 - b) + 0.5, alpha, kind, shape)
    g1 = _sigma_value(a * (1.0 - b) + 0.5, alpha, kind, shape)
    return g0, g1 - g0


_bump_norms = prepare_norms


def bump_jets(x, a, b, alpha, kind, shape, circle, order=3):
    """Normalized per-component maps and x-derivatives, shapes (m, n)."""
    x = np.asarray(x, dtype=np.float64)[:, None]
    base, norm = _bump_norms(a, b, alpha, kind, shape, circle)
    if circle:
        acc = None
        for k in (-1.0, 0.0, 1.0):
            jets = sigmoid_jets(a * ((x + k) - b) + 0.5, alpha, kind, shape, order)
            acc = jets if acc is None else tuple(p + q for p, q in zip(acc, jets))
        u = acc[0] - base
        scaled = [u] + [acc[i] * a ** i for i in range(1, order + 1)]
        return tuple(scaled)
    jets = sigmoid_jets(a * (x - b) + 0.5, alpha, kind, shape, order)
    u = (jets[0] - base) / norm
    return tuple([u] + [jets[i] * a ** i / norm for i in range(1, order + 1)])


def mixture_jets(x, a, b, alpha, w, c, kind, shape, circle):
    """Value, three x-derivatives, and the log-slope jet of the mixture.

    Returns (y, dy, d2y, d3y, g, dg, d2g), each shaped like ``x``.
    """
    x = np.asarray(x, dtype=np.float64)
    u, u1, u2, u3 = bump_jets(x, a, b, alpha, kind, shape, circle, order=3)
    oc = 1.0 - c
    y = oc * np.sum(w * u, axis=1) + c * x
    dy = oc * np.sum(w * u1, axis=1) + c
    d2y = oc * np.sum(w * u2, axis=1)
    d3y = oc * np.sum(w * u3, axis=1)
    g = np.log(dy)
    dg = d2y / dy
    d2g = d3y / dy - dg * dg
    return y, dy, d2y, d3y, g, dg, d2g


def mixture_values(x, a, b, alpha, w, c, kind, shape, circle):
    """Value-only evaluation, shaped like ``x``."""
    x = np.asarray(x, dtype=np.float64)
    u = bump_jets(x, a, b, alpha, kind, shape, circle, order=0)[0]
    return (1.0 - c) * np.sum(w * u, axis=1) + c * x


def mixture_values_grid(s, a, b, alpha, w, c, kind, shape, circle, norms=None):
    """Values at a per-row grid ``s`` of shape (m, G) with (m, n) params."""
    s = np.asarray(s, dtype=np.float64)
    m, G = s.shape
    base, norm = norms if norms is not None else prepare_norms(a, b, alpha, kind, shape, circle)
    ae = a[:, None, :]
    be = b[:, None, :]
    al = alpha[:, None, :] if alpha is not None else None
    xe = s[:, :, None]
    if circle:
        u = -base[:, None, :]
        for k in (-1.0, 0.0, 1.0):
            u = u + _sigma_value(ae * ((xe + k) - be) + 0.5, al, kind, shape)
    else:
        u = (_sigma_value(ae * (xe - be) + 0.5, al, kind, shape) - base[:, None, :]) / norm[:, None, :]
    return (1.0 - c[:, None]) * np.sum(w[:, None, :] * u, axis=2) + c[:, None] * s
