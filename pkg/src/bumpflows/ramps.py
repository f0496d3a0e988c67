"""Ramp functions and the generalized sigmoid built from them.

Two ramp families are supported on [0, 1]:

* monomial: rho(x) = x**k, k >= 1 (k-1 continuous derivatives at 0 once
  extended by zero to the left);
* exponential: rho(x) = exp(-1 / (alpha * x**beta)) for x > 0 and 0
  otherwise, which is infinitely differentiable with all derivatives
  vanishing at 0.

The generalized sigmoid sigma(x) = rho(x) / (rho(x) + rho(1 - x)) maps
[0, 1] onto itself, is strictly increasing, and inherits the boundary
flatness of the ramp. Values and the first three derivatives are
returned together ("jets"); the quotient-rule expansions are algebraic
in the ramp jets, not nested numerical derivatives.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Below exp(-T_CUT) the exponential ramp and every derivative are
# returned as exact zeros: the analytic limit, and it keeps the
# polynomial-times-exponential products free of inf * 0.
T_CUT = 150.0

# Constrained parameter floors shared with the transform layer. alpha
# must stay large enough that rho(max(x, 1-x)) never underflows for
# x in [0, 1], otherwise the sigmoid denominator would hit 0/0.
ALPHA_MIN = 0.05


@dataclass(frozen=True)
class RampSpec:
    """Ramp family selector: ('monomial', k) or ('exponential', alpha, beta)."""

    kind: str
    k: int = 1
    alpha: float = 1.0
    beta: float = 1.0

    def __post_init__(self):
        if self.kind not in ("monomial", "exponential"):
            raise ValueError(f"unknown ramp kind {self.kind!r}")
        if self.kind == "monomial":
            if int(self.k) != self.k or self.k < 1:
                raise ValueError("monomial order k must be a positive integer")
        else:
            if not self.alpha > 0:
                raise ValueError("alpha must be positive")
            if self.beta < 1:
                raise ValueError("beta must be >= 1")


def ramp_eval(spec: RampSpec, x):
    """Value and first three derivatives of rho at ``x`` (array friendly).

    Total for every finite input; x <= 0 yields exact zeros for both
    families (piecewise extension by zero).
    """
    x = np.asarray(x, dtype=np.float64)
    if spec.kind == "monomial":
        return _monomial_jets(x, spec.k)
    return _exponential_jets(x, spec.alpha, spec.beta)


def _monomial_jets(x, k):
    pos = x > 0
    xs = np.where(pos, x, 1.0)
    r = xs ** k
    r1 = k * xs ** (k - 1)
    r2 = (k * (k - 1) * xs ** (k - 2)) if k >= 2 else np.zeros_like(xs)
    r3 = (k * (k - 1) * (k - 2) * xs ** (k - 3)) if k >= 3 else np.zeros_like(xs)
    zero = np.zeros_like(xs)
    return (np.where(pos, r, zero), np.where(pos, r1, zero),
            np.where(pos, r2, zero), np.where(pos, r3, zero))


def _exponential_jets(x, alpha, beta):
    pos = x > 0
    xs = np.where(pos, x, 1.0)
    t = 1.0 / (alpha * xs ** beta)
    live = pos & (t <= T_CUT)
    ts = np.where(live, t, 1.0)
    xl = np.where(live, xs, 1.0)
    r = np.exp(-ts)
    # h = -1/(alpha x^beta); rho^(n) = (polynomial in h', h'', h''') * rho
    h1 = beta * ts / xl
    h2 = -beta * (beta + 1.0) * ts / xl ** 2
    h3 = beta * (beta + 1.0) * (beta + 2.0) * ts / xl ** 3
    r1 = h1 * r
    r2 = (h2 + h1 * h1) * r
    r3 = (h3 + 3.0 * h1 * h2 + h1 ** 3) * r
    zero = np.zeros_like(xs)
    return (np.where(live, r, zero), np.where(live, r1, zero),
            np.where(live, r2, zero), np.where(live, r3, zero))


def sigmoid_eval(spec: RampSpec, x):
    """Jet of sigma(x) = rho(x) / (rho(x) + rho(1-x)), clamped outside [0, 1].

    For x <= 0 the value is 0, for x >= 1 it is 1, with zero derivatives
    on both clamped branches. The quotient is evaluated with a shifted
    exponent (sigma is invariant under rescaling of rho), so the result
    is finite for every alpha > 0 even where rho itself underflows.
    """
    from .kernels import reference

    x = np.asarray(x, dtype=np.float64)
    scalar = x.ndim == 0
    xv = np.atleast_1d(x)
    if spec.kind == "exponential":
        out = reference.sigmoid_jets(xv, np.full_like(xv, spec.alpha),
                                     "exponential", float(spec.beta))
    else:
        out = reference.sigmoid_jets(xv, None, "monomial", int(spec.k))
    if scalar:
        return tuple(v[0] for v in out)
    return out
