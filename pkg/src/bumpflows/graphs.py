"""Differentiable graph builders for mixture transforms.

The same bump-mixture math as :mod:`bumpflows.kernels`, expressed in
tape primitives so that every derivative (input, parameter, and nested
second order) comes out of reverse sweeps instead of hand-written
chain rules. Numeric agreement with the kernels is asserted by tests.

``inverse_mixture_nodes`` wraps black-box root-finding as a tape
operation: the value is produced by the solver and the backward pass
re-expresses cotangents through evaluations of the forward map at the
recovered point (inverse-function-theorem relations). Those relations
are exact first-order gradients; nesting another derivative through the
inverse op is not supported.
"""

from __future__ import annotations

import numpy as np

from . import tape
from .rootfind import RootFindConfig, invert_params
from .tape import Node
from .transforms import A_MIN, ALPHA_MIN, C_MIN, TransformerConfig, constrain


def split_raw_nodes(cfg: TransformerConfig, raw: Node) -> dict:
    """Slice a (rows, param_count) raw-parameter node by role."""
    n, cw = cfg.n_components, cfg.comp_width
    m = raw.value.shape[0]
    parts = {
        "a_raw": tape.take_cols(raw, slice(0, n * cw, cw)),
        "b_raw": tape.take_cols(raw, slice(1, n * cw, cw)),
        "w_logits": tape.take_cols(raw, slice(n * cw, n * cw + n)),
        "c_raw": tape.reshape(tape.take_cols(raw, slice(cfg.param_count - 1, cfg.param_count)), (m,)),
    }
    if cfg.has_alpha:
        parts["alpha_raw"] = tape.take_cols(raw, slice(2, n * cw, cw))
    return parts


def constrain_nodes(cfg: TransformerConfig, parts: dict) -> dict:
    if cfg.domain == "circle":
        a = 1.0 + tape.softplus(parts["a_raw"])
        b = tape.mod1(parts["b_raw"])
    else:
        a = A_MIN + tape.softplus(parts["a_raw"])
        b = tape.sigmoid(parts["b_raw"])
    out = {"a": a, "b": b,
           "w": tape.softmax(parts["w_logits"], axis=1),
           "c": C_MIN + (1.0 - C_MIN) * tape.sigmoid(parts["c_raw"])}
    if cfg.ramp == "exponential":
        if cfg.has_alpha:
            out["alpha"] = ALPHA_MIN + tape.exp(parts["alpha_raw"])
        else:
            out["alpha"] = Node(np.full_like(a.value, 1.0 + ALPHA_MIN))
    return out


def _sigma_pair(z: Node, alpha, kind: str, shape: float, want_slope: bool):
    """sigma(z) and optionally sigma'(z) as tape nodes, clamped outside (0, 1).

    Exponential ramps are evaluated relative to a detached exponent
    shift; the quotient is scale invariant, so values and gradients are
    exact, and the shifted far side underflows to an exact zero without
    any masking (its slope factor stays finite for representable z).
    """
    zv = z.value
    inside = (zv > 0.0) & (zv < 1.0)
    zs = tape.where(inside, z, 0.5)
    om = 1.0 - zs
    if kind == "exponential":
        inv_alpha = tape.reciprocal(alpha)
        tn = inv_alpha * zs ** -shape
        tm = inv_alpha * om ** -shape
        tref = Node(np.minimum(tn.value, tm.value))
        n0 = tape.exp(tref - tn)
        m0 = tape.exp(tref - tm)
        if want_slope:
            n1 = (shape * tn / zs) * n0
            m1 = (shape * tm / om) * m0
    else:
        k = int(shape)
        n0, m0 = zs ** k, om ** k
        if want_slope:
            n1 = float(k) * zs ** (k - 1)
            m1 = float(k) * om ** (k - 1)
    inv = tape.reciprocal(n0 + m0)
    s = tape.where(inside, n0 * inv, (zv >= 1.0).astype(np.float64))
    if not want_slope:
        return s, None
    s1 = tape.where(inside, (n1 * m0 + m1 * n0) * (inv * inv), 0.0)
    return s, s1


def mixture_graph(x: Node, raw: Node, cfg: TransformerConfig):
    """Nodes (y, g) of the mixture bijection at ``x`` (shape (m,)).

    ``raw`` has one parameter row per element, or a single shared row.
    """
    p = constrain_nodes(cfg, split_raw_nodes(cfg, raw))
    a, b, w, c = p["a"], p["b"], p["w"], p["c"]
    alpha = p.get("alpha")
    m = x.value.shape[0]
    x2 = tape.reshape(x, (m, 1))
    circle = cfg.domain == "circle"
    if circle:
        u = None
        du = None
        for k in (-1.0, 0.0, 1.0):
            s, s1 = _sigma_pair(a * ((x2 + k) - b) + 0.5, alpha, cfg.ramp, cfg.shape, True)
            u = s if u is None else u + s
            du = s1 if du is None else du + s1
            off, _ = _sigma_pair(a * ((0.0 + k) - b) + 0.5, alpha, cfg.ramp, cfg.shape, False)
            u = u - off
        du = a * du
    else:
        s, s1 = _sigma_pair(a * (x2 - b) + 0.5, alpha, cfg.ramp, cfg.shape, True)
        g0, _ = _sigma_pair(a * (0.0 - b) + 0.5, alpha, cfg.ramp, cfg.shape, False)
        g1, _ = _sigma_pair(a * (1.0 - b) + 0.5, alpha, cfg.ramp, cfg.shape, False)
        norm = g1 - g0
        u = (s - g0) / norm
        du = a * s1 / norm
    oc = 1.0 - c
    y = oc * tape.sum_(w * u, axis=1) + c * x
    dy = oc * tape.sum_(w * du, axis=1) + c
    g = tape.log(dy)
    return y, g


def inverse_mixture_nodes(y: Node, raw: Node, cfg: TransformerConfig,
                          rootcfg: RootFindConfig, backend: str = "active"):
    """Tape op inverting the mixture: returns (x, log-slope of the inverse).

    The forward value comes from the multi-bin solver; cotangents are
    routed through fresh evaluations of the forward map at the recovered
    point, treating that point as a constant (exact for first-order
    gradients).
    """
    params = constrain(cfg, raw.value)
    x_val = invert_params(params, y.value, rootcfg)
    jet = params.jets(x_val)
    inv_jac = Node(1.0 / jet.dy)
    dg_c = Node(jet.dg)
    x_leaf = Node(x_val)
    raw_leaf = Node(raw.value)
    cache: dict = {}

    def sub():
        if not cache:
            cache["y"], cache["g"] = mixture_graph(x_leaf, raw_leaf, cfg)
        return cache["y"], cache["g"]

    # Cotangents are detached before use: the op supports first-order
    # gradients only (the recovered point is held constant), and keeping
    # the incoming cotangent graph out of the inner reverse sweeps stops
    # it from re-entering upstream inverse ops.
    def vjp_x_y(ct):
        return tape.detach(ct) * inv_jac

    def vjp_x_raw(ct):
        yb, _ = sub()
        loss = tape.sum_(yb * (tape.detach(ct) * tape.neg(inv_jac)))
        return tape.grad(loss, raw_leaf)

    def vjp_n_y(ct):
        return tape.neg(tape.detach(ct) * dg_c * inv_jac)

    def vjp_n_raw(ct):
        yb, gb = sub()
        ctc = tape.detach(ct)
        loss = tape.sum_(yb * (ctc * dg_c * inv_jac)) - tape.sum_(gb * ctc)
        return tape.grad(loss, raw_leaf)

    x_node = Node(x_val, ((y, vjp_x_y), (raw, vjp_x_raw)))
    n_node = Node(-jet.g, ((y, vjp_n_y), (raw, vjp_n_raw)))
    return x_node, n_node


def param_jacobian(cfg: TransformerConfig, raw_vec: np.ndarray, x: np.ndarray, order: int = 1):
    """Rows of d(y)/d(raw) and d(dy)/d(raw) at each point of ``x``.

    With ``order=2`` a third matrix d(d2y)/d(raw) is appended. Used by
    the higher-order inverse relations and their finite-difference
    gates; cost is one reverse sweep per point and output.
    """
    x = np.asarray(x, dtype=np.float64)
    m = x.shape[0]
    raw_leaf = Node(np.asarray(raw_vec, dtype=np.float64)[None, :])
    x_leaf = Node(x)
    y, g = mixture_graph(x_leaf, raw_leaf, cfg)
    dy = tape.exp(g)
    outputs = [y, dy]
    if order >= 2:
        dg = tape.grad(tape.sum_(g), x_leaf)
        outputs.append(dy * dg)
    jacs = []
    for out in outputs:
        rows = np.empty((m, cfg.param_count))
        for i in range(m):
            e = np.zeros(m)
            e[i] = 1.0
            rows[i] = tape.grad(out, raw_leaf, cotangent=Node(e)).value[0]
        jacs.append(rows)
    return tuple(jacs)
