"""Element-wise bijections on the unit interval and the circle.

A transform is a convex mixture of normalized bump maps plus an identity
floor:

    y(x) = (1 - c) * sum_i w_i * u_i(x) + c * x,

where each u_i is the CDF-like normalization of a scaled/translated
generalized sigmoid (interval case) or its wrapped counterpart (circle
case). The floor c > 0 makes the slope provably bounded below by c, so
the map is invertible by bracketing root search regardless of the bump
parameters.

Unconstrained ("raw") parameters are mapped to their domains here; the
flat ordering of the raw vector is, per transform:

    [a_raw_i, b_raw_i, (alpha_raw_i)] for i = 1..n, then the n weight
    logits, then c_raw.

Frozen shape hyperparameters (monomial order k, exponential beta) are
not part of the vector.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import kernels
from .ramps import RampSpec

A_MIN = 1e-4      # slope floor for interval concentrations
ALPHA_MIN = 0.05  # keeps exponential ramps away from degenerate sharpness
C_MIN = 1e-3      # lower bound of the identity-mix floor


def softplus(x):
    return np.logaddexp(0.0, x)


def expit(x):
    x = np.asarray(x, dtype=np.float64)
    return np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))),
                    np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))


@dataclass(frozen=True)
class TransformerConfig:
    """Static shape of one element-wise transform."""

    domain: str = "interval"        # 'interval' | 'circle'
    n_components: int = 8
    ramp: str = "exponential"       # 'monomial' | 'exponential'
    shape: float = 2.0              # monomial order k or exponential beta
    trainable_alpha: bool = True

    def __post_init__(self):
        if self.domain not in ("interval", "circle"):
            raise ValueError(f"unknown domain {self.domain!r}")
        if self.ramp not in ("monomial", "exponential"):
            raise ValueError(f"unknown ramp {self.ramp!r}")
        if self.ramp == "monomial" and (int(self.shape) != self.shape or self.shape < 1):
            raise ValueError("monomial order must be a positive integer")
        if self.ramp == "exponential" and self.shape < 1:
            raise ValueError("beta must be >= 1")
        if self.n_components < 1:
            raise ValueError("need at least one component")

    @property
    def has_alpha(self) -> bool:
        return self.ramp == "exponential" and self.trainable_alpha

    @property
    def comp_width(self) -> int:
        return 3 if self.has_alpha else 2

    @property
    def param_count(self) -> int:
        return self.n_components * self.comp_width + self.n_components + 1

    def split_raw(self, raw: np.ndarray) -> dict:
        """Views into a (..., param_count) raw array, keyed by role."""
        n, cw = self.n_components, self.comp_width
        comp = raw[..., : n * cw].reshape(raw.shape[:-1] + (n, cw))
        out = {"a_raw": comp[..., 0], "b_raw": comp[..., 1]}
        if self.has_alpha:
            out["alpha_raw"] = comp[..., 2]
        out["w_logits"] = raw[..., n * cw : n * cw + n]
        out["c_raw"] = raw[..., -1]
        return out

    def default_offsets(self, c_raw: float = 8.0) -> np.ndarray:
        """Raw offsets giving a near-identity transform with component
        locations spread over the domain."""
        n = self.n_components
        off = np.zeros(self.param_count)
        centers = (np.arange(n) + 0.5) / n
        b_off = centers if self.domain == "circle" else np.log(centers / (1.0 - centers))
        comp = off[: n * self.comp_width].reshape(n, self.comp_width)
        comp[:, 1] = b_off
        off[-1] = c_raw
        return off


def constrain(cfg: TransformerConfig, raw: np.ndarray) -> "MixtureParams":
    """Map raw parameters (rows) to their constrained domains."""
    raw = np.atleast_2d(np.asarray(raw, dtype=np.float64))
    parts = cfg.split_raw(raw)
    if cfg.domain == "circle":
        a = 1.0 + softplus(parts["a_raw"])
        b = parts["b_raw"] - np.floor(parts["b_raw"])
    else:
        a = A_MIN + softplus(parts["a_raw"])
        b = expit(parts["b_raw"])
    if cfg.ramp == "exponential":
        if cfg.has_alpha:
            alpha = ALPHA_MIN + np.exp(parts["alpha_raw"])
        else:
            alpha = np.full_like(a, 1.0 + ALPHA_MIN)
    else:
        alpha = None
    wl = parts["w_logits"]
    e = np.exp(wl - np.max(wl, axis=-1, keepdims=True))
    w = e / np.sum(e, axis=-1, keepdims=True)
    c = C_MIN + (1.0 - C_MIN) * expit(parts["c_raw"])
    return MixtureParams(cfg, a, b, alpha, w, c)


@dataclass
class TransformJet:
    """Value plus x-derivatives and the log-slope jet of a monotone map."""

    y: np.ndarray
    dy: np.ndarray
    d2y: np.ndarray
    d3y: np.ndarray
    g: np.ndarray
    dg: np.ndarray
    d2g: np.ndarray


@dataclass
class MixtureParams:
    """Constrained parameter rows ready for kernel evaluation."""

    cfg: TransformerConfig
    a: np.ndarray
    b: np.ndarray
    alpha: np.ndarray | None
    w: np.ndarray
    c: np.ndarray

    @property
    def n_rows(self) -> int:
        return self.a.shape[0]

    def take_rows(self, rows: np.ndarray) -> "MixtureParams":
        """Materialize a row subset (no-op when parameters are shared)."""
        if self.n_rows == 1:
            return self
        return MixtureParams(self.cfg, np.ascontiguousarray(self.a[rows]),
                             np.ascontiguousarray(self.b[rows]),
                             None if self.alpha is None else np.ascontiguousarray(self.alpha[rows]),
                             np.ascontiguousarray(self.w[rows]),
                             np.ascontiguousarray(self.c[rows]))

    def _check(self, m: int) -> None:
        if self.n_rows not in (1, m):
            raise ValueError("parameter rows do not match batch")

    def _kw(self):
        return dict(kind=self.cfg.ramp, shape=self.cfg.shape,
                    circle=self.cfg.domain == "circle")

    def values(self, x: np.ndarray, backend: str = "active") -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        self._check(x.shape[0])
        return kernels.mixture_values(x, self.a, self.b, self.alpha, self.w, self.c,
                                      backend=backend, **self._kw())

    def values_grid(self, s: np.ndarray, backend: str = "active", norms=None) -> np.ndarray:
        self._check(s.shape[0])
        return kernels.mixture_values_grid(s, self.a, self.b, self.alpha, self.w, self.c,
                                           backend=backend, norms=norms, **self._kw())

    def norms(self, backend: str = "active"):
        return kernels.prepare_norms(self.a, self.b, self.alpha,
                                     backend=backend, **self._kw())

    def jets(self, x: np.ndarray, backend: str = "active") -> TransformJet:
        x = np.asarray(x, dtype=np.float64)
        self._check(x.shape[0])
        out = kernels.mixture_jets(x, self.a, self.b, self.alpha, self.w, self.c,
                                   backend=backend, **self._kw())
        return TransformJet(*out)


class MixtureTransform:
    """One element-wise bijection with a shared raw parameter vector."""

    def __init__(self, cfg: TransformerConfig, raw: np.ndarray):
        raw = np.asarray(raw, dtype=np.float64)
        if raw.shape != (cfg.param_count,):
            raise ValueError(f"raw vector must have length {cfg.param_count}")
        self.cfg = cfg
        self.raw = raw

    @property
    def params(self) -> MixtureParams:
        return constrain(self.cfg, self.raw[None, :])

    def forward(self, x) -> TransformJet:
        return self.params.jets(np.asarray(x, dtype=np.float64))

    def value(self, x) -> np.ndarray:
        return self.params.values(np.asarray(x, dtype=np.float64))

    def to_json(self) -> dict:
        cfg, parts = self.cfg, self.cfg.split_raw(self.raw)
        ramp = {"kind": cfg.ramp}
        if cfg.ramp == "monomial":
            ramp["k"] = int(cfg.shape)
        else:
            ramp["beta"] = cfg.shape
            ramp["trainable_alpha"] = cfg.trainable_alpha
        comps = []
        for i in range(cfg.n_components):
            entry = {"a_raw": float(parts["a_raw"][i]), "b_raw": float(parts["b_raw"][i])}
            if cfg.has_alpha:
                entry["alpha_raw"] = float(parts["alpha_raw"][i])
            comps.append(entry)
        return {"domain": cfg.domain, "ramp": ramp, "components": comps,
                "weight_logits": [float(v) for v in parts["w_logits"]],
                "c_raw": float(parts["c_raw"])}

    @classmethod
    def from_json(cls, d: dict) -> "MixtureTransform":
        ramp = d["ramp"]
        cfg = TransformerConfig(
            domain=d["domain"],
            n_components=len(d["components"]),
            ramp=ramp["kind"],
            shape=float(ramp["k"] if ramp["kind"] == "monomial" else ramp["beta"]),
            trainable_alpha=bool(ramp.get("trainable_alpha", False)),
        )
        raw = np.zeros(cfg.param_count)
        comp = raw[: cfg.n_components * cfg.comp_width].reshape(cfg.n_components, cfg.comp_width)
        for i, entry in enumerate(d["components"]):
            comp[i, 0] = entry["a_raw"]
            comp[i, 1] = entry["b_raw"]
            if cfg.has_alpha:
                comp[i, 2] = entry["alpha_raw"]
        raw[cfg.n_components * cfg.comp_width : -1] = d["weight_logits"]
        raw[-1] = d["c_raw"]
        return cls(cfg, raw)

    def dumps(self) -> str:
        return json.dumps(self.to_json())

    @classmethod
    def loads(cls, s: str) -> "MixtureTransform":
        return cls.from_json(json.loads(s))


def bump_forward(a: float, b: float, ramp: RampSpec, x, domain: str = "interval") -> TransformJet:
    """Jet of a single normalized bump map (no identity mixing).

    The slope may vanish outside the bump support, in which case the
    log-slope entries are -inf; mixtures restore strict positivity via
    the identity floor.
    """
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    cfg = TransformerConfig(domain=domain, n_components=1,
                            ramp=ramp.kind,
                            shape=float(ramp.k if ramp.kind == "monomial" else ramp.beta),
                            trainable_alpha=False)
    arr = lambda v: np.full((x.shape[0], 1), float(v))
    alpha = arr(ramp.alpha) if ramp.kind == "exponential" else None
    from .kernels import get_backend
    u, u1, u2, u3 = get_backend("python").bump_jets(
        x, arr(a), arr(b), alpha, kind=cfg.ramp, shape=cfg.shape,
        circle=domain == "circle", order=3)
    y, dy, d2y, d3y = u[:, 0], u1[:, 0], u2[:, 0], u3[:, 0]
    with np.errstate(divide="ignore", invalid="ignore"):
        g = np.log(dy)
        dg = d2y / dy
        d2g = d3y / dy - dg * dg
    return TransformJet(y, dy, d2y, d3y, g, dg, d2g)


@dataclass(frozen=True)
class AffineMap:
    """y = scale * x + shift on the real line (root-finder baseline)."""

    scale: float
    shift: float = 0.0

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError("scale must be positive")

    def forward(self, x) -> TransformJet:
        x = np.asarray(x, dtype=np.float64)
        y = self.scale * x + self.shift
        one = np.full_like(x, self.scale)
        zero = np.zeros_like(x)
        return TransformJet(y, one, zero.copy(), zero.copy(),
                            np.full_like(x, np.log(self.scale)), zero.copy(), zero.copy())

    def value(self, x) -> np.ndarray:
        return self.scale * np.asarray(x, dtype=np.float64) + self.shift

    def inverse(self, y) -> np.ndarray:
        return (np.asarray(y, dtype=np.float64) - self.shift) / self.scale
