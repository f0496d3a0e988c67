"""Toy target potentials, Metropolis-Hastings data generation, and the
affine map between raw data coordinates and the flow's unit cube.

Both potentials are two-dimensional mixtures of Gaussian shells:

    u(x) = -log sum_i alpha_i exp(-(q(x) - r_i)^2 / (2 sigma))

with q the Euclidean norm (ring mixture) or the smooth periodic-ish
feature (cos(x1^2) + cos(x2^2) + 2)^(1/2) (periodic mixture). Shell
radii are not part of the published parameter sets; the defaults below
are recorded in dataset metadata as local choices.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tape
from .tape import Node

RING_ALPHAS = (1.0, 0.8, 0.6, 0.4)
RING_SIGMA = 0.06
RING_RADII = (1.0, 2.0, 3.0, 4.0)        # local choice, metadata-recorded
PERIODIC_SIGMA = 0.05
PERIODIC_RADII = (0.5, 1.0, 1.5, 2.0)    # local choice, metadata-recorded


@dataclass(frozen=True)
class CubeMap:
    """Affine chart between raw coordinates and the padded unit cube.

    cube = pad + (1 - 2 pad) * (raw - lo) / (hi - lo), per dimension.
    """

    lo: tuple
    hi: tuple
    pad: float = 0.05

    def __post_init__(self):
        if len(self.lo) != len(self.hi):
            raise ValueError("lo/hi length mismatch")
        if not 0 <= self.pad < 0.5:
            raise ValueError("pad must be in [0, 0.5)")

    @property
    def dim(self) -> int:
        return len(self.lo)

    def _scale(self):
        lo = np.asarray(self.lo, dtype=np.float64)
        hi = np.asarray(self.hi, dtype=np.float64)
        return lo, (1.0 - 2.0 * self.pad) / (hi - lo)

    def to_cube(self, x_raw):
        lo, s = self._scale()
        return self.pad + (np.asarray(x_raw, dtype=np.float64) - lo) * s

    def to_raw(self, x_cube):
        lo, s = self._scale()
        return lo + (np.asarray(x_cube, dtype=np.float64) - self.pad) / s

    def to_raw_node(self, x_cube: Node) -> Node:
        lo, s = self._scale()
        return (x_cube - self.pad) * (1.0 / s) + lo

    def force_to_cube(self, f_raw):
        """Chain rule: d/d(cube) = d/d(raw) * d(raw)/d(cube)."""
        _, s = self._scale()
        return np.asarray(f_raw, dtype=np.float64) / s

    def to_json(self) -> dict:
        return {"lo": list(self.lo), "hi": list(self.hi), "pad": self.pad}

    @classmethod
    def from_json(cls, d: dict) -> "CubeMap":
        return cls(tuple(d["lo"]), tuple(d["hi"]), d["pad"])


@dataclass(frozen=True)
class ToyPotential:
    """Shell-mixture energy on R^2 with analytic forces."""

    kind: str = "ring"                       # 'ring' | 'periodic' | 'flat'
    sigma: float = RING_SIGMA
    alphas: tuple = RING_ALPHAS
    radii: tuple = RING_RADII
    # chart range: generous margin beyond the outer shell so no mass is
    # clipped; also sets how concentrated the density is relative to the
    # uniform base once mapped to the unit cube
    box: tuple = ((-8.0, 8.0), (-8.0, 8.0))

    def __post_init__(self):
        if self.kind not in ("ring", "periodic", "flat"):
            raise ValueError(f"unknown potential kind {self.kind!r}")
        if self.kind != "flat":
            if not self.sigma > 0:
                raise ValueError("sigma must be positive")
            if len(self.alphas) != len(self.radii):
                raise ValueError("alphas/radii length mismatch")
            if any(a <= 0 for a in self.alphas):
                raise ValueError("alphas must be positive")
            if any(r2 <= r1 for r1, r2 in zip(self.radii, self.radii[1:])):
                raise ValueError("radii must be increasing")

    @classmethod
    def ring(cls) -> "ToyPotential":
        return cls("ring", RING_SIGMA, RING_ALPHAS, RING_RADII)

    @classmethod
    def periodic(cls) -> "ToyPotential":
        return cls("periodic", PERIODIC_SIGMA, RING_ALPHAS, PERIODIC_RADII,
                   box=((0.0, 2.0 * np.pi), (0.0, 2.0 * np.pi)))

    @classmethod
    def flat(cls, box=((-1.0, 1.0), (-1.0, 1.0))) -> "ToyPotential":
        return cls("flat", box=box)

    # ------------------------------------------------------------------
    def _feature(self, x):
        """q(x), dq/dx."""
        if self.kind == "ring":
            r = np.sqrt(np.sum(x * x, axis=1))
            safe = np.maximum(r, 1e-12)
            return r, x / safe[:, None]
        s = np.cos(x[:, 0] ** 2) + np.cos(x[:, 1] ** 2) + 2.0
        q = np.sqrt(np.maximum(s, 1e-12))
        dq = -np.sin(x ** 2) * 2.0 * x / (2.0 * q[:, None])
        return q, dq

    def energy_force(self, x):
        """(u, -du/dx) for a (batch, 2) array."""
        x = np.asarray(x, dtype=np.float64)
        if self.kind == "flat":
            lo = np.array([b[0] for b in self.box])
            hi = np.array([b[1] for b in self.box])
            outside = np.any((x < lo) | (x > hi), axis=1)
            u = np.where(outside, np.inf, 0.0)
            return u, np.zeros_like(x)
        q, dq = self._feature(x)
        alphas = np.asarray(self.alphas)
        radii = np.asarray(self.radii)
        d = q[:, None] - radii[None, :]
        wexp = alphas[None, :] * np.exp(-d * d / (2.0 * self.sigma))
        z = np.sum(wexp, axis=1)
        u = -np.log(z)
        du_dq = np.sum(wexp * d, axis=1) / (self.sigma * z)
        force = -du_dq[:, None] * dq
        return u, force

    def energy_node(self, x: Node) -> Node:
        """Tape version of the energy (reverse-KL path)."""
        if self.kind == "flat":
            return Node(np.zeros(x.value.shape[0]))
        m = x.value.shape[0]
        if self.kind == "ring":
            q = tape.sqrt(tape.sum_(x * x, axis=1))
        else:
            xsq = x * x
            s = tape.sum_(tape.cos(xsq), axis=1) + 2.0
            q = tape.sqrt(s)
        alphas = np.asarray(self.alphas)
        radii = np.asarray(self.radii)
        d = tape.reshape(q, (m, 1)) - Node(radii[None, :])
        w = tape.exp(tape.neg(d * d) * (1.0 / (2.0 * self.sigma))) * Node(alphas[None, :])
        return tape.neg(tape.log(tape.sum_(w, axis=1)))

    def default_cube_map(self, pad: float = 0.05) -> CubeMap:
        return CubeMap(tuple(b[0] for b in self.box), tuple(b[1] for b in self.box), pad)

    def to_json(self) -> dict:
        return {"kind": self.kind, "sigma": self.sigma, "alphas": list(self.alphas),
                "radii": list(self.radii), "box": [list(b) for b in self.box]}

    @classmethod
    def from_json(cls, d: dict) -> "ToyPotential":
        return cls(d["kind"], d["sigma"], tuple(d["alphas"]), tuple(d["radii"]),
                   tuple(tuple(b) for b in d["box"]))


def mh_sample(potential: ToyPotential, n_chains: int, burn_steps: int,
              collect_steps: int, proposal_std: float, seed: int):
    """Parallel-chain random-walk Metropolis sampling.

    Chains start on a regular grid over the potential's box, take
    ``burn_steps`` warmup steps, then one sample per chain is collected
    after each of ``collect_steps`` further steps. Returns positions and
    analytic forces, both in raw coordinates.
    """
    if n_chains < 1 or burn_steps < 0 or collect_steps < 1:
        raise ValueError("invalid chain counts")
    rng = np.random.default_rng(seed)
    side = int(np.ceil(np.sqrt(n_chains)))
    lo = np.array([b[0] for b in potential.box])
    hi = np.array([b[1] for b in potential.box])
    ticks = [np.linspace(lo[j], hi[j], side + 2)[1:-1] for j in range(2)]
    g1, g2 = np.meshgrid(ticks[0], ticks[1], indexing="ij")
    x = np.stack([g1.ravel(), g2.ravel()], axis=1)[:n_chains].copy()
    u, _ = potential.energy_force(x)

    def step(x, u):
        prop = x + rng.normal(0.0, proposal_std, size=x.shape)
        up, _ = potential.energy_force(prop)
        with np.errstate(invalid="ignore", over="ignore"):
            accept = rng.uniform(size=x.shape[0]) < np.exp(np.minimum(u - up, 0.0))
        accept &= np.isfinite(up)
        x[accept] = prop[accept]
        u[accept] = up[accept]
        return x, u

    for _ in range(burn_steps):
        x, u = step(x, u)
    samples = np.empty((collect_steps * n_chains, 2))
    for i in range(collect_steps):
        x, u = step(x, u)
        samples[i * n_chains : (i + 1) * n_chains] = x
    _, forces = potential.energy_force(samples)
    return samples, forces
