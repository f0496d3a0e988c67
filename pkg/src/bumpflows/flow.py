"""Coupling-layer flows on the unit hypercube and torus.

A model is an ordered list of coupling layers over d dimensions with a
uniform base density. Each layer reads its conditioning coordinates,
produces raw mixture-transform parameters for the remaining
coordinates through a dense net, then applies one element-wise bijection
per transformed coordinate.

Layer direction fixes where the analytic map sits:

* ``forward``: the density pass (data -> base) applies the mixture map
  directly; sampling solves root problems.
* ``inverse``: sampling is analytic; the density pass inverts via the
  multi-bin solver with inverse-function-theorem backward rules.

Both passes exist twice: as tape graphs (training, forces) and as plain
NumPy/kernel evaluations (sampling, quadrature, benchmarks). Tests pin
the two routes against each other.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import tape
from .graphs import inverse_mixture_nodes, mixture_graph
from .nets import DenseNet, Featurizer
from .rootfind import RootFindConfig, invert_params
from .tape import Node
from .transforms import TransformerConfig, constrain

CHECKPOINT_VERSION = 1
DY_FLOOR = 1e-30  # slope floor inside logs on the numeric path


@dataclass
class CouplingLayer:
    mask_a: tuple            # conditioning coordinates
    mask_b: tuple            # transformed coordinates
    conditioner: DenseNet
    transformer: TransformerConfig
    direction: str = "forward"
    raw_offsets: np.ndarray = field(default=None)

    def __post_init__(self):
        if set(self.mask_a) & set(self.mask_b):
            raise ValueError("mask halves overlap")
        if not self.mask_a or not self.mask_b:
            raise ValueError("both mask halves must be nonempty")
        if self.direction not in ("forward", "inverse"):
            raise ValueError(f"unknown direction {self.direction!r}")
        p = self.transformer.param_count
        want = len(self.mask_b) * p
        if self.raw_offsets is None:
            self.raw_offsets = np.tile(self.transformer.default_offsets(), len(self.mask_b))
        self.raw_offsets = np.asarray(self.raw_offsets, dtype=np.float64)
        if self.raw_offsets.shape != (want,):
            raise ValueError("raw_offsets length mismatch")
        if self.conditioner.sizes[-1] != want:
            raise ValueError("conditioner output width mismatch")


class FlowModel:
    def __init__(self, dim: int, domain_tags, layers, rootcfg: RootFindConfig = None,
                 check_coverage: bool = True):
        self.dim = dim
        self.domain_tags = tuple(domain_tags)
        if len(self.domain_tags) != dim:
            raise ValueError("need one domain tag per dimension")
        for tag in self.domain_tags:
            if tag not in ("interval", "circle"):
                raise ValueError(f"unknown domain tag {tag!r}")
        self.layers = list(layers)
        self.rootcfg = rootcfg or RootFindConfig(bins=16, eps=1e-10)
        covered = set()
        for layer in self.layers:
            if set(layer.mask_a) | set(layer.mask_b) != set(range(dim)):
                raise ValueError("layer masks must partition the dimensions")
            for j in layer.mask_b:
                if layer.transformer.domain != self.domain_tags[j]:
                    raise ValueError("transformer domain does not match dimension tag")
            covered |= set(layer.mask_b)
        if check_coverage and covered != set(range(dim)):
            raise ValueError("every dimension must be transformed by some layer")

    # ------------------------------------------------------------------
    # parameters
    # ------------------------------------------------------------------
    def param_arrays(self) -> list:
        out = []
        for layer in self.layers:
            out.extend(layer.conditioner.params)
        return out

    def set_param_arrays(self, arrays) -> None:
        i = 0
        for layer in self.layers:
            k = len(layer.conditioner.params)
            layer.conditioner.set_params(arrays[i : i + k])
            i += k

    def param_leaves(self) -> list:
        return [Node(p) for p in self.param_arrays()]

    def _layer_leaves(self, leaves):
        if leaves is None:
            return [None] * len(self.layers)
        out, i = [], 0
        for layer in self.layers:
            k = len(layer.conditioner.params)
            out.append(leaves[i : i + k])
            i += k
        return out

    # ------------------------------------------------------------------
    # graph passes
    # ------------------------------------------------------------------
    def _cond_raw(self, layer: CouplingLayer, cols, layer_leaves):
        feats = tape.concat([tape.reshape(cols[j], (cols[j].value.shape[0], 1))
                             for j in layer.mask_a], axis=1)
        raw = layer.conditioner.forward(feats, layer_leaves)
        return raw + Node(layer.raw_offsets)

    def _apply_layer_graph(self, layer, cols, layer_leaves, density_pass: bool):
        """Transform the B-columns in place; returns the ldj contribution."""
        m = cols[0].value.shape[0]
        raw = self._cond_raw(layer, cols, layer_leaves)
        p = layer.transformer.param_count
        analytic = (layer.direction == "forward") == density_pass
        ldj = None
        for jj, j in enumerate(layer.mask_b):
            raw_j = tape.take_cols(raw, slice(jj * p, (jj + 1) * p))
            if analytic:
                y, g = mixture_graph(cols[j], raw_j, layer.transformer)
            else:
                y, g = inverse_mixture_nodes(cols[j], raw_j, layer.transformer, self.rootcfg)
            cols[j] = y
            ldj = g if ldj is None else ldj + g
        return ldj

    def _run_graph(self, x: Node, leaves, density_pass: bool):
        m = x.value.shape[0]
        cols = [tape.reshape(tape.take_cols(x, slice(j, j + 1)), (m,)) for j in range(self.dim)]
        order = list(zip(self.layers, self._layer_leaves(leaves)))
        if density_pass:
            order = order[::-1]
        ldj = None
        for layer, ll in order:
            part = self._apply_layer_graph(layer, cols, ll, density_pass)
            ldj = part if ldj is None else ldj + part
        out = tape.concat([tape.reshape(c, (m, 1)) for c in cols], axis=1)
        return out, ldj

    def inverse_graph(self, x: Node, leaves=None):
        """Density pass x -> z; returns (z, log|det dz/dx|)."""
        return self._run_graph(x, leaves, density_pass=True)

    def forward_graph(self, z: Node, leaves=None):
        """Sampling pass z -> x; returns (x, log|det dx/dz|)."""
        out, ldj = self._run_graph(z, leaves, density_pass=False)
        return out, ldj

    def log_density_graph(self, x: Node, leaves=None) -> Node:
        _, ldj = self.inverse_graph(x, leaves)
        return ldj

    # ------------------------------------------------------------------
    # numeric passes
    # ------------------------------------------------------------------
    def _apply_layer_np(self, layer, u, density_pass, collect=None):
        raw = layer.conditioner.forward_np(u[:, layer.mask_a]) + layer.raw_offsets
        p = layer.transformer.param_count
        analytic = (layer.direction == "forward") == density_pass
        ldj = np.zeros(u.shape[0])
        for jj, j in enumerate(layer.mask_b):
            params = constrain(layer.transformer, raw[:, jj * p : (jj + 1) * p])
            if analytic:
                jet = params.jets(u[:, j])
                u[:, j] = jet.y
                ldj += np.log(np.maximum(jet.dy, DY_FLOOR))
            else:
                x = invert_params(params, u[:, j], self.rootcfg)
                jet = params.jets(x)
                u[:, j] = x
                ldj -= np.log(np.maximum(jet.dy, DY_FLOOR))
            if collect is not None:
                collect.append((params, jet))
        return ldj

    def _run_np(self, x, density_pass):
        u = np.array(x, dtype=np.float64, copy=True)
        if u.ndim != 2 or u.shape[1] != self.dim:
            raise ValueError("expected a (batch, dim) array")
        ldj = np.zeros(u.shape[0])
        layers = self.layers[::-1] if density_pass else self.layers
        for layer in layers:
            ldj += self._apply_layer_np(layer, u, density_pass)
        return u, ldj

    def inverse_np(self, x):
        return self._run_np(x, density_pass=True)

    def forward_np(self, z):
        return self._run_np(z, density_pass=False)

    def log_density(self, x, chunk: int = 65536) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        out = np.empty(x.shape[0])
        for i in range(0, x.shape[0], chunk):
            _, ldj = self.inverse_np(x[i : i + chunk])
            out[i : i + chunk] = ldj
        return out

    def force(self, x) -> np.ndarray:
        """d/dx log p at x, conditioner path included."""
        return self.energy_force(x)[1]

    def energy_force(self, x):
        """(u, force) with u = -log p, from one graph build."""
        x = np.asarray(x, dtype=np.float64)
        x_leaf = Node(x)
        logp = self.log_density_graph(x_leaf)
        force = tape.grad(tape.sum_(logp), x_leaf)
        return -logp.value, force.value

    def sample(self, n: int, seed=None, rng=None):
        """Draw n points; returns (x, log p(x)). Deterministic per seed."""
        if rng is None:
            rng = np.random.default_rng(seed)
        z = rng.uniform(0.0, 1.0, size=(n, self.dim))
        x, ldj = self.forward_np(z)
        return x, -ldj

    # ------------------------------------------------------------------
    # serialization
    # ------------------------------------------------------------------
    def to_json(self) -> dict:
        layers = []
        for layer in self.layers:
            t = layer.transformer
            layers.append({
                "mask_a": list(layer.mask_a),
                "mask_b": list(layer.mask_b),
                "direction": layer.direction,
                "transformer": {
                    "domain": t.domain, "n_components": t.n_components,
                    "ramp": t.ramp, "shape": t.shape,
                    "trainable_alpha": t.trainable_alpha,
                },
                "conditioner": layer.conditioner.to_json(),
                "raw_offsets": layer.raw_offsets.tolist(),
            })
        return {
            "version": CHECKPOINT_VERSION,
            "dim": self.dim,
            "domain_tags": list(self.domain_tags),
            "rootfind": {"bins": self.rootcfg.bins, "eps": self.rootcfg.eps,
                         "max_iter": self.rootcfg.max_iter},
            "layers": layers,
        }

    @classmethod
    def from_json(cls, d: dict) -> "FlowModel":
        if d.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {d.get('version')!r}")
        layers = []
        for entry in d["layers"]:
            t = entry["transformer"]
            layers.append(CouplingLayer(
                mask_a=tuple(entry["mask_a"]),
                mask_b=tuple(entry["mask_b"]),
                conditioner=DenseNet.from_json(entry["conditioner"]),
                transformer=TransformerConfig(
                    domain=t["domain"], n_components=t["n_components"],
                    ramp=t["ramp"], shape=t["shape"],
                    trainable_alpha=t["trainable_alpha"]),
                direction=entry["direction"],
                raw_offsets=np.asarray(entry["raw_offsets"], dtype=np.float64),
            ))
        rf = d["rootfind"]
        return cls(d["dim"], d["domain_tags"], layers,
                   RootFindConfig(bins=rf["bins"], eps=rf["eps"], max_iter=rf["max_iter"]))

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "FlowModel":
        with open(path) as fh:
            return cls.from_json(json.load(fh))


def build_model(dim: int, domain_tags, n_layers: int, rng,
                n_components: int = 8, ramp: str = "exponential", shape: float = 2.0,
                hidden=(100, 100), activation: str = "swish", n_frequencies: int = 3,
                direction: str = "forward", rootcfg: RootFindConfig = None,
                trainable_alpha: bool = True) -> FlowModel:
    """Alternating-mask model with near-identity initialization."""
    domain_tags = tuple(domain_tags)
    layers = []
    for i in range(n_layers):
        half = [j for j in range(dim) if j % 2 == i % 2] or [0]
        mask_a = tuple(j for j in range(dim) if j not in half)
        mask_b = tuple(half)
        if not mask_a:
            mask_a, mask_b = (mask_b[:1]), tuple(mask_b[1:])
        circ = tuple(domain_tags[j] == "circle" for j in mask_a)
        feat = (Featurizer("cossin", n_frequencies, circ) if any(circ)
                else Featurizer("identity"))
        n_out = None
        for j in mask_b:
            cfg = TransformerConfig(domain=domain_tags[j], n_components=n_components,
                                    ramp=ramp, shape=shape,
                                    trainable_alpha=trainable_alpha and ramp == "exponential")
            n_out = cfg.param_count * len(mask_b)
        net = DenseNet.create(len(mask_a), list(hidden), n_out, rng,
                              activation=activation, featurizer=feat)
        layers.append(CouplingLayer(mask_a, mask_b, net, cfg, direction))
    return FlowModel(dim, domain_tags, layers, rootcfg)
