"""Dense conditioner networks evaluated on the differentiation tape.

A net owns plain NumPy weight/bias arrays; graph building wraps them in
leaf nodes on demand so the same object serves numeric evaluation
(sampling, quadrature) and differentiable evaluation (training, forces).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tape
from .tape import Node

ACTIVATIONS = ("swish", "sin", "tanh")


def _activate(kind: str, h: Node) -> Node:
    if kind == "swish":
        return tape.mul(h, tape.sigmoid(h))
    if kind == "sin":
        return tape.sin(h)
    if kind == "tanh":
        return tape.tanh(h)
    raise ValueError(f"unknown activation {kind!r}")


def _activate_np(kind: str, h: np.ndarray) -> np.ndarray:
    if kind == "swish":
        return h / (1.0 + np.exp(-h))
    if kind == "sin":
        return np.sin(h)
    return np.tanh(h)


@dataclass
class Featurizer:
    """Input expansion applied before the first dense layer.

    ``cossin`` maps each flagged column u to (cos 2*pi*j*u, sin 2*pi*j*u)
    for j = 1..n_frequencies, making the network exactly periodic in that
    column. Unflagged columns pass through unchanged.
    """

    kind: str = "identity"          # 'identity' | 'cossin'
    n_frequencies: int = 3
    circular: tuple = ()            # bool per raw input column, for 'cossin'

    def width(self, n_raw: int) -> int:
        if self.kind == "identity":
            return n_raw
        circ = self._circ(n_raw)
        return sum(2 * self.n_frequencies if c else 1 for c in circ)

    def _circ(self, n_raw: int):
        if self.circular:
            if len(self.circular) != n_raw:
                raise ValueError("circular flags do not match input width")
            return self.circular
        return (True,) * n_raw

    def apply(self, x: Node) -> Node:
        if self.kind == "identity":
            return x
        n_raw = x.value.shape[1]
        cols = []
        for i, circ in enumerate(self._circ(n_raw)):
            u = tape.take_cols(x, slice(i, i + 1))
            if not circ:
                cols.append(u)
                continue
            for j in range(1, self.n_frequencies + 1):
                w = tape.mul(u, 2.0 * np.pi * j)
                cols.append(tape.cos(w))
                cols.append(tape.sin(w))
        return tape.concat(cols, axis=1)

    def apply_np(self, x: np.ndarray) -> np.ndarray:
        if self.kind == "identity":
            return x
        cols = []
        for i, circ in enumerate(self._circ(x.shape[1])):
            u = x[:, i : i + 1]
            if not circ:
                cols.append(u)
                continue
            for j in range(1, self.n_frequencies + 1):
                w = 2.0 * np.pi * j * u
                cols.append(np.cos(w))
                cols.append(np.sin(w))
        return np.concatenate(cols, axis=1)

    def to_json(self) -> dict:
        return {"kind": self.kind, "n_frequencies": self.n_frequencies,
                "circular": list(self.circular)}

    @classmethod
    def from_json(cls, d: dict) -> "Featurizer":
        return cls(d["kind"], d["n_frequencies"], tuple(bool(c) for c in d["circular"]))


@dataclass
class DenseNet:
    """Fully connected net; ``sizes`` chains raw input to output width."""

    sizes: list[int]
    weights: list[np.ndarray] = field(default_factory=list)   # each (n_in, n_out)
    biases: list[np.ndarray] = field(default_factory=list)
    activation: str = "swish"
    featurizer: Featurizer = field(default_factory=Featurizer)

    @classmethod
    def create(cls, n_raw_in: int, hidden: list[int], n_out: int, rng,
               activation: str = "swish", featurizer: Featurizer | None = None,
               zero_last: bool = True) -> "DenseNet":
        """He-scaled random hidden layers; the last layer starts at zero so
        the downstream transform begins at its raw-offset configuration."""
        featurizer = featurizer or Featurizer()
        n_in = featurizer.width(n_raw_in)
        sizes = [n_in] + list(hidden) + [n_out]
        weights, biases = [], []
        for a, b in zip(sizes[:-1], sizes[1:]):
            weights.append(rng.normal(0.0, np.sqrt(2.0 / a), size=(a, b)))
            biases.append(np.zeros(b))
        if zero_last:
            weights[-1][:] = 0.0
        return cls(sizes, weights, biases, activation, featurizer)

    @property
    def params(self) -> list[np.ndarray]:
        return self.weights + self.biases

    def set_params(self, arrays: list[np.ndarray]) -> None:
        k = len(self.weights)
        self.weights = [np.asarray(a, dtype=np.float64) for a in arrays[:k]]
        self.biases = [np.asarray(a, dtype=np.float64) for a in arrays[k:]]

    def forward(self, x: Node, param_nodes: list[Node] | None = None) -> Node:
        """Tape evaluation. ``param_nodes`` (weights then biases) lets a
        training loop reuse persistent leaves across graphs."""
        if param_nodes is None:
            param_nodes = [Node(p) for p in self.params]
        k = len(self.weights)
        w_nodes, b_nodes = param_nodes[:k], param_nodes[k:]
        h = self.featurizer.apply(x)
        for i, (w, b) in enumerate(zip(w_nodes, b_nodes)):
            h = tape.add(tape.matmul(h, w), b)
            if i < len(w_nodes) - 1:
                h = _activate(self.activation, h)
        return h

    def forward_np(self, x: np.ndarray) -> np.ndarray:
        h = self.featurizer.apply_np(np.asarray(x, dtype=np.float64))
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w + b
            if i < len(self.weights) - 1:
                h = _activate_np(self.activation, h)
        return h

    def to_json(self) -> dict:
        return {
            "sizes": list(self.sizes),
            "activation": self.activation,
            "featurizer": self.featurizer.to_json(),
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
        }

    @classmethod
    def from_json(cls, d: dict) -> "DenseNet":
        return cls(
            sizes=list(d["sizes"]),
            weights=[np.asarray(w, dtype=np.float64) for w in d["weights"]],
            biases=[np.asarray(b, dtype=np.float64) for b in d["biases"]],
            activation=d["activation"],
            featurizer=Featurizer.from_json(d["featurizer"]),
        )
