"""Losses and the training loop.

Three loss terms over a flow model:

* negative log likelihood of data;
* reverse KL divergence against a known energy, estimated pathwise on
  reparameterized samples and passed through a soft cutoff that tames
  exploding energies;
* force mean-squared error between reference forces and the model force
  field (a second-order objective: its gradient differentiates through
  the force computation).

The combined objective is omega_n * NLL + omega_k * cutoff(KLD) +
omega_f * FME. Training is plain Adam with optional per-epoch learning
rate decay; everything is deterministic under a fixed seed.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from . import tape
from .flow import FlowModel
from .rootfind import RootFindConfig
from .targets import CubeMap, ToyPotential, mh_sample
from .tape import Node

DATASET_VERSION = 1


class TrainingDiverged(RuntimeError):
    def __init__(self, iteration: int, term: str, value: float):
        self.iteration = iteration
        self.term = term
        self.value = value
        super().__init__(f"non-finite {term} ({value!r}) at iteration {iteration}")


# ----------------------------------------------------------------------
# datasets
# ----------------------------------------------------------------------

@dataclass
class Dataset:
    """Samples and forces in cube coordinates plus provenance metadata."""

    x: np.ndarray
    force: np.ndarray
    metadata: dict

    @property
    def n(self) -> int:
        return self.x.shape[0]

    def cube_map(self) -> CubeMap:
        return CubeMap.from_json(self.metadata["cube_map"])

    def potential(self) -> ToyPotential:
        return ToyPotential.from_json(self.metadata["potential"])

    def save(self, out_dir: str) -> None:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "dataset.csv"), "w") as fh:
            fh.write("x1,x2,f1,f2\n")
            for row in np.hstack([self.x, self.force]):
                fh.write(",".join(repr(float(v)) for v in row) + "\n")
        with open(os.path.join(out_dir, "metadata.json"), "w") as fh:
            json.dump(self.metadata, fh, indent=1, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path: str) -> "Dataset":
        csv = path if path.endswith(".csv") else os.path.join(path, "dataset.csv")
        meta = os.path.join(os.path.dirname(csv), "metadata.json")
        data = np.loadtxt(csv, delimiter=",", skiprows=1, ndmin=2)
        with open(meta) as fh:
            metadata = json.load(fh)
        return cls(data[:, :2], data[:, 2:4], metadata)


def generate_dataset(potential: ToyPotential, n_chains: int, burn_steps: int,
                     collect_steps: int, proposal_std: float, seed: int,
                     pad: float = 0.05) -> Dataset:
    """MH sampling in raw coordinates, mapped into the padded unit cube."""
    samples, forces = mh_sample(potential, n_chains, burn_steps, collect_steps,
                                proposal_std, seed)
    cmap = potential.default_cube_map(pad)
    metadata = {
        "version": DATASET_VERSION,
        "potential": potential.to_json(),
        "cube_map": cmap.to_json(),
        "mh": {"n_chains": n_chains, "burn_steps": burn_steps,
               "collect_steps": collect_steps, "proposal_std": proposal_std,
               "seed": seed},
        "n_samples": int(samples.shape[0]),
    }
    return Dataset(cmap.to_cube(samples), cmap.force_to_cube(forces), metadata)


# ----------------------------------------------------------------------
# losses
# ----------------------------------------------------------------------

def cutoff_lambda(x):
    """Soft cap: identity below 1e3, then 1e3 + log1p(x - 1e3), clipped at 1e9."""
    x = np.asarray(x, dtype=np.float64)
    high = 1e3 + np.log1p(np.maximum(x, 1e3) - 1e3)
    return np.where(x <= 1e3, x, np.minimum(high, 1e9))


def cutoff_node(x: Node) -> Node:
    v = float(x.value)
    if v <= 1e3:
        return x
    capped = 1e3 + tape.log1p(x - 1e3)
    if float(capped.value) > 1e9:
        return Node(np.asarray(1e9))
    return capped


def loss_nll_node(model: FlowModel, x_batch: np.ndarray, leaves=None) -> Node:
    logp = model.log_density_graph(Node(x_batch), leaves)
    return tape.neg(tape.mean(logp))


def force_nodes(model: FlowModel, x_batch: np.ndarray, leaves=None):
    """(force node, x leaf) with the force itself differentiable."""
    x_leaf = Node(x_batch)
    logp = model.log_density_graph(x_leaf, leaves)
    force = tape.grad(tape.sum_(logp), x_leaf)
    return force, x_leaf


def loss_fm_node(model: FlowModel, x_batch: np.ndarray, f_batch: np.ndarray,
                 leaves=None) -> Node:
    force, _ = force_nodes(model, x_batch, leaves)
    resid = Node(f_batch) - force
    return tape.mean(tape.sum_(resid * resid, axis=1))


def loss_kld_node(model: FlowModel, potential: ToyPotential, cmap: CubeMap,
                  z_batch: np.ndarray, leaves=None, cutoff: bool = True) -> Node:
    x_node, ldj = model.forward_graph(Node(z_batch), leaves)
    u = potential.energy_node(cmap.to_raw_node(x_node))
    est = tape.mean(tape.neg(ldj) + u)
    return cutoff_node(est) if cutoff else est


# ----------------------------------------------------------------------
# optimizer
# ----------------------------------------------------------------------

class Adam:
    def __init__(self, params: list, lr: float, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads: list) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m += (1.0 - b1) * (g - m)
            v += (1.0 - b2) * (g * g - v)
            mhat = m / (1.0 - b1 ** self.t)
            vhat = v / (1.0 - b2 ** self.t)
            p -= self.lr * mhat / (np.sqrt(vhat) + self.eps)


# ----------------------------------------------------------------------
# training loop
# ----------------------------------------------------------------------

@dataclass
class TrainConfig:
    omega_n: float = 1.0
    omega_k: float = 0.0
    omega_f: float = 0.0
    normalize_weights: bool = False      # omega_n := 1 - omega_k - omega_f
    lr: float = 5e-4
    lr_decay_per_epoch: float = 1.0
    batch_size: int = 1000
    iterations: int = 2000
    seed: int = 0
    val_fraction: float = 0.1
    val_every: int = 100
    val_max: int = 2048
    kld_cutoff_enabled: bool = True
    rootfind: RootFindConfig = field(default_factory=lambda: RootFindConfig(bins=8, eps=1e-9))

    def __post_init__(self):
        if min(self.omega_n, self.omega_k, self.omega_f) < 0:
            raise ValueError("loss weights must be nonnegative")
        if self.normalize_weights:
            object.__setattr__(self, "omega_n", 1.0 - self.omega_k - self.omega_f)
            if self.omega_n < 0:
                raise ValueError("omega_k + omega_f exceed 1 with normalized weights")


@dataclass
class TrainResult:
    model: FlowModel
    metrics: list                 # per-iteration dict rows
    validation: list              # periodic dict rows
    best_val_loss: float
    best_checkpoint: dict         # model JSON at the best validation loss
    final_val: dict


def _metric_row_to_csv(row, keys):
    return ",".join(repr(float(row[k])) if k != "iter" else str(row[k]) for k in keys)


def validation_metrics(model: FlowModel, x_val, f_val) -> dict:
    x_leaf = Node(x_val)
    logp = model.log_density_graph(x_leaf)
    nll = float(np.mean(-logp.value))
    force = tape.grad(tape.sum_(logp), x_leaf)
    resid = f_val - force.value
    fme = float(np.mean(np.sum(resid * resid, axis=1)))
    return {"val_nll": nll, "val_fme": fme}


def split_indices(n: int, seed: int, val_fraction: float = 0.1):
    """Deterministic train/validation split (validation first)."""
    perm = np.random.default_rng(seed).permutation(n)
    n_val = max(1, int(round(val_fraction * n)))
    return perm[n_val:], perm[:n_val]


def train(model: FlowModel, dataset: Dataset, cfg: TrainConfig,
          out_dir: str | None = None) -> TrainResult:
    """Optimize the model on the dataset; returns metrics and the best
    validation checkpoint. Deterministic per cfg.seed."""
    rng = np.random.default_rng(cfg.seed)
    rng.permutation(dataset.n)  # keep the stream aligned with split_indices
    model.rootcfg = cfg.rootfind
    train_idx, val_idx = split_indices(dataset.n, cfg.seed, cfg.val_fraction)
    x_val = dataset.x[val_idx][: cfg.val_max]
    f_val = dataset.force[val_idx][: cfg.val_max]
    potential = dataset.potential()
    cmap = dataset.cube_map()

    params = model.param_arrays()
    opt = Adam(params, cfg.lr)
    iters_per_epoch = max(1, train_idx.size // cfg.batch_size)

    metrics, validation = [], []
    best_val_loss = np.inf
    best_checkpoint = model.to_json()
    use_kld = cfg.omega_k > 0

    for it in range(1, cfg.iterations + 1):
        idx = train_idx[rng.integers(0, train_idx.size, size=cfg.batch_size)]
        xb, fb = dataset.x[idx], dataset.force[idx]
        leaves = model.param_leaves()

        # one density graph serves the likelihood term, the force-matching
        # term, and the per-iteration force-error metric; when forces are
        # not part of the loss the metric is estimated on a subsample
        x_leaf = Node(xb)
        logp = model.log_density_graph(x_leaf, leaves)
        nll = tape.neg(tape.mean(logp))
        loss = None
        if cfg.omega_n > 0:
            loss = cfg.omega_n * nll
        if cfg.omega_f > 0:
            force = tape.grad(tape.sum_(logp), x_leaf)
            resid = Node(fb) - force
            fme = tape.mean(tape.sum_(resid * resid, axis=1))
            term = cfg.omega_f * fme
            loss = term if loss is None else loss + term
            fme_value = float(fme.value)
        else:
            k = min(cfg.batch_size, 256)
            xs_leaf = Node(xb[:k])
            logp_s = model.log_density_graph(xs_leaf, leaves)
            force_s = tape.grad(tape.sum_(logp_s), xs_leaf)
            resid_s = fb[:k] - force_s.value
            fme_value = float(np.mean(np.sum(resid_s * resid_s, axis=1)))
        row = {"iter": it, "nll": float(nll.value), "fme": fme_value}
        if use_kld:
            z = rng.uniform(0.0, 1.0, size=(cfg.batch_size, model.dim))
            kld = loss_kld_node(model, potential, cmap, z, leaves,
                                cutoff=cfg.kld_cutoff_enabled)
            row["kld"] = float(kld.value)
            term = cfg.omega_k * kld
            loss = term if loss is None else loss + term
        if loss is None:
            raise ValueError("all loss weights are zero")

        for name in ("nll", "fme", "kld"):
            if name in row and not np.isfinite(row[name]):
                raise TrainingDiverged(it, name, row[name])

        grads = [g.value for g in tape.grad(loss, leaves)]
        gnorm = float(np.sqrt(sum(np.sum(g * g) for g in grads)))
        if not np.isfinite(gnorm):
            raise TrainingDiverged(it, "grad_norm", gnorm)
        row["grad_norm"] = gnorm
        metrics.append(row)
        opt.step(grads)

        if it % iters_per_epoch == 0 and cfg.lr_decay_per_epoch != 1.0:
            opt.lr *= cfg.lr_decay_per_epoch

        if it % cfg.val_every == 0 or it == cfg.iterations:
            vrow = {"iter": it}
            vrow.update(validation_metrics(model, x_val, f_val))
            vloss = cfg.omega_n * vrow["val_nll"] + cfg.omega_f * vrow["val_fme"]
            vrow["val_loss"] = vloss
            validation.append(vrow)
            if vloss < best_val_loss:
                best_val_loss = vloss
                best_checkpoint = model.to_json()

    final_val = validation[-1] if validation else {}
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        keys = ["iter", "nll", "fme"] + (["kld"] if use_kld else []) + ["grad_norm"]
        with open(os.path.join(out_dir, "metrics.csv"), "w") as fh:
            fh.write(",".join(keys) + "\n")
            for row in metrics:
                fh.write(_metric_row_to_csv(row, keys) + "\n")
        vkeys = ["iter", "val_nll", "val_fme", "val_loss"]
        with open(os.path.join(out_dir, "validation.csv"), "w") as fh:
            fh.write(",".join(vkeys) + "\n")
            for row in validation:
                fh.write(_metric_row_to_csv(row, vkeys) + "\n")
        with open(os.path.join(out_dir, "checkpoint.json"), "w") as fh:
            json.dump(best_checkpoint, fh)
            fh.write("\n")
    return TrainResult(model, metrics, validation, best_val_loss, best_checkpoint, final_val)


# ----------------------------------------------------------------------
# evaluation metrics
# ----------------------------------------------------------------------

def kish_efficiency(log_weights: np.ndarray) -> float:
    """(sum w)^2 / (n sum w^2) for w = exp(log_weights), scale-invariant."""
    lw = np.asarray(log_weights, dtype=np.float64)
    lw = lw - np.max(lw)
    w = np.exp(lw)
    return float(np.sum(w) ** 2 / (lw.size * np.sum(w * w)))


def evaluate(model: FlowModel, dataset: Dataset, n_model_samples: int = 4096,
             seed: int = 0) -> dict:
    """Test metrics: NLL, FME, reverse KLD estimate, sampling efficiency."""
    potential = dataset.potential()
    cmap = dataset.cube_map()
    out = validation_metrics(model, dataset.x, dataset.force)
    metrics = {"nll": out["val_nll"], "fme": out["val_fme"]}
    xs, logp = model.sample(n_model_samples, seed=seed)
    u, _ = potential.energy_force(cmap.to_raw(xs))
    metrics["kld_vs_potential"] = float(np.mean(logp + u))
    metrics["sampling_efficiency"] = kish_efficiency(-u - logp)
    return metrics
