"""Command-line entry point.

Subcommands: gen-data, train, eval, mdsim, bench-rootfind, export-grid.
JSON configs are schema-validated (unknown keys rejected) before any
work happens. Machine-readable results go to files; stdout carries a
short human summary. Exit codes: 0 success, 2 usage or configuration
error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

CONFIG_VERSION = 1

_POTENTIAL_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "kind": {"enum": ["ring", "periodic", "flat"]},
        "sigma": {"type": "number", "exclusiveMinimum": 0},
        "alphas": {"type": "array", "items": {"type": "number"}},
        "radii": {"type": "array", "items": {"type": "number"}},
        "box": {"type": "array", "items": {"type": "array",
                                           "items": {"type": "number"},
                                           "minItems": 2, "maxItems": 2}},
    },
    "required": ["kind"],
}

_ROOTFIND_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "bins": {"type": "integer", "minimum": 2},
        "eps": {"type": "number", "exclusiveMinimum": 0},
        "max_iter": {"type": "integer", "minimum": 1},
    },
}

GEN_DATA_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "version": {"const": CONFIG_VERSION},
        "seed": {"type": "integer"},
        "potential": _POTENTIAL_SCHEMA,
        "dataset": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "n_chains": {"type": "integer", "minimum": 1},
                "burn_steps": {"type": "integer", "minimum": 0},
                "collect_steps": {"type": "integer", "minimum": 1},
                "proposal_std": {"type": "number", "exclusiveMinimum": 0},
                "pad": {"type": "number", "minimum": 0, "exclusiveMaximum": 0.5},
            },
        },
    },
    "required": ["version", "potential"],
}

TRAIN_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "version": {"const": CONFIG_VERSION},
        "seed": {"type": "integer"},
        "model": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "n_layers": {"type": "integer", "minimum": 1},
                "n_components": {"type": "integer", "minimum": 1},
                "ramp": {"enum": ["exponential", "monomial"]},
                "shape": {"type": "number", "minimum": 1},
                "hidden": {"type": "array", "items": {"type": "integer", "minimum": 1}},
                "activation": {"enum": ["swish", "sin", "tanh"]},
                "n_frequencies": {"type": "integer", "minimum": 1},
                "direction": {"enum": ["forward", "inverse"]},
                "domain": {"enum": ["interval", "circle"]},
            },
        },
        "train": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "omega_n": {"type": "number", "minimum": 0},
                "omega_k": {"type": "number", "minimum": 0},
                "omega_f": {"type": "number", "minimum": 0},
                "normalize_weights": {"type": "boolean"},
                "lr": {"type": "number", "exclusiveMinimum": 0},
                "lr_decay_per_epoch": {"type": "number", "exclusiveMinimum": 0},
                "batch_size": {"type": "integer", "minimum": 1},
                "iterations": {"type": "integer", "minimum": 1},
                "val_every": {"type": "integer", "minimum": 1},
                "val_fraction": {"type": "number", "exclusiveMinimum": 0,
                                 "exclusiveMaximum": 1},
                "val_max": {"type": "integer", "minimum": 1},
                "kld_cutoff": {"type": "boolean"},
            },
        },
        "rootfind": _ROOTFIND_SCHEMA,
    },
    "required": ["version"],
}

MD_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "version": {"const": CONFIG_VERSION},
        "seed": {"type": "integer"},
        "md": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "dt": {"type": "number", "exclusiveMinimum": 0},
                "auto_dt": {"type": "boolean"},
                "dt0": {"type": "number", "exclusiveMinimum": 0},
                "equil_steps": {"type": "integer", "minimum": 0},
                "prod_steps": {"type": "integer", "minimum": 1},
                "friction": {"type": "number", "minimum": 0},
                "kT": {"type": "number", "minimum": 0},
                "replicas": {"type": "integer", "minimum": 1},
                "masses": {"type": "number", "exclusiveMinimum": 0},
            },
            "required": ["prod_steps"],
        },
    },
    "required": ["version", "md"],
}


class ConfigError(ValueError):
    pass


def _load_config(path: str, schema: dict) -> dict:
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    import jsonschema

    try:
        jsonschema.validate(cfg, schema)
    except jsonschema.ValidationError as exc:
        raise ConfigError(f"config {path} invalid: {exc.message}") from exc
    return cfg


def _potential_from_config(section: dict):
    from .targets import ToyPotential

    base = {"ring": ToyPotential.ring, "periodic": ToyPotential.periodic,
            "flat": ToyPotential.flat}[section["kind"]]()
    kw = base.to_json()
    for key in ("sigma", "alphas", "radii", "box"):
        if key in section:
            kw[key] = section[key]
    return ToyPotential.from_json(kw)


def _rootcfg_from_config(section: dict):
    from .rootfind import RootFindConfig

    return RootFindConfig(bins=section.get("bins", 8),
                          eps=section.get("eps", 1e-9),
                          max_iter=section.get("max_iter", 200))


# ----------------------------------------------------------------------
# subcommands
# ----------------------------------------------------------------------

def cmd_gen_data(args) -> int:
    from .training import generate_dataset

    cfg = _load_config(args.config, GEN_DATA_SCHEMA)
    seed = args.seed if args.seed is not None else cfg.get("seed", 0)
    ds_cfg = cfg.get("dataset", {})
    potential = _potential_from_config(cfg["potential"])
    dataset = generate_dataset(
        potential,
        n_chains=ds_cfg.get("n_chains", 1000),
        burn_steps=ds_cfg.get("burn_steps", 100),
        collect_steps=ds_cfg.get("collect_steps", 10),
        proposal_std=ds_cfg.get("proposal_std", 0.1),
        seed=seed,
        pad=ds_cfg.get("pad", 0.05),
    )
    dataset.save(args.out)
    print(f"wrote {dataset.n} samples to {args.out}")
    return 0


def cmd_train(args) -> int:
    from .flow import build_model
    from .training import Dataset, TrainConfig, TrainingDiverged, train

    cfg = _load_config(args.config, TRAIN_SCHEMA)
    seed = args.seed if args.seed is not None else cfg.get("seed", 0)
    dataset = Dataset.load(args.data)
    m_cfg = cfg.get("model", {})
    t_cfg = cfg.get("train", {})
    rootcfg = _rootcfg_from_config(cfg.get("rootfind", {}))
    domain = m_cfg.get("domain", "interval")
    rng = np.random.default_rng(seed)
    model = build_model(
        dim=dataset.x.shape[1],
        domain_tags=(domain,) * dataset.x.shape[1],
        n_layers=m_cfg.get("n_layers", 4),
        rng=rng,
        n_components=m_cfg.get("n_components", 40),
        ramp=m_cfg.get("ramp", "exponential"),
        shape=m_cfg.get("shape", 2.0),
        hidden=tuple(m_cfg.get("hidden", [100, 100])),
        activation=m_cfg.get("activation", "swish"),
        n_frequencies=m_cfg.get("n_frequencies", 3),
        direction=m_cfg.get("direction", "forward"),
        rootcfg=rootcfg,
    )
    train_cfg = TrainConfig(
        omega_n=t_cfg.get("omega_n", 1.0),
        omega_k=t_cfg.get("omega_k", 0.0),
        omega_f=t_cfg.get("omega_f", 0.0),
        normalize_weights=t_cfg.get("normalize_weights", False),
        lr=t_cfg.get("lr", 5e-4),
        lr_decay_per_epoch=t_cfg.get("lr_decay_per_epoch", 1.0),
        batch_size=t_cfg.get("batch_size", 1000),
        iterations=t_cfg.get("iterations", 2000),
        seed=seed,
        val_every=t_cfg.get("val_every", 100),
        val_fraction=t_cfg.get("val_fraction", 0.1),
        val_max=t_cfg.get("val_max", 2048),
        kld_cutoff_enabled=t_cfg.get("kld_cutoff", True),
        rootfind=rootcfg,
    )
    try:
        result = train(model, dataset, train_cfg, out_dir=args.out)
    except TrainingDiverged as exc:
        print(f"training aborted: {exc}", file=sys.stderr)
        return 3
    final = result.final_val
    print(f"final validation NLL {final.get('val_nll'):.6f} "
          f"FME {final.get('val_fme'):.6f}")
    print(f"artifacts in {args.out}")
    return 0


def cmd_eval(args) -> int:
    from .flow import FlowModel
    from .training import Dataset, evaluate

    model = FlowModel.load(args.model)
    dataset = Dataset.load(args.data)
    metrics = evaluate(model, dataset, n_model_samples=args.samples, seed=args.seed or 0)
    text = json.dumps(metrics, indent=1, sort_keys=True)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
        print(f"wrote metrics to {args.out}")
    else:
        print(text)
    return 0


def cmd_mdsim(args) -> int:
    from .dynamics import (AnalyticPotential, FlowPotential, run_md,
                           stable_timestep, trajectory_to_csv)

    cfg = _load_config(args.md_config, MD_SCHEMA)
    seed = args.seed if args.seed is not None else cfg.get("seed", 0)
    md = cfg["md"]
    if (args.model is None) == (args.potential_config is None):
        raise ConfigError("give exactly one of --model or --potential-config")
    rng = np.random.default_rng(seed)
    replicas = md.get("replicas", 10)
    if args.model:
        from .flow import FlowModel

        model = FlowModel.load(args.model)
        potential = FlowPotential(model)
        if args.data:
            from .training import Dataset

            x0 = Dataset.load(args.data).x[:replicas]
        else:
            x0, _ = model.sample(replicas, rng=rng)
    else:
        pot_cfg = _load_config(args.potential_config, {
            "type": "object", "additionalProperties": False,
            "properties": {"version": {"const": CONFIG_VERSION},
                           "potential": _POTENTIAL_SCHEMA},
            "required": ["version", "potential"]})
        toy = _potential_from_config(pot_cfg["potential"])
        potential = AnalyticPotential(toy)
        lo = np.array([b[0] for b in toy.box])
        hi = np.array([b[1] for b in toy.box])
        x0 = lo + (hi - lo) * rng.uniform(0.3, 0.7, size=(replicas, 2))
    kT = md.get("kT", 1.0)
    masses = md.get("masses", 1.0)
    if md.get("auto_dt", False):
        dt = stable_timestep(potential, x0, md.get("dt0", 1e-2), kT=kT,
                             masses=masses, seed=seed)
    else:
        if "dt" not in md:
            raise ConfigError("md.dt required unless auto_dt is on")
        dt = md["dt"]
    rows = run_md(potential, x0, dt,
                  equil_steps=md.get("equil_steps", 1000),
                  prod_steps=md["prod_steps"],
                  friction=md.get("friction", 1.0), kT=kT, masses=masses,
                  seed=seed)
    os.makedirs(os.path.dirname(args.out) or ".", exist_ok=True)
    trajectory_to_csv(rows, args.out)
    te = rows["te"].reshape(-1, len(np.unique(rows["replica"])))
    print(f"dt {dt}; per-DOF total-energy std "
          f"{float(np.mean(np.std(te, axis=0))) / rows['x'].shape[1]:.3e}")
    print(f"wrote trajectory to {args.out}")
    return 0


def cmd_bench_rootfind(args) -> int:
    from .kernels import backend_name
    from .rootfind import bench_rootfind

    dims = [int(v) for v in args.dims.split(",")]
    bins_list = [int(v) for v in args.bins.split(",")]
    rows = bench_rootfind(dims, bins_list, args.batch, args.reps,
                          eps=args.eps, seed=args.seed or 0,
                          backend=args.backend, timing=not args.no_wallclock)
    lines = ["dim,K,batch,mean_iters,mean_ms,std_ms"]
    for dim, K, batch, iters, mean_ms, std_ms in rows:
        lines.append(f"{dim},{K},{batch},{repr(iters)},{repr(mean_ms)},{repr(std_ms)}")
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
        print(f"wrote benchmark ({backend_name() if args.backend == 'active' else args.backend} "
              f"backend) to {args.out}")
    else:
        print(text, end="")
    return 0


def cmd_export_grid(args) -> int:
    if (args.model is None) == (args.potential_config is None):
        raise ConfigError("give exactly one of --model or --potential-config")
    r = args.resolution
    if args.model:
        from .flow import FlowModel

        model = FlowModel.load(args.model)
        ticks = np.linspace(0.0, 1.0, r)
        g1, g2 = np.meshgrid(ticks, ticks, indexing="ij")
        pts = np.stack([g1.ravel(), g2.ravel()], axis=1)
        logp = model.log_density(pts)
        forces = np.empty_like(pts)
        for i in range(0, pts.shape[0], 65536):
            forces[i : i + 65536] = model.force(pts[i : i + 65536])
        header = "x1,x2,log_density,f1,f2"
        cols = np.column_stack([pts, logp, forces])
    else:
        pot_cfg = _load_config(args.potential_config, {
            "type": "object", "additionalProperties": False,
            "properties": {"version": {"const": CONFIG_VERSION},
                           "potential": _POTENTIAL_SCHEMA},
            "required": ["version", "potential"]})
        toy = _potential_from_config(pot_cfg["potential"])
        lo = [b[0] for b in toy.box]
        hi = [b[1] for b in toy.box]
        t1 = np.linspace(lo[0], hi[0], r)
        t2 = np.linspace(lo[1], hi[1], r)
        g1, g2 = np.meshgrid(t1, t2, indexing="ij")
        pts = np.stack([g1.ravel(), g2.ravel()], axis=1)
        u, forces = toy.energy_force(pts)
        header = "x1,x2,energy,f1,f2"
        cols = np.column_stack([pts, u, forces])
    with open(args.out, "w") as fh:
        fh.write(header + "\n")
        for row in cols:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")
    print(f"wrote {cols.shape[0]} grid rows to {args.out}")
    return 0


# ----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="bumpflows",
        description="Smooth mixture flows on compact domains: data generation, "
                    "training, evaluation, dynamics, and benchmarks. "
                    f"Config schema version: {CONFIG_VERSION}.")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="sample a toy potential into a dataset")
    g.add_argument("--config", required=True)
    g.add_argument("--out", required=True)
    g.add_argument("--seed", type=int, default=None)
    g.set_defaults(fn=cmd_gen_data)

    t = sub.add_parser("train", help="train a flow on a dataset")
    t.add_argument("--config", required=True)
    t.add_argument("--data", required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--seed", type=int, default=None)
    t.set_defaults(fn=cmd_train)

    e = sub.add_parser("eval", help="test metrics for a checkpoint")
    e.add_argument("--model", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--out", default=None)
    e.add_argument("--samples", type=int, default=4096)
    e.add_argument("--seed", type=int, default=None)
    e.set_defaults(fn=cmd_eval)

    m = sub.add_parser("mdsim", help="run dynamics in a flow or toy potential")
    m.add_argument("--model", default=None)
    m.add_argument("--potential-config", default=None)
    m.add_argument("--md-config", required=True)
    m.add_argument("--data", default=None)
    m.add_argument("--out", required=True)
    m.add_argument("--seed", type=int, default=None)
    m.set_defaults(fn=cmd_mdsim)

    b = sub.add_parser("bench-rootfind", help="inversion iteration/time table")
    b.add_argument("--dims", default="2")
    b.add_argument("--bins", default="2,4,16,64")
    b.add_argument("--batch", type=int, default=1024)
    b.add_argument("--reps", type=int, default=3)
    b.add_argument("--eps", type=float, default=1e-10)
    b.add_argument("--backend", default="active",
                   choices=["active", "python", "compiled"])
    b.add_argument("--no-wallclock", action="store_true",
                   help="zero the timing columns (deterministic output)")
    b.add_argument("--out", default=None)
    b.add_argument("--seed", type=int, default=None)
    b.set_defaults(fn=cmd_bench_rootfind)

    x = sub.add_parser("export-grid", help="density/energy and force grid CSV")
    x.add_argument("--model", default=None)
    x.add_argument("--potential-config", default=None)
    x.add_argument("--resolution", type=int, default=64)
    x.add_argument("--out", required=True)
    x.add_argument("--seed", type=int, default=None)
    x.set_defaults(fn=cmd_export_grid)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"missing file: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failures map to exit 3
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
