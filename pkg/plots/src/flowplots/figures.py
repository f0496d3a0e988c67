"""Figure builders over the documented CSV schemas.

These scripts are read-only consumers of the simulator's file formats;
they never import the simulation package itself. Each reader validates
the columns it needs and reports the first missing one by name.
"""

from __future__ import annotations

import csv

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


class SchemaError(ValueError):
    """Input file does not carry a required column."""


def _read_csv(path: str, required: list) -> dict:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file") from None
        rows = [row for row in reader if row]
    for col in required:
        if col not in header:
            raise SchemaError(f"{path}: missing column {col!r}")
    if not rows:
        raise SchemaError(f"{path}: no data rows")
    data = np.asarray(rows, dtype=np.float64)
    return {name: data[:, i] for i, name in enumerate(header)}


def plot_density_force(grid_csv: str, out_path: str, quiver_step: int = 4) -> None:
    """Heatmap of a density/energy grid with a force quiver overlay.

    Accepts the export-grid schema with either a ``log_density`` or an
    ``energy`` value column. The heatmap shows log-scaled population,
    i.e. log density directly, or minus the energy.
    """
    cols = _read_csv(grid_csv, ["x1", "x2", "f1", "f2"])
    if "log_density" in cols:
        value = cols["log_density"]
        label = "log density"
    elif "energy" in cols:
        value = -cols["energy"]
        label = "-energy"
    else:
        raise SchemaError(f"{grid_csv}: missing column 'log_density' (or 'energy')")
    x1, x2 = cols["x1"], cols["x2"]
    n1, n2 = np.unique(x1).size, np.unique(x2).size
    if n1 * n2 != x1.size:
        raise SchemaError(f"{grid_csv}: rows do not form a full tensor grid")
    shape = (n1, n2)

    fig, ax = plt.subplots(figsize=(6.0, 5.0))
    im = ax.pcolormesh(x1.reshape(shape), x2.reshape(shape), value.reshape(shape),
                       shading="auto", cmap="viridis")
    fig.colorbar(im, ax=ax, label=label)
    s = max(1, quiver_step)
    sub = (slice(None, None, s), slice(None, None, s))
    ax.quiver(x1.reshape(shape)[sub], x2.reshape(shape)[sub],
              cols["f1"].reshape(shape)[sub], cols["f2"].reshape(shape)[sub],
              color="white", width=2.5e-3, alpha=0.8)
    ax.set_xlabel("x1")
    ax.set_ylabel("x2")
    ax.set_title("density and force field")
    fig.tight_layout()
    fig.savefig(out_path, dpi=110)
    plt.close(fig)


def plot_energy_trace(trajectory_csvs: list, out_path: str) -> None:
    """Total-energy traces per replica: all runs in grey, the first
    replica of the first file highlighted in black."""
    if not trajectory_csvs:
        raise SchemaError("no trajectory files given")
    fig, ax = plt.subplots(figsize=(7.0, 4.0))
    highlight = None
    for path in trajectory_csvs:
        cols = _read_csv(path, ["replica", "step", "t", "te"])
        for r in np.unique(cols["replica"]):
            mask = cols["replica"] == r
            t = cols["t"][mask]
            te = cols["te"][mask]
            if highlight is None:
                highlight = (t, te)
                continue
            ax.plot(t, te, color="0.65", lw=0.8)
    if highlight is not None:
        ax.plot(highlight[0], highlight[1], color="black", lw=1.4)
    ax.set_xlabel("time")
    ax.set_ylabel("total energy")
    ax.set_title("total energy per replica")
    fig.tight_layout()
    fig.savefig(out_path, dpi=110)
    plt.close(fig)


def plot_metrics(metrics_csv: str, out_path: str) -> None:
    """Training curves: every numeric column against the iteration index."""
    cols = _read_csv(metrics_csv, ["iter"])
    series = [name for name in cols if name != "iter"]
    if not series:
        raise SchemaError(f"{metrics_csv}: no metric columns besides 'iter'")
    fig, axes = plt.subplots(len(series), 1, figsize=(6.5, 2.2 * len(series)),
                             sharex=True, squeeze=False)
    for ax, name in zip(axes[:, 0], series):
        ax.plot(cols["iter"], cols[name], lw=0.9)
        ax.set_ylabel(name)
        if np.all(cols[name] > 0) and np.max(cols[name]) / max(np.min(cols[name]), 1e-300) > 50:
            ax.set_yscale("log")
    axes[-1, 0].set_xlabel("iteration")
    fig.tight_layout()
    fig.savefig(out_path, dpi=110)
    plt.close(fig)
