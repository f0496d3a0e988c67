"""Figure scripts render the documented schemas and reject malformed input."""

import subprocess
import sys

import numpy as np
import pytest

from flowplots import SchemaError, plot_density_force, plot_energy_trace, plot_metrics
from flowplots.cli import main

PNG_MAGIC = b"\x89PNG"


def write_grid(path, n=8, column="log_density"):
    ticks = np.linspace(0.0, 1.0, n)
    rows = [f"x1,x2,{column},f1,f2"]
    for a in ticks:
        for b in ticks:
            v = -((a - 0.5) ** 2 + (b - 0.5) ** 2)
            rows.append(",".join(repr(float(u)) for u in (a, b, v, 0.5 - a, 0.5 - b)))
    path.write_text("\n".join(rows) + "\n")


def write_trajectory(path, replicas=10, steps=25):
    rows = ["replica,step,t,x1,x2,v1,v2,ke,pe,te"]
    rng = np.random.default_rng(0)
    for r in range(replicas):
        e0 = 1.0 + 0.1 * r
        for s in range(steps):
            te = e0 + 1e-3 * rng.normal()
            rows.append(f"{r},{s},{s * 0.01!r},0.1,0.2,0.0,0.0,0.5,{float(te - 0.5)!r},{float(te)!r}")
    path.write_text("\n".join(rows) + "\n")


def write_metrics(path, iters=40):
    rows = ["iter,nll,fme,grad_norm"]
    for i in range(1, iters + 1):
        rows.append(f"{i},{1.0 / i!r},{100.0 / i!r},{0.01 * i!r}")
    path.write_text("\n".join(rows) + "\n")


class TestDensityForce:
    def test_renders_fixture(self, tmp_path):
        src = tmp_path / "grid.csv"
        write_grid(src)
        out = tmp_path / "fig.png"
        plot_density_force(str(src), str(out))
        assert out.read_bytes()[:4] == PNG_MAGIC
        assert out.stat().st_size > 1000

    def test_energy_column_accepted(self, tmp_path):
        src = tmp_path / "grid.csv"
        write_grid(src, column="energy")
        out = tmp_path / "fig.png"
        plot_density_force(str(src), str(out))
        assert out.exists()

    def test_missing_column_named(self, tmp_path):
        src = tmp_path / "grid.csv"
        src.write_text("x1,x2,f1,f2\n0,0,0,0\n")
        with pytest.raises(SchemaError, match="log_density"):
            plot_density_force(str(src), str(tmp_path / "fig.png"))


class TestEnergyTrace:
    def test_single_replica(self, tmp_path):
        src = tmp_path / "traj.csv"
        write_trajectory(src, replicas=1)
        out = tmp_path / "fig.png"
        plot_energy_trace([str(src)], str(out))
        assert out.read_bytes()[:4] == PNG_MAGIC

    def test_ten_replicas(self, tmp_path):
        src = tmp_path / "traj.csv"
        write_trajectory(src, replicas=10)
        out = tmp_path / "fig.png"
        plot_energy_trace([str(src)], str(out))
        assert out.exists()

    def test_empty_file_rejected(self, tmp_path):
        src = tmp_path / "traj.csv"
        src.write_text("")
        with pytest.raises(SchemaError, match="empty"):
            plot_energy_trace([str(src)], str(tmp_path / "fig.png"))

    def test_missing_te_column(self, tmp_path):
        src = tmp_path / "traj.csv"
        src.write_text("replica,step,t,x1\n0,0,0.0,0.1\n")
        with pytest.raises(SchemaError, match="'te'"):
            plot_energy_trace([str(src)], str(tmp_path / "fig.png"))


class TestMetrics:
    def test_renders(self, tmp_path):
        src = tmp_path / "metrics.csv"
        write_metrics(src)
        out = tmp_path / "fig.png"
        plot_metrics(str(src), str(out))
        assert out.read_bytes()[:4] == PNG_MAGIC

    def test_requires_iter(self, tmp_path):
        src = tmp_path / "metrics.csv"
        src.write_text("step,nll\n1,0.5\n")
        with pytest.raises(SchemaError, match="'iter'"):
            plot_metrics(str(src), str(tmp_path / "fig.png"))


class TestCli:
    def test_all_kinds(self, tmp_path):
        grid = tmp_path / "grid.csv"
        traj = tmp_path / "traj.csv"
        metrics = tmp_path / "metrics.csv"
        write_grid(grid)
        write_trajectory(traj, replicas=3)
        write_metrics(metrics)
        assert main(["density-force", "--in", str(grid),
                     "--out", str(tmp_path / "a.png")]) == 0
        assert main(["energy-trace", "--in", str(traj),
                     "--out", str(tmp_path / "b.png")]) == 0
        assert main(["metrics", "--in", str(metrics),
                     "--out", str(tmp_path / "c.png")]) == 0

    def test_malformed_exit_code(self, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("x1,x2\n0,0\n")
        out = subprocess.run([sys.executable, "-m", "flowplots.cli", "density-force",
                              "--in", str(bad), "--out", str(tmp_path / "x.png")],
                             capture_output=True, text=True)
        assert out.returncode == 2
        assert "f1" in out.stderr
