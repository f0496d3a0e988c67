"""Symplectic dynamics driven by analytic or flow potentials.

One integrator core (BAOAB splitting) serves both samplers: with
friction or temperature at zero the O-substep is skipped entirely (no
random draws), which reduces the scheme to plain velocity Verlet
bit-for-bit. Replicas are integrated in parallel as rows of the state
arrays; a single trajectory is strictly sequential.

Reduced units throughout: unit masses and k_B T = 1 unless configured
otherwise.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np


@dataclass
class MDState:
    """Positions/velocities for a batch of replicas, plus cached forces."""

    x: np.ndarray                 # (R, d)
    v: np.ndarray                 # (R, d)
    masses: np.ndarray            # (d,)
    dt: float
    t: float = 0.0
    force: np.ndarray = None      # cached force at x
    pe: np.ndarray = None         # cached potential energy at x

    def __post_init__(self):
        self.x = np.atleast_2d(np.asarray(self.x, dtype=np.float64))
        self.v = np.atleast_2d(np.asarray(self.v, dtype=np.float64))
        self.masses = np.broadcast_to(np.asarray(self.masses, dtype=np.float64),
                                      (self.x.shape[1],)).copy()
        if np.any(self.masses <= 0):
            raise ValueError("masses must be positive")
        if not self.dt > 0:
            raise ValueError("dt must be positive")

    def kinetic(self) -> np.ndarray:
        return 0.5 * np.sum(self.masses * self.v ** 2, axis=1)


class HarmonicPotential:
    """u = 1/2 k |x - x0|^2; the standard conservation baseline."""

    def __init__(self, k: float = 1.0, center=0.0):
        self.k = k
        self.center = center

    def energy_force(self, x):
        d = np.asarray(x, dtype=np.float64) - self.center
        return 0.5 * self.k * np.sum(d * d, axis=1), -self.k * d

    def apply_boundaries(self, x, v):
        return x, v


class AnalyticPotential:
    """Adapter for toy shell potentials (raw coordinates, no boundaries)."""

    def __init__(self, potential):
        self.potential = potential

    def energy_force(self, x):
        return self.potential.energy_force(x)

    def apply_boundaries(self, x, v):
        return x, v


class FlowPotential:
    """u = -log p of a flow; forces are the exact density gradient.

    Positions live in the flow's unit cube: circle dimensions wrap
    modulo 1, interval dimensions reflect at the cube faces with a
    velocity flip.
    """

    def __init__(self, model):
        self.model = model

    def energy_force(self, x):
        return self.model.energy_force(x)

    def apply_boundaries(self, x, v):
        for j, tag in enumerate(self.model.domain_tags):
            if tag == "circle":
                x[:, j] = x[:, j] - np.floor(x[:, j])
            else:
                # fold into [0, 1]; an odd fold segment mirrors the velocity
                p = x[:, j] - 2.0 * np.floor(x[:, j] / 2.0)
                refl = p > 1.0
                x[:, j] = np.where(refl, 2.0 - p, p)
                v[:, j] = np.where(refl, -v[:, j], v[:, j])
        return x, v


def _ensure_cache(state: MDState, potential) -> MDState:
    if state.force is None or state.pe is None:
        pe, force = potential.energy_force(state.x)
        return replace(state, force=force, pe=pe)
    return state


def langevin_step(state: MDState, potential, friction: float, kT: float,
                  rng=None) -> MDState:
    """One BAOAB step. friction == 0 (or kT == 0) skips the noise draw,
    making the step identical to velocity Verlet."""
    if friction < 0 or kT < 0:
        raise ValueError("friction and temperature must be nonnegative")
    state = _ensure_cache(state, potential)
    dt = state.dt
    m = state.masses
    v = state.v + 0.5 * dt * state.force / m
    x = state.x + 0.5 * dt * v
    x, v = potential.apply_boundaries(x, v)
    if friction > 0.0 and kT > 0.0:
        if rng is None:
            raise ValueError("thermostatted step needs an rng")
        c1 = np.exp(-friction * dt)
        sigma = np.sqrt(kT * (1.0 - c1 * c1) / m)
        v = c1 * v + sigma * rng.standard_normal(v.shape)
    elif friction > 0.0:
        v = np.exp(-friction * dt) * v
    x = x + 0.5 * dt * v
    x, v = potential.apply_boundaries(x, v)
    pe, force = potential.energy_force(x)
    v = v + 0.5 * dt * force / m
    return MDState(x, v, m, dt, state.t + dt, force, pe)


def verlet_step(state: MDState, potential) -> MDState:
    """Energy-conserving update (BAOAB with the thermostat disabled)."""
    return langevin_step(state, potential, 0.0, 0.0)


def maxwell_boltzmann_velocities(rng, n_replicas: int, masses, kT: float):
    masses = np.atleast_1d(np.asarray(masses, dtype=np.float64))
    return rng.normal(0.0, np.sqrt(kT / masses), size=(n_replicas, masses.size))


def run_md(potential, x0, dt: float, equil_steps: int, prod_steps: int,
           friction: float = 1.0, kT: float = 1.0, masses=1.0, seed: int = 0,
           v0=None):
    """Langevin equilibration followed by an NVE production run.

    Returns a record array of production rows
    (replica, step, t, x..., v..., ke, pe, te). Initial velocities are
    Maxwell-Boltzmann at kT unless given.
    """
    x0 = np.atleast_2d(np.asarray(x0, dtype=np.float64))
    R, d = x0.shape
    rng = np.random.default_rng(seed)
    masses_arr = np.broadcast_to(np.asarray(masses, dtype=np.float64), (d,)).copy()
    if v0 is None:
        v0 = maxwell_boltzmann_velocities(rng, R, masses_arr, kT)
    state = MDState(x0.copy(), np.array(v0, dtype=np.float64, copy=True),
                    masses_arr, dt)

    if hasattr(potential, "model"):
        probe = state.x[:1].copy()
        pf = potential.energy_force(probe)[1]
        mf = potential.model.force(probe)
        if not np.array_equal(pf, mf):
            raise AssertionError("integrator force path diverged from the flow force")

    for _ in range(equil_steps):
        state = langevin_step(state, potential, friction, kT, rng)

    rows = np.empty((prod_steps + 1) * R, dtype=[
        ("replica", np.int64), ("step", np.int64), ("t", np.float64),
        ("x", np.float64, (d,)), ("v", np.float64, (d,)),
        ("ke", np.float64), ("pe", np.float64), ("te", np.float64)])

    def record(step, state, base):
        state = _ensure_cache(state, potential)
        ke = state.kinetic()
        for r in range(R):
            i = base + r
            rows[i] = (r, step, state.t, state.x[r], state.v[r],
                       ke[r], state.pe[r], ke[r] + state.pe[r])
        return state

    state = replace(state, t=0.0)
    state = record(0, state, 0)
    for step in range(1, prod_steps + 1):
        state = verlet_step(state, potential)
        record(step, state, step * R)
    return rows


def trajectory_to_csv(rows, path) -> None:
    d = rows["x"].shape[1]
    header = (["replica", "step", "t"] + [f"x{j+1}" for j in range(d)]
              + [f"v{j+1}" for j in range(d)] + ["ke", "pe", "te"])
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            vals = ([str(row["replica"]), str(row["step"]), repr(float(row["t"]))]
                    + [repr(float(v)) for v in row["x"]]
                    + [repr(float(v)) for v in row["v"]]
                    + [repr(float(row["ke"])), repr(float(row["pe"])), repr(float(row["te"]))])
            fh.write(",".join(vals) + "\n")


def stable_timestep(potential, x0, dt0: float, kT: float = 1.0, masses=1.0,
                    target_std_per_dof: float = 1e-3, probe_steps: int = 400,
                    max_halvings: int = 12, seed: int = 0) -> float:
    """Halve dt until a short NVE probe keeps the per-DOF total-energy
    standard deviation at or below the target."""
    dt = float(dt0)
    x0 = np.atleast_2d(np.asarray(x0, dtype=np.float64))
    for _ in range(max_halvings + 1):
        # an unstable probe overflows; that counts as a failed candidate
        with np.errstate(over="ignore", invalid="ignore"):
            rows = run_md(potential, x0, dt, equil_steps=50, prod_steps=probe_steps,
                          friction=1.0, kT=kT, masses=masses, seed=seed)
            te = rows["te"].reshape(probe_steps + 1, x0.shape[0])
            std = float(np.mean(np.std(te, axis=0))) / x0.shape[1]
        if np.isfinite(std) and std <= target_std_per_dof:
            return dt
        dt *= 0.5
    raise RuntimeError(f"no stable timestep found down to {dt}")
