"""Vectorized multi-bin bracketing search for monotone maps.

Each iteration splits every active bracket into K equal bins, evaluates
the map on the full (batch x K+1) grid in one call, and keeps the bin
containing the sign change, so the bracket shrinks by a factor K per
iteration (classic bisection at K = 2, fewer iterations by a factor
log K otherwise, at K-fold memory cost).

Termination per element, whichever happens first:

* residual hit: |f(s_k) - y| <= eps at the selected left edge, which is
  then returned;
* width floor: the new bracket is narrower than
  eps * width0 / max(1, local slope), and the midpoint is returned. The
  slope factor keeps the midpoint residual at or below eps * width0 for
  steep maps; for slopes <= 1 the floor equals eps * width0.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

BRACKET_SLACK = 1e-9


@dataclass(frozen=True)
class RootFindConfig:
    bins: int = 16
    eps: float = 1e-10
    max_iter: int = 200
    bracket: tuple = (0.0, 1.0)

    def __post_init__(self):
        if self.bins < 2:
            raise ValueError("need at least 2 bins")
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        if not self.bracket[0] < self.bracket[1]:
            raise ValueError("bracket must have lo < hi")


class TargetOutOfBracket(ValueError):
    """Targets outside [f(lo), f(hi)] beyond the allowed slack."""

    def __init__(self, indices, values):
        self.indices = np.asarray(indices)
        self.values = np.asarray(values)
        super().__init__(
            f"{self.indices.size} target(s) outside bracket range, "
            f"first at index {self.indices.flat[0]}")


class NotConverged(RuntimeError):
    """Iteration cap reached; carries best iterates, residuals, brackets."""

    def __init__(self, x, residual, indices, lo, hi):
        self.x = x
        self.residual = residual
        self.indices = indices
        self.lo = lo
        self.hi = hi
        best = np.min(np.abs(residual[indices])) if indices.size else np.nan
        super().__init__(
            f"{indices.size} element(s) not converged, "
            f"best remaining residual {best:.3e}")


@dataclass
class RootFindInfo:
    iterations: np.ndarray
    residual: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    n_grid_evals: int


def multibin_invert(f, y, cfg: RootFindConfig = RootFindConfig(), return_info: bool = False):
    """Solve f(x) = y elementwise for a strictly increasing ``f``.

    ``f(s, rows)`` receives a grid of candidate points, one row per
    still-active batch element, together with the indices of those rows
    in the original batch (so per-element parameters can be sliced).
    """
    y = np.asarray(y, dtype=np.float64)
    m = y.shape[0]
    K = cfg.bins
    lo = np.full(m, float(cfg.bracket[0]))
    hi = np.full(m, float(cfg.bracket[1]))
    width0 = float(cfg.bracket[1] - cfg.bracket[0])
    x = np.empty(m)
    resid = np.full(m, np.inf)
    iters = np.zeros(m, dtype=np.int64)
    active = np.arange(m)
    frac = np.arange(K + 1, dtype=np.float64) / K
    n_evals = 0

    for it in range(1, cfg.max_iter + 1):
        s = lo[active, None] + (hi[active] - lo[active])[:, None] * frac[None, :]
        s[:, 0] = lo[active]
        s[:, -1] = hi[active]
        v = np.asarray(f(s, active), dtype=np.float64) - y[active, None]
        n_evals += s.size

        if it == 1:
            bad = (v[:, 0] > BRACKET_SLACK) | (v[:, -1] < -BRACKET_SLACK)
            if np.any(bad):
                raise TargetOutOfBracket(active[bad], y[active[bad]])

        sign = (v[:, :-1] <= 0.0) & (v[:, 1:] > 0.0)
        has = sign.any(axis=1)
        k = np.argmax(sign, axis=1)
        # no sign change: target pinned at an edge within slack
        k = np.where(has, k, np.where(v[:, 0] > 0.0, 0, K - 1))

        rows = np.arange(active.size)
        sk = s[rows, k]
        sk1 = s[rows, k + 1]
        vk = v[rows, k]
        vk1 = v[rows, k + 1]

        hit = np.abs(vk) <= cfg.eps
        width = sk1 - sk
        slope = np.where(width > 0.0, (vk1 - vk) / np.where(width > 0.0, width, 1.0), np.inf)
        floor = cfg.eps * width0 / np.maximum(1.0, slope)
        narrow = ~hit & (width <= floor)

        done = hit | narrow
        idx = active[done]
        x[idx] = np.where(hit[done], sk[done], 0.5 * (sk[done] + sk1[done]))
        resid[active] = np.abs(vk)
        iters[idx] = it
        lo[active] = sk
        hi[active] = sk1
        active = active[~done]
        if active.size == 0:
            break

    if active.size:
        best = x.copy()
        best[active] = 0.5 * (lo[active] + hi[active])
        raise NotConverged(best, resid, active, lo, hi)

    if return_info:
        return x, RootFindInfo(iters, resid, lo, hi, n_evals)
    return x


def invert_params(params, y, cfg: RootFindConfig = RootFindConfig(),
                  backend: str = "active", return_info: bool = False):
    """Invert a batch of mixture transforms (one parameter row per target,
    or a single shared row)."""
    y = np.asarray(y, dtype=np.float64)
    norms = params.norms(backend=backend)

    def f(s, rows):
        if rows.size == y.shape[0] or params.n_rows == 1:
            return params.values_grid(s, backend=backend, norms=norms)
        sub = params.take_rows(rows)
        nsub = (np.ascontiguousarray(norms[0][rows]), np.ascontiguousarray(norms[1][rows]))
        return sub.values_grid(s, backend=backend, norms=nsub)

    return multibin_invert(f, y, cfg, return_info=return_info)


def bench_rootfind(dims, bins_list, batch: int, reps: int, n_components: int = 8,
                   eps: float = 1e-10, seed: int = 0, backend: str = "active",
                   timing: bool = True):
    """Iteration counts and wall times for mixture inversion.

    Returns rows (dim, K, batch, mean_iters, mean_ms, std_ms). Iteration
    counts are deterministic; wall-clock columns are informative only
    and are zeroed when ``timing`` is off.
    """
    from .transforms import TransformerConfig, constrain

    rows = []
    for dim in dims:
        rng = np.random.default_rng(seed + dim)
        cfg_t = TransformerConfig(domain="interval", n_components=n_components)
        raw = rng.normal(size=(dim, cfg_t.param_count))
        raw_b = np.repeat(raw, batch, axis=0)                  # (batch*dim,)
        params = constrain(cfg_t, raw_b)
        y = rng.uniform(0.02, 0.98, size=batch * dim)
        for K in bins_list:
            cfg = RootFindConfig(bins=K, eps=eps)
            times = []
            mean_iters = 0.0
            for _ in range(max(1, reps)):
                t0 = time.perf_counter()
                _, info = invert_params(params, y, cfg, backend=backend, return_info=True)
                times.append((time.perf_counter() - t0) * 1e3)
                mean_iters = float(np.mean(info.iterations))
            if timing:
                mean_ms = float(np.mean(times))
                std_ms = float(np.std(times))
            else:
                mean_ms = std_ms = 0.0
            rows.append((dim, K, batch, mean_iters, mean_ms, std_ms))
    return rows
