"""Worst-of put prices under a multi-asset Black-Scholes model.

Terminal prices are sampled exactly from the lognormal solution, so no
time stepping is needed for this European payoff::

    S_i(T) = s0_i * exp((r - sigma_i^2 / 2) T + sigma_i sqrt(T) (L z)_i),   L L^T = rho
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .numkernel import cholesky
from .ortho import GridTensor, OrthoBasis1D, normalization_constant

log = logging.getLogger(__name__)

#: refuse grids with more points than this
MAX_GRID_POINTS = 2 ** 24


@dataclass
class BSModel:
    d: int
    r_rf: float
    sigma: np.ndarray
    rho: np.ndarray
    K: float
    T: float

    def __post_init__(self):
        self.sigma = np.broadcast_to(np.asarray(self.sigma, dtype=np.float64), (self.d,)).copy()
        rho = np.asarray(self.rho, dtype=np.float64)
        if rho.ndim == 0:
            rho = np.full((self.d, self.d), float(rho))
            np.fill_diagonal(rho, 1.0)
        self.rho = rho
        if np.any(self.sigma <= 0):
            raise ValueError("volatilities must be positive")
        if self.K <= 0 or self.T <= 0:
            raise ValueError("strike and maturity must be positive")
        if rho.shape != (self.d, self.d) or not np.allclose(rho, rho.T, atol=1e-12):
            raise ValueError("rho must be a symmetric d x d matrix")
        if not np.allclose(np.diag(rho), 1.0):
            raise ValueError("rho must have a unit diagonal")
        off = rho[~np.eye(self.d, dtype=bool)]
        if np.any(np.abs(off) >= 1.0):
            raise ValueError("correlations must lie in (-1, 1)")
        self.chol = cholesky(rho)

    def growth_factors(self, z: np.ndarray, horizon: float | None = None) -> np.ndarray:
        """exp((r - sigma^2/2) t + sigma sqrt(t) L z) for rows of z, shape (n, d)."""
        t = self.T if horizon is None else horizon
        w = np.atleast_2d(z) @ self.chol.T
        return np.exp((self.r_rf - 0.5 * self.sigma ** 2) * t + self.sigma * np.sqrt(t) * w)


@dataclass
class PricerConfig:
    n_paths: int = 100_000
    seed: int = 0
    crn: bool = True
    threads: int = 1

    def __post_init__(self):
        if self.n_paths < 1:
            raise ValueError("n_paths must be >= 1")


def terminal_prices(model: BSModel, s0, z) -> np.ndarray:
    s0 = np.asarray(s0, dtype=np.float64)
    if np.any(s0 <= 0):
        raise ValueError("initial prices must be positive")
    z = np.asarray(z, dtype=np.float64)
    out = s0 * model.growth_factors(z)
    return out[0] if z.ndim == 1 else out


def worst_of_put_payoff(s, K: float):
    """max(K - min_i s_i, 0), along the last axis."""
    s = np.asarray(s, dtype=np.float64)
    return np.maximum(K - np.min(s, axis=-1), 0.0)


def mc_estimate(model: BSModel, s0, config: PricerConfig, z: np.ndarray | None = None):
    """Discounted Monte Carlo price and its standard error."""
    if z is None:
        z = np.random.default_rng(config.seed).standard_normal((config.n_paths, model.d))
    disc = np.exp(-model.r_rf * model.T)
    pay = disc * worst_of_put_payoff(terminal_prices(model, s0, z), model.K)
    se = pay.std(ddof=1) / np.sqrt(len(pay)) if len(pay) > 1 else 0.0
    return float(pay.mean()), float(se)


def mc_price(model: BSModel, s0, config: PricerConfig) -> float:
    return mc_estimate(model, s0, config)[0]


def domain_bounds(model: BSModel, epsilon: float = 0.01) -> tuple[np.ndarray, np.ndarray]:
    """Truncated domain [0.01 K, K exp(sqrt(2 sigma^2 T log(d K / eps)))] per asset."""
    dK = model.d * model.K
    if not 0.0 < epsilon <= dK:
        raise ValueError(f"epsilon must lie in (0, d*K] = (0, {dK}]")
    U = model.K * np.exp(np.sqrt(2.0 * model.sigma ** 2 * model.T * np.log(dK / epsilon)))
    L = np.full(model.d, 0.01 * model.K)
    return L, U


def _grid_chunk_crn(model, grids, G, flat_idx):
    idx = np.unravel_index(flat_idx, [len(g) for g in grids])
    pts = np.stack([g[i] for g, i in zip(grids, idx)], axis=1)          # (m, d)
    disc = np.exp(-model.r_rf * model.T)
    out = np.empty(len(flat_idx))
    step = max(1, 2 ** 21 // G.size)
    for a in range(0, len(pts), step):
        S = G[None, :, :] * pts[a:a + step, None, :]                    # (m, n_paths, d)
        out[a:a + step] = np.maximum(model.K - S.min(axis=2), 0.0).mean(axis=1)
    return disc * out


def _grid_chunk_indep(model, grids, config, flat_idx):
    idx = np.unravel_index(flat_idx, [len(g) for g in grids])
    pts = np.stack([g[i] for g, i in zip(grids, idx)], axis=1)
    out = np.empty(len(flat_idx))
    for k, (j, x) in enumerate(zip(flat_idx, pts)):
        z = np.random.default_rng([config.seed, int(j)]).standard_normal((config.n_paths, model.d))
        out[k] = mc_estimate(model, x, config, z)[0]
    return out


def grid_target(model: BSModel, bases: Sequence[OrthoBasis1D], config: PricerConfig,
                progress=None) -> GridTensor:
    """Monte Carlo prices on the tensor grid of ``bases``, with C filled in.

    With common random numbers one normal draw matrix is shared by every
    grid point; otherwise each point gets its own substream keyed by its
    flat grid index.
    """
    if len(bases) != model.d:
        raise ValueError(f"model has d={model.d} but {len(bases)} bases were given")
    grids = [b.grid for b in bases]
    dims = [len(g) for g in grids]
    total = int(np.prod(dims))
    if total > MAX_GRID_POINTS:
        raise MemoryError(f"grid has {total} points (cap {MAX_GRID_POINTS})")
    chunks = np.array_split(np.arange(total), max(1, min(total, 256)))
    if config.crn:
        z = np.random.default_rng(config.seed).standard_normal((config.n_paths, model.d))
        G = model.growth_factors(z)
        work = lambda c: _grid_chunk_crn(model, grids, G, c)  # noqa: E731
    else:
        work = lambda c: _grid_chunk_indep(model, grids, config, c)  # noqa: E731
    values = np.empty(total)
    with ThreadPoolExecutor(max_workers=max(1, config.threads)) as ex:
        for k, (c, v) in enumerate(zip(chunks, ex.map(work, chunks))):
            values[c] = v
            if progress is not None:
                progress(k + 1, len(chunks))
    out = GridTensor(values.reshape(dims))
    normalization_constant(out)
    return out


def sample_points(model: BSModel, s_start, n: int, seed: int,
                  bounds: tuple[np.ndarray, np.ndarray] | None = None,
                  horizon: float = 1.0) -> np.ndarray:
    """``n`` draws of S(horizon) started from ``s_start``; draws outside ``bounds`` are redrawn."""
    if n < 1:
        raise ValueError("n must be >= 1")
    s_start = np.asarray(s_start, dtype=np.float64)
    rng = np.random.default_rng(seed)
    out = np.empty((0, model.d))
    for _ in range(1000):
        need = n - len(out)
        if need == 0:
            break
        pts = s_start * model.growth_factors(rng.standard_normal((need, model.d)), horizon)
        if bounds is not None:
            L, U = bounds
            pts = pts[np.all((pts >= L) & (pts <= U), axis=1)]
        out = np.vstack([out, pts])
    if len(out) < n:
        raise RuntimeError("could not draw enough points inside the domain")
    return out
