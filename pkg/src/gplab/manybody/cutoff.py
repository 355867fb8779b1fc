"""Exponential cutoff functions built from ``h(x) = exp(-sqrt(x^2 + l^2) / l)``."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class CutoffParams:
    ell: float
    eps: float
    n_level: int = 0
    k_cut: int = 0

    def __post_init__(self):
        if not self.ell > 0:
            raise ValueError("ell must be positive")
        if not 0 < self.eps < 1:
            raise ValueError("eps must lie in (0, 1)")
        if self.n_level < 0 or self.k_cut < 0:
            raise ValueError("n_level and k_cut must be nonnegative")
        if self.n_level > 1000:
            raise ValueError("2**n_level overflows")


def pair_h(positions, ell: float) -> np.ndarray:
    """Matrix ``h_ij`` with a zero diagonal."""
    x = np.asarray(positions, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if not np.isfinite(x).all():
        raise ValueError("positions must be finite")
    d2 = np.sum((x[:, None, :] - x[None, :, :]) ** 2, axis=-1)
    h = np.exp(-np.sqrt(d2 + ell**2) / ell)
    np.fill_diagonal(h, 0.0)
    return h


def cumulative_exponent(positions, params: CutoffParams, k: int, n_level: int | None = None) -> float:
    """``2**n / ell**eps * sum_{i<=k} sum_{j != i} h_ij``."""
    n = params.n_level if n_level is None else n_level
    if k <= 0:
        return 0.0
    h = pair_h(positions, params.ell)
    if k > h.shape[0]:
        raise ValueError(f"k={k} exceeds the number of particles {h.shape[0]}")
    return 2.0**n / params.ell**params.eps * float(np.sum(h[:k]))


def cutoff_theta(positions, params: CutoffParams, k: int | None = None, n_level: int | None = None) -> float:
    """``Theta_k^(n)``; equal to 1 for ``k <= 0``."""
    k = params.k_cut if k is None else k
    return float(np.exp(-cumulative_exponent(positions, params, k, n_level)))


def level_ratio_bound(positions, params: CutoffParams, k: int, n_level: int, m: int) -> float:
    """``X**m * Theta_k^(n) / Theta_k^(n-1)`` with ``X`` the level-``n`` exponent.

    Since ``Theta^(n) / Theta^(n-1) = exp(-X/2)`` this is at most ``(2m/e)**m``.
    """
    x = cumulative_exponent(positions, params, k, n_level)
    ratio = cutoff_theta(positions, params, k, n_level) / cutoff_theta(positions, params, k, n_level - 1)
    return x**m * ratio


def sample_configurations(rng: np.random.Generator, count: int, particles: int, dim: int, box: float):
    return rng.uniform(-0.5 * box, 0.5 * box, size=(count, particles, dim))


def empirical_level_sup(rng, samples: int, params: CutoffParams, particles: int, k: int,
                        n_level: int, m: int, dim: int = 3, box: float | None = None) -> float:
    """Largest ``level_ratio_bound`` over random configurations in a cube."""
    box = 4.0 * params.ell if box is None else box
    configs = sample_configurations(rng, samples, particles, dim, box)
    return max(level_ratio_bound(c, params, k, n_level, m) for c in configs)
