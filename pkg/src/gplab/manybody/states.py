"""Symmetric N-boson wave functions on a 1D periodic grid."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from ..fields import GridSpec, WaveField

MEMORY_BUDGET = 2 * 1024**3  # bytes
BYTES_PER_ENTRY = 16


class MemoryBudgetError(ValueError):
    pass


def check_budget(n: int, N: int, what: str = "state tensor", power: int = 1) -> None:
    """Refuse ``n**(N*power)`` complex entries above the memory budget."""
    size = BYTES_PER_ENTRY * float(n) ** (N * power)
    if size > MEMORY_BUDGET:
        max_N = int(math.log(MEMORY_BUDGET / BYTES_PER_ENTRY) / (power * math.log(n)) + 1e-12)
        max_n = int((MEMORY_BUDGET / BYTES_PER_ENTRY) ** (1.0 / (power * N)) + 1e-9)
        raise MemoryBudgetError(
            f"{what} with n={n}, N={N} needs {size / 2**30:.3g} GiB, above the "
            f"{MEMORY_BUDGET / 2**30:.0f} GiB budget; use N <= {max_N} at n={n} "
            f"or n <= {max_n} at N={N}")


@dataclass
class ManyBodyState:
    N: int
    grid: GridSpec
    tensor: np.ndarray

    def __post_init__(self):
        if self.grid.dim != 1:
            raise ValueError("many-body states live on 1D grids")
        if self.N < 1:
            raise ValueError("N must be at least 1")
        self.tensor = np.asarray(self.tensor, dtype=complex)
        if self.tensor.shape != (self.grid.n,) * self.N:
            raise ValueError(f"tensor shape {self.tensor.shape} does not match N={self.N}, n={self.grid.n}")

    @property
    def measure(self) -> float:
        return self.grid.h**self.N

    def norm(self) -> float:
        return float(np.sqrt(self.measure * np.sum(np.abs(self.tensor) ** 2)))

    def normalized(self) -> "ManyBodyState":
        return ManyBodyState(self.N, self.grid, self.tensor / self.norm())

    def inner(self, other: "ManyBodyState") -> complex:
        return complex(self.measure * np.vdot(self.tensor, other.tensor))

    def copy(self):
        return ManyBodyState(self.N, self.grid, self.tensor.copy())

    def permuted(self, perm) -> "ManyBodyState":
        return ManyBodyState(self.N, self.grid, np.transpose(self.tensor, perm))


def asymmetry(state: ManyBodyState) -> float:
    """Largest change under an adjacent transposition (these generate S_N)."""
    t = state.tensor
    worst = 0.0
    for i in range(state.N - 1):
        worst = max(worst, float(np.max(np.abs(t - np.swapaxes(t, i, i + 1)))))
    return worst


def symmetrize(state: ManyBodyState) -> ManyBodyState:
    """Average over all N! particle permutations."""
    t = state.tensor
    acc = np.zeros_like(t)
    perms = list(itertools.permutations(range(state.N)))
    for p in perms:
        acc += np.transpose(t, p)
    return ManyBodyState(state.N, state.grid, acc / len(perms))


def _orbital(phi) -> tuple[GridSpec, np.ndarray]:
    if not isinstance(phi, WaveField):
        raise TypeError("phi must be a WaveField")
    if phi.grid.dim != 1:
        raise ValueError("orbital must be one-dimensional")
    return phi.grid, phi.values


def _outer_power(v: np.ndarray, N: int) -> np.ndarray:
    out = v
    for _ in range(N - 1):
        out = np.multiply.outer(out, v)
    return out


def product_state(phi: WaveField, N: int) -> ManyBodyState:
    """``prod_j phi(x_j)``, normalised."""
    grid, v = _orbital(phi)
    check_budget(grid.n, N)
    return ManyBodyState(N, grid, _outer_power(v, N)).normalized()


def pair_matrix(kernel: np.ndarray) -> np.ndarray:
    """``M[a, b] = kernel[(a - b) mod n]`` for a minimum-image kernel in FFT order."""
    n = len(kernel)
    idx = (np.arange(n)[:, None] - np.arange(n)[None, :]) % n
    return kernel[idx]


def pair_profile(profile, grid: GridSpec) -> np.ndarray:
    """Sample an even pair profile on minimum-image offsets (FFT order)."""
    if isinstance(profile, np.ndarray):
        if profile.shape != (grid.n,):
            raise ValueError("sampled pair profile must have one entry per grid offset")
        return profile
    return np.asarray(profile(grid.offset_distance), dtype=float)


def _broadcast_pair(mat: np.ndarray, N: int, i: int, j: int) -> np.ndarray:
    shape = [1] * N
    shape[i] = shape[j] = mat.shape[0]
    if i < j:
        return mat.reshape(shape)
    return mat.T.reshape(shape)


def pair_sum(kernel: np.ndarray, N: int) -> np.ndarray:
    """``sum_{i<j} kernel(x_i - x_j)`` as an ``n**N`` tensor."""
    n = len(kernel)
    mat = pair_matrix(kernel)
    out = np.zeros((n,) * N)
    for i, j in itertools.combinations(range(N), 2):
        out = out + _broadcast_pair(mat, N, i, j)
    return out


def pair_product(factor: np.ndarray, N: int) -> np.ndarray:
    n = len(factor)
    mat = pair_matrix(factor)
    out = np.ones((n,) * N)
    for i, j in itertools.combinations(range(N), 2):
        out = out * _broadcast_pair(mat, N, i, j)
    return out


def one_body_sum(values: np.ndarray, N: int) -> np.ndarray:
    """``sum_j values(x_j)``."""
    n = len(values)
    out = np.zeros((n,) * N, dtype=np.result_type(values, float))
    for j in range(N):
        shape = [1] * N
        shape[j] = n
        out = out + values.reshape(shape)
    return out


def jastrow_state(phi: WaveField, N: int, pair_factor, normalize: bool = True) -> ManyBodyState:
    """``prod_{i<j} f(x_i - x_j) prod_j phi(x_j)`` with minimum-image distances."""
    grid, v = _orbital(phi)
    check_budget(grid.n, N)
    f = pair_profile(pair_factor, grid)
    if np.any(f <= 0):
        raise ValueError("pair factor must be strictly positive")
    tensor = pair_product(f, N) * _outer_power(v, N)
    state = ManyBodyState(N, grid, tensor)
    return state.normalized() if normalize else state
