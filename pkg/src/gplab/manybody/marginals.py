"""k-particle reduced density matrices, distances and Sobolev-weighted traces."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..fields import GridSpec, WaveField
from .states import ManyBodyState, check_budget


@dataclass
class DensityMatrixK:
    """Kernel ``gamma(x_1..x_k; x'_1..x'_k)`` sampled on the grid.

    ``kernel`` holds function values; the operator matrix on ``l^2`` of the
    grid is ``kernel * h**k`` so that ``trace(kernel) * h**k = 1``.
    """

    k: int
    grid: GridSpec
    kernel: np.ndarray

    def __post_init__(self):
        m = self.grid.n**self.k
        self.kernel = np.asarray(self.kernel, dtype=complex)
        if self.kernel.shape != (m, m):
            raise ValueError(f"kernel shape {self.kernel.shape} does not match k={self.k}, n={self.grid.n}")

    @property
    def weight(self) -> float:
        return self.grid.h**self.k

    @property
    def operator(self) -> np.ndarray:
        return self.kernel * self.weight

    def trace(self) -> complex:
        return complex(np.trace(self.kernel) * self.weight)

    def hermiticity_defect(self) -> float:
        return float(np.max(np.abs(self.kernel - self.kernel.conj().T)))

    def eigenvalues(self) -> np.ndarray:
        op = self.operator
        return np.linalg.eigvalsh(0.5 * (op + op.conj().T))

    def frobenius(self) -> float:
        """Hilbert-Schmidt norm of the operator."""
        return float(np.linalg.norm(self.operator))

    def tensor(self) -> np.ndarray:
        """Kernel reshaped to ``(n,)*k + (n,)*k``."""
        return self.kernel.reshape((self.grid.n,) * (2 * self.k))

    def reduce(self) -> "DensityMatrixK":
        """Trace out the last particle."""
        if self.k < 2:
            raise ValueError("cannot reduce a one-particle kernel")
        n, m = self.grid.n, self.grid.n ** (self.k - 1)
        t = self.kernel.reshape(m, n, m, n)
        return DensityMatrixK(self.k - 1, self.grid, self.grid.h * np.einsum("azbz->ab", t))


def marginal(state: ManyBodyState, k: int) -> DensityMatrixK:
    """Partial trace over particles ``k+1..N``."""
    if not 1 <= k <= state.N:
        raise ValueError(f"k must lie in [1, N={state.N}], got {k}")
    n = state.grid.n
    check_budget(n, k, what="marginal kernel", power=2)
    a = state.tensor.reshape(n**k, n ** (state.N - k))
    kernel = state.grid.h ** (state.N - k) * (a @ a.conj().T)
    return DensityMatrixK(k, state.grid, kernel)


def pure_marginal(phi: WaveField, k: int = 1) -> DensityMatrixK:
    """``|phi><phi|^{tensor k}`` for a normalised orbital."""
    v = phi.values
    for _ in range(k - 1):
        v = np.multiply.outer(v, phi.values)
    v = v.reshape(-1)
    return DensityMatrixK(k, phi.grid, np.outer(v, v.conj()))


def _same_space(g1: DensityMatrixK, g2: DensityMatrixK) -> None:
    if g1.grid != g2.grid or g1.k != g2.k:
        raise ValueError("density matrices live on different grids or particle numbers")


def trace_distance(g1: DensityMatrixK, g2: DensityMatrixK) -> float:
    """``1/2 ||g1 - g2||_1`` from the eigenvalues of the Hermitian difference."""
    _same_space(g1, g2)
    d = g1.operator - g2.operator
    ev = np.linalg.eigvalsh(0.5 * (d + d.conj().T))
    return float(min(max(0.5 * np.sum(np.abs(ev)), 0.0), 1.0))


def condensate_overlap(g: DensityMatrixK, phi: WaveField) -> float:
    """``<phi^k, gamma phi^k>``."""
    if phi.grid != g.grid:
        raise ValueError("orbital and density matrix live on different grids")
    v = phi.values
    for _ in range(g.k - 1):
        v = np.multiply.outer(v, phi.values)
    v = v.reshape(-1)
    val = g.weight**2 * np.real(np.vdot(v, g.kernel @ v))
    return float(min(max(val, 0.0), 1.0))


def sobolev_trace(g: DensityMatrixK) -> float:
    """``Tr (1 - Delta_1) ... (1 - Delta_k) gamma`` via the unitary DFT."""
    n, k = g.grid.n, g.k
    t = g.operator.reshape((n,) * (2 * k))
    rows = tuple(range(k))
    cols = tuple(range(k, 2 * k))
    t = np.fft.fftn(t, axes=rows, norm="ortho")
    t = np.fft.ifftn(t, axes=cols, norm="ortho")
    diag = t.reshape(n**k, n**k).diagonal()
    weight = 1.0 + g.grid.k**2
    mult = weight
    for _ in range(k - 1):
        mult = np.multiply.outer(mult, weight)
    return float(np.real(np.sum(mult.reshape(-1) * diag)))


def export_marginal(g: DensityMatrixK, path) -> None:
    """Kernel as raw complex128 (C order) with a ``.json`` header beside it."""
    path = Path(path)
    np.ascontiguousarray(g.kernel, dtype="<c16").tofile(path)
    header = {"k": g.k, "dim": g.grid.dim, "n": g.grid.n, "L": g.grid.L,
              "rows": g.kernel.shape[0], "dtype": "complex128", "order": "C"}
    path.with_suffix(path.suffix + ".json").write_text(json.dumps(header, indent=2))


def load_marginal(path) -> DensityMatrixK:
    path = Path(path)
    header = json.loads(path.with_suffix(path.suffix + ".json").read_text())
    grid = GridSpec(header["dim"], header["L"], header["n"])
    m = header["rows"]
    return DensityMatrixK(header["k"], grid, np.fromfile(path, dtype="<c16").reshape(m, m))
