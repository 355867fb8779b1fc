"""Complex fields on periodic grids, spectral derivatives and energy functionals."""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class GridSpec:
    """Uniform periodic grid on ``[-L/2, L/2)^dim`` with ``n`` points per axis."""

    dim: int
    L: float
    n: int

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise ValueError(f"dim must be 1, 2 or 3, got {self.dim}")
        if not self.L > 0:
            raise ValueError(f"box length must be positive, got {self.L}")
        if self.n < 2 or self.n & (self.n - 1):
            raise ValueError(f"points per axis must be a power of two, got {self.n}")

    @property
    def h(self) -> float:
        return self.L / self.n

    @property
    def shape(self):
        return (self.n,) * self.dim

    @property
    def cell_volume(self) -> float:
        return self.h**self.dim

    @cached_property
    def x(self) -> np.ndarray:
        return -0.5 * self.L + self.h * np.arange(self.n)

    @cached_property
    def k(self) -> np.ndarray:
        """Angular wavenumbers ``2 pi m / L`` in FFT order."""
        return 2.0 * np.pi * np.fft.fftfreq(self.n, d=self.h)

    def mesh(self):
        return np.meshgrid(*([self.x] * self.dim), indexing="ij")

    @cached_property
    def k_squared(self) -> np.ndarray:
        ks = np.meshgrid(*([self.k] * self.dim), indexing="ij", sparse=True)
        return sum(kk**2 for kk in ks)

    @cached_property
    def r_squared(self) -> np.ndarray:
        return sum(xx**2 for xx in self.mesh())

    @cached_property
    def offset_distance(self) -> np.ndarray:
        """Minimum-image distance of each grid offset from the origin, FFT order."""
        j = np.arange(self.n)
        d = np.minimum(j, self.n - j) * self.h
        ds = np.meshgrid(*([d] * self.dim), indexing="ij", sparse=True)
        return np.sqrt(sum(dd**2 for dd in ds))

    def integrate(self, values) -> complex:
        return self.cell_volume * np.sum(values)


@dataclass
class WaveField:
    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)
        if self.values.shape != self.grid.shape:
            raise ValueError(f"field shape {self.values.shape} does not match grid {self.grid.shape}")

    @classmethod
    def from_function(cls, grid: GridSpec, fn, normalize: bool = True):
        field = cls(grid, fn(*grid.mesh()))
        return field.normalized() if normalize else field

    def copy(self):
        return WaveField(self.grid, self.values.copy())

    def normalized(self):
        return WaveField(self.grid, self.values / l2_norm(self))

    @property
    def density(self):
        return np.abs(self.values) ** 2


def l2_norm(field: WaveField) -> float:
    return float(np.sqrt(field.grid.cell_volume * np.sum(np.abs(field.values) ** 2)))


def kinetic_energy(field: WaveField) -> float:
    """``int |grad u|^2`` via Parseval."""
    g = field.grid
    uh = np.fft.fftn(field.values)
    return float(g.cell_volume / g.n**g.dim * np.sum(g.k_squared * np.abs(uh) ** 2))


def gradient(field: WaveField):
    """Spectral gradient, one array per axis."""
    g = field.grid
    uh = np.fft.fftn(field.values)
    out = []
    for axis in range(g.dim):
        shape = [1] * g.dim
        shape[axis] = g.n
        out.append(np.fft.ifftn(1j * g.k.reshape(shape) * uh))
    return out


def laplacian(values: np.ndarray, grid: GridSpec) -> np.ndarray:
    return np.fft.ifftn(-grid.k_squared * np.fft.fftn(values))


def h1_norm_sq(field: WaveField) -> float:
    return l2_norm(field) ** 2 + kinetic_energy(field)


def sample_trap(trap, grid: GridSpec):
    """Trap given as an array on the grid or a callable of the coordinates."""
    if trap is None:
        return None
    if callable(trap):
        return np.asarray(trap(*grid.mesh()), dtype=float)
    arr = np.asarray(trap, dtype=float)
    if arr.shape != grid.shape:
        raise ValueError(f"trap shape {arr.shape} does not match grid {grid.shape}")
    return arr


def gp_energy(field: WaveField, sigma: float, trap=None) -> float:
    """``int |grad u|^2 + sigma/2 |u|^4 + V_ext |u|^2``."""
    g = field.grid
    rho = field.density
    e = kinetic_energy(field) + 0.5 * sigma * g.cell_volume * np.sum(rho**2)
    v = sample_trap(trap, g)
    if v is not None:
        e += g.cell_volume * np.sum(v * rho)
    return float(e)


def sample_pair_potential(pot, grid: GridSpec) -> np.ndarray:
    """Radial pair potential on minimum-image offsets (FFT order, origin at index 0)."""
    if isinstance(pot, np.ndarray):
        if pot.shape != grid.shape:
            raise ValueError("sampled pair potential does not match the grid")
        return pot
    support = getattr(pot, "support", None)
    if support is not None and support >= 0.5 * grid.L:
        raise ValueError(f"potential support {support:g} does not fit in the box of length {grid.L:g}")
    return np.asarray(pot(grid.offset_distance), dtype=float)


def convolve(kernel: np.ndarray, values: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Periodic ``(kernel * values)(x) = int kernel(x - y) values(y) dy`` by FFT."""
    out = np.fft.ifftn(np.fft.fftn(kernel) * np.fft.fftn(values)) * grid.cell_volume
    if np.isrealobj(kernel) and np.isrealobj(values):
        return out.real
    return out


def hartree_potential(field: WaveField, kernel: np.ndarray) -> np.ndarray:
    return convolve(kernel, field.density, field.grid)


def hartree_energy(field: WaveField, pot) -> float:
    """``int |grad u|^2 + 1/2 int int V(x - y) |u(x)|^2 |u(y)|^2``."""
    g = field.grid
    kernel = sample_pair_potential(pot, g)
    rho = field.density
    inter = 0.5 * g.cell_volume * np.sum(rho * hartree_potential(field, kernel))
    return float(kinetic_energy(field) + inter)


def second_moment(field: WaveField) -> float:
    """``<|x|^2>`` of the normalised density."""
    g = field.grid
    rho = field.density
    return float(np.sum(g.r_squared * rho) / np.sum(rho))


def export_csv(field: WaveField, path) -> None:
    """1D snapshot as ``x, re, im, density`` rows."""
    if field.grid.dim != 1:
        raise ValueError("CSV export is only defined for 1D fields")
    u = field.values
    with open(path, "w") as fh:
        fh.write("x,re,im,density\n")
        for x, z in zip(field.grid.x, u):
            fh.write(f"{x:.17g},{z.real:.17g},{z.imag:.17g},{abs(z) ** 2:.17g}\n")


def export_binary(field: WaveField, path, time: float = 0.0) -> None:
    """Raw complex128 values (C order) plus a ``.json`` header beside them."""
    path = Path(path)
    np.ascontiguousarray(field.values, dtype="<c16").tofile(path)
    header = {"dim": field.grid.dim, "n": field.grid.n, "L": field.grid.L,
              "time": time, "dtype": "complex128", "order": "C"}
    path.with_suffix(path.suffix + ".json").write_text(json.dumps(header, indent=2))


def load_binary(path) -> tuple[WaveField, float]:
    path = Path(path)
    header = json.loads(path.with_suffix(path.suffix + ".json").read_text())
    grid = GridSpec(header["dim"], header["L"], header["n"])
    values = np.fromfile(path, dtype="<c16").reshape(grid.shape)
    return WaveField(grid, values), header["time"]
