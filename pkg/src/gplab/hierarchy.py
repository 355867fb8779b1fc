"""Residuals of the finite-N BBGKY hierarchy and of the infinite GP hierarchy.

Kernels follow the conventions of :class:`gplab.manybody.DensityMatrixK`
(function values, operator = kernel * h**k).  Residual norms are
Hilbert-Schmidt norms of the operators.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import Trajectory
from .fields import GridSpec, convolve
from .manybody.evolution import ManyBodyTrajectory
from .manybody.marginals import DensityMatrixK, marginal
from .manybody.states import pair_matrix


@dataclass
class MollifiedDelta:
    """Grid-normalised Gaussian bump of width ``width``, cut off at ``6 * width``."""

    width: float
    grid: GridSpec

    def __post_init__(self):
        if not self.width > 0:
            raise ValueError("mollifier width must be positive")
        d = self.grid.offset_distance
        prof = np.where(d <= 6.0 * self.width, np.exp(-0.5 * (d / self.width) ** 2), 0.0)
        self.profile = prof / (self.grid.cell_volume * prof.sum())

    def integral(self) -> float:
        return float(self.grid.cell_volume * self.profile.sum())


@dataclass
class MarginalTrajectory:
    times: np.ndarray
    gammas: list


def _free_multiplier(grid: GridSpec, k: int, t: float) -> np.ndarray:
    phase = np.exp(-1j * t * grid.k**2)
    out = phase
    for _ in range(k - 1):
        out = np.multiply.outer(out, phase)
    return out


def free_propagate_kernel(g: DensityMatrixK, t: float) -> DensityMatrixK:
    """``e^{i t sum Delta_j} gamma e^{-i t sum Delta_j}`` by Fourier multipliers."""
    if t == 0:
        return DensityMatrixK(g.k, g.grid, g.kernel.copy())
    k, n = g.k, g.grid.n
    T = g.tensor()
    rows, cols = tuple(range(k)), tuple(range(k, 2 * k))
    mult = _free_multiplier(g.grid, k, t)
    T = np.fft.ifftn(mult.reshape(mult.shape + (1,) * k) * np.fft.fftn(T, axes=rows), axes=rows)
    T = np.fft.ifftn(mult.conj().reshape((1,) * k + mult.shape) * np.fft.fftn(T, axes=cols), axes=cols)
    return DensityMatrixK(k, g.grid, T.reshape(n**k, n**k))


def _contract(g_kp1: DensityMatrixK, j: int, profile: np.ndarray) -> np.ndarray:
    """``int A(x_j - z) gamma(x, z; x', z) dz - int A(x'_j - z) gamma(x, z; x', z) dz``."""
    k = g_kp1.k - 1
    n, h = g_kp1.grid.n, g_kp1.grid.h
    if not 0 <= j < k:
        raise IndexError(f"slot index {j} out of range for k={k}")
    t = g_kp1.kernel.reshape(n**k, n, n**k, n)
    diag = np.einsum("azbz->azb", t).reshape((n,) * k + (n,) + (n,) * k)
    mat = pair_matrix(profile)  # mat[x, z] = A(x - z)
    nd = 2 * k + 1
    left = h * np.sum(_place(mat, nd, j, k) * diag, axis=k)
    right = h * np.sum(_place(mat, nd, k + 1 + j, k) * diag, axis=k)
    return (left - right).reshape(n**k, n**k)


def _place(mat, nd, row_axis, z_axis):
    """Broadcast ``mat[x, z]`` with ``x`` on ``row_axis`` and ``z`` on ``z_axis``."""
    shape = [1] * nd
    shape[row_axis] = mat.shape[0]
    shape[z_axis] = mat.shape[1]
    if row_axis < z_axis:
        return mat.reshape(shape)
    return mat.T.reshape(shape)


def collision_contract(g_kp1: DensityMatrixK, j: int, delta: MollifiedDelta) -> DensityMatrixK:
    """``Tr_{k+1} [delta(x_j - x_{k+1}), gamma^(k+1)]`` as a (traceless) k-particle kernel.

    ``j`` is zero-based.  The output is anti-Hermitian: ``1j * output`` is Hermitian.
    """
    if g_kp1.k < 2:
        raise ValueError("need at least a two-particle kernel")
    return DensityMatrixK(g_kp1.k - 1, g_kp1.grid, _contract(g_kp1, j, delta.profile))


def _hs_inner_gram(mats: np.ndarray, h: float) -> np.ndarray:
    """Gram matrix ``G[a, b] = <M_a, M_b>`` of one-particle kernels (HS with measure)."""
    flat = mats.reshape(len(mats), -1)
    return h**2 * (flat.conj() @ flat.T)


def _tensor_sum_norm(coefs, slots, gram) -> float:
    """HS norm of ``sum_a coefs[a] * kron_i M[slots[a, i]]`` from one-particle Gram data."""
    coefs = np.asarray(coefs)
    slots = np.asarray(slots)
    prod = np.ones((len(coefs), len(coefs)), dtype=complex)
    for i in range(slots.shape[1]):
        idx = slots[:, i]
        prod *= gram[np.ix_(idx, idx)]
    val = np.real(coefs.conj() @ prod @ coefs)
    return float(np.sqrt(max(val, 0.0)))


def infinite_hierarchy_residual(phi_traj: Trajectory, sigma: float, k: int, delta: MollifiedDelta,
                                quadrature_dt: float | None = None) -> float:
    """Relative HS residual of factorised GP marginals in the integral hierarchy.

    ``gamma_t = |phi_t><phi_t|^k`` is inserted in
    ``gamma_t = U(t) gamma_0 - i sigma sum_j int_0^t U(t-s) Tr_{k+1}[delta(x_j - x_{k+1}), gamma_s^(k+1)] ds``
    with the time integral done by the trapezoid rule on snapshots spaced
    ``quadrature_dt``.  All terms are sums of k-fold tensor products, so the
    norm is evaluated from one-particle inner products without forming
    ``n**k x n**k`` kernels.
    """
    grid = phi_traj.grid
    if grid.dim != 1:
        raise ValueError("hierarchy residuals are computed on 1D grids")
    if delta.grid != grid:
        raise ValueError("mollifier and trajectory grids differ")
    times = np.asarray(phi_traj.times)
    spacing = np.diff(times)
    if len(times) < 2 or not np.allclose(spacing, spacing[0], rtol=1e-9, atol=0):
        raise ValueError("trajectory snapshots must be equally spaced")
    stride = 1 if quadrature_dt is None else int(round(quadrature_dt / spacing[0]))
    if stride < 1 or not np.isclose(stride * spacing[0], quadrature_dt or spacing[0], rtol=1e-9):
        raise ValueError("quadrature_dt must be a multiple of the snapshot spacing")
    idx = np.arange(0, len(times), stride)
    if idx[-1] != len(times) - 1:
        raise ValueError("quadrature_dt must divide the trajectory length")
    if len(idx) < 8:
        raise ValueError(f"trajectory too sparse: {len(idx)} quadrature nodes, need at least 8")

    T = times[-1]
    s = times[idx]
    dts = np.diff(s)
    wts = np.zeros(len(s))
    wts[:-1] += 0.5 * dts
    wts[1:] += 0.5 * dts

    def one(mat, tau):
        return free_propagate_kernel(DensityMatrixK(1, grid, mat), tau).kernel

    phi = phi_traj.values
    proj = lambda v: np.outer(v, v.conj())  # noqa: E731
    # A^k - B^k telescoped into terms containing A - B, so that nearly equal
    # large terms never cancel inside the quadratic form.
    a, b = proj(phi[-1]), one(proj(phi[0]), T)
    mats = [a, b, a - b]
    coefs, slot_rows = [], []
    for i in range(k):
        coefs.append(1.0)
        slot_rows.append([0] * i + [2] + [1] * (k - 1 - i))
    for m, i in enumerate(idx):
        v = phi[i]
        q = convolve(delta.profile, np.abs(v) ** 2, grid)
        p = proj(v)
        d = (q[:, None] - q[None, :]) * p
        ip = len(mats)
        mats.append(one(p, T - s[m]))
        mats.append(one(d, T - s[m]))
        for j in range(k):
            row = [ip] * k
            row[j] = ip + 1
            coefs.append(1j * sigma * wts[m])
            slot_rows.append(row)
    gram = _hs_inner_gram(np.array(mats), grid.h)
    res = _tensor_sum_norm(coefs, slot_rows, gram)
    lhs = _tensor_sum_norm([1.0], [[0] * k], gram)
    return res / lhs


def _laplacian_axis(t: np.ndarray, axis: int, grid: GridSpec) -> np.ndarray:
    shape = [1] * t.ndim
    shape[axis] = grid.n
    k2 = (grid.k**2).reshape(shape)
    return np.fft.ifft(-k2 * np.fft.fft(t, axis=axis), axis=axis)


def bbgky_rhs(gk: DensityMatrixK, gkp1: DensityMatrixK | None, pair_kernel: np.ndarray, N: int,
              trap=None) -> np.ndarray:
    """Kernel of the right-hand side of ``i d/dt gamma^(k)``."""
    k, grid, n = gk.k, gk.grid, gk.grid.n
    T = gk.tensor()
    out = np.zeros_like(T)
    for j in range(k):
        out += -_laplacian_axis(T, j, grid) + _laplacian_axis(T, k + j, grid)
    mat = pair_matrix(np.asarray(pair_kernel, dtype=float))
    nd = 2 * k
    for i in range(k):
        for j in range(i + 1, k):
            out += (_place(mat, nd, i, j) - _place(mat, nd, k + i, k + j)) * T
    if trap is not None:
        v = np.asarray(trap, dtype=float)
        for j in range(k):
            shape = [1] * nd
            shape[j] = n
            row = v.reshape(shape)
            shape = [1] * nd
            shape[k + j] = n
            out += (row - v.reshape(shape)) * T
    out = out.reshape(n**k, n**k)
    if k < N:
        if gkp1 is None:
            raise ValueError("the (k+1)-particle marginal is required for k < N")
        for j in range(k):
            out += (N - k) * _contract(gkp1, j, np.asarray(pair_kernel, dtype=float))
    return out


def finite_bbgky_residual(traj: ManyBodyTrajectory, pair_kernel, k: int, dt: float | None = None,
                          index: int | None = None, trap=None) -> float:
    """Relative residual of the k-th BBGKY equation on an exact N-body trajectory.

    ``i d/dt gamma^(k)`` is a centered difference of three consecutive
    snapshots around ``index`` (default: the middle one).
    """
    N = traj.N
    if k >= N:
        raise ValueError(f"k={k} must be smaller than N={N}")
    if len(traj) < 3:
        raise ValueError("need at least three snapshots")
    if index is None:
        index = len(traj) // 2
    if not 1 <= index <= len(traj) - 2:
        raise ValueError("index must have neighbours on both sides")
    times = traj.times
    if dt is None:
        dt = times[index + 1] - times[index]
    if not np.isclose(times[index + 1] - times[index], dt, rtol=1e-9) or \
            not np.isclose(times[index] - times[index - 1], dt, rtol=1e-9):
        raise ValueError("snapshots around index are not spaced by dt")
    g_prev = marginal(traj[index - 1], k)
    g_next = marginal(traj[index + 1], k)
    state = traj[index]
    gk = marginal(state, k)
    gkp1 = marginal(state, k + 1)
    lhs = 1j * (g_next.kernel - g_prev.kernel) / (2.0 * dt)
    rhs = bbgky_rhs(gk, gkp1, pair_kernel, N, trap)
    w = gk.weight
    return float(np.linalg.norm(lhs - rhs) / np.linalg.norm(lhs)) if w else 0.0


def marginal_trajectory(traj: ManyBodyTrajectory, k: int) -> MarginalTrajectory:
    return MarginalTrajectory(np.asarray(traj.times), [marginal(traj[i], k) for i in range(len(traj))])
