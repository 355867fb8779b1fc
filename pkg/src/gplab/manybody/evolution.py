"""Exact N-body Hamiltonian action, Strang time stepping and imaginary-time ground states."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from ..dynamics import ConvergenceError, EvolveParams, NumericalError, check_confining
from ..fields import GridSpec, WaveField, kinetic_energy, sample_trap
from .states import ManyBodyState, one_body_sum, pair_profile, pair_sum, symmetrize

log = logging.getLogger(__name__)


@dataclass
class ManyBodyHamiltonian:
    """``sum_j (-d_j^2 + V_ext(x_j)) + sum_{i<j} V_pair(x_i - x_j)`` on ``n**N`` tensors.

    ``pair_kernel`` is the pair potential on minimum-image offsets (FFT order)
    including any coupling prefactor such as ``1/N``.
    """

    N: int
    grid: GridSpec
    pair_kernel: np.ndarray
    trap: np.ndarray | None = None

    def __post_init__(self):
        n = self.grid.n
        self.pair_kernel = np.asarray(self.pair_kernel, dtype=float)
        self.pair_diag = pair_sum(self.pair_kernel, self.N)
        self.trap_diag = None if self.trap is None else one_body_sum(np.asarray(self.trap, float), self.N)
        self.kinetic_diag = one_body_sum(self.grid.k**2, self.N)
        assert self.kinetic_diag.shape == (n,) * self.N

    @classmethod
    def build(cls, N, grid, pair, trap=None, coupling=1.0):
        kernel = coupling * pair_profile(pair, grid) if pair is not None else np.zeros(grid.n)
        return cls(N, grid, kernel, sample_trap(trap, grid))

    @property
    def potential_diag(self):
        if self.trap_diag is None:
            return self.pair_diag
        return self.pair_diag + self.trap_diag

    def kinetic(self, tensor):
        return np.fft.ifftn(self.kinetic_diag * np.fft.fftn(tensor))

    def apply(self, tensor):
        return self.kinetic(tensor) + self.potential_diag * tensor


def apply_hamiltonian(state: ManyBodyState, pair, trap=None, coupling: float = 1.0) -> ManyBodyState:
    """``H psi`` (not normalised)."""
    ham = pair if isinstance(pair, ManyBodyHamiltonian) else ManyBodyHamiltonian.build(
        state.N, state.grid, pair, trap, coupling)
    return ManyBodyState(state.N, state.grid, ham.apply(state.tensor))


def expectation(state: ManyBodyState, ham: ManyBodyHamiltonian) -> float:
    return float(np.real(state.measure * np.vdot(state.tensor, ham.apply(state.tensor))))


@dataclass
class ManyBodyTrajectory:
    N: int
    grid: GridSpec
    times: np.ndarray
    tensors: list

    def __len__(self):
        return len(self.times)

    def __getitem__(self, i) -> ManyBodyState:
        return ManyBodyState(self.N, self.grid, self.tensors[i])

    @property
    def final(self):
        return self[-1]


def evolve_exact(state: ManyBodyState, ham: ManyBodyHamiltonian, params: EvolveParams) -> ManyBodyTrajectory:
    """Strang splitting: diagonal potential half steps around an exact kinetic step."""
    if ham.N != state.N or ham.grid != state.grid:
        raise ValueError("Hamiltonian does not match the state")
    dt = params.dt
    kin = np.exp(-1j * dt * ham.kinetic_diag)
    pot_half = np.exp(-0.5j * dt * ham.potential_diag)
    u = state.tensor.copy()
    times, snaps = [0.0], [u.copy()]
    n = params.n_steps
    for step in range(1, n + 1):
        u = pot_half * np.fft.ifftn(kin * np.fft.fftn(pot_half * u))
        if not np.isfinite(u).all():
            raise NumericalError(f"non-finite many-body state at step {step}", step=step)
        if step % params.record_every == 0 or step == n:
            times.append(step * dt)
            snaps.append(u.copy())
    return ManyBodyTrajectory(state.N, state.grid, np.array(times), snaps)


ENERGY_ROUNDOFF = 4e-15


def ground_state_manybody(N: int, ham: ManyBodyHamiltonian, tol: float = 1e-6,
                          max_iter: int = 200_000, dt: float = 1e-2, dt_min: float = 1e-7,
                          check_every: int = 20, initial: ManyBodyState | None = None):
    """Imaginary-time flow in the symmetric subspace; returns ``(state, energy)``.

    Steps whose energy rises above roundoff are rejected and ``dt`` is refined,
    as is done when the Rayleigh residual ``||H psi - E psi||`` stalls.
    """
    grid = ham.grid
    if ham.trap_diag is None:
        raise ValueError("a confining trap is required")
    check_confining(np.asarray(ham.trap), grid)
    if initial is None:
        g = np.exp(-0.5 * grid.x**2).astype(complex)
        tensor = g
        for _ in range(N - 1):
            tensor = np.multiply.outer(tensor, g)
        psi = ManyBodyState(N, grid, tensor).normalized()
    else:
        psi = initial.normalized()
    u = psi.tensor
    w = psi.measure
    diag = ham.potential_diag

    def energy_and_residual(t):
        hu = ham.apply(t)
        e = float(np.real(w * np.vdot(t, hu)))
        return e, float(np.sqrt(w * np.sum(np.abs(hu - e * t) ** 2)))

    def props(dt):
        return np.exp(-dt * ham.kinetic_diag), np.exp(-0.5 * dt * diag)

    kin, half = props(dt)
    e_prev, res = energy_and_residual(u)
    best = np.inf
    for it in range(1, max_iter + 1):
        v = half * np.fft.ifftn(kin * np.fft.fftn(half * u))
        v = symmetrize(ManyBodyState(N, grid, v)).tensor
        v /= np.sqrt(w * np.sum(np.abs(v) ** 2))
        e, r = energy_and_residual(v)
        if e > e_prev + ENERGY_ROUNDOFF * max(1.0, abs(e_prev)):
            if dt / 10 < dt_min:
                raise ConvergenceError(f"energy stalled at {e_prev!r}", residual=res)
            dt /= 10
            kin, half = props(dt)
            best = np.inf
            continue
        u, e_prev, res = v, e, r
        if res <= tol:
            break
        if it % check_every == 0:
            if res > 0.999 * best:
                if dt / 10 < dt_min:
                    raise ConvergenceError(f"residual stalled at {res:.3e}", residual=res)
                dt /= 10
                kin, half = props(dt)
                best = np.inf
            else:
                best = min(best, res)
    else:
        raise ConvergenceError(f"no convergence after {max_iter} iterations (residual {res:.3e})",
                               residual=res)
    # real, positive gauge
    u = u * np.exp(-1j * np.angle(u.flat[np.argmax(np.abs(u))]))
    return ManyBodyState(N, grid, u), e_prev


@dataclass
class EnergyReport:
    energy_pp: float
    kinetic_pp: float
    interaction_pp: float
    trap_pp: float
    comparator: float
    comparator_limit: float
    b_eff: float


def energy_per_particle(state: ManyBodyState, ham: ManyBodyHamiltonian,
                        phi: WaveField | None = None) -> EnergyReport:
    """``<psi, H psi> / N`` split into parts, with the product-state comparators.

    For the orbital ``phi`` the finite-N comparator is
    ``int |phi'|^2 + (N-1)/2 int int V_pair |phi|^2 |phi|^2`` and its large-N
    form is ``int |phi'|^2 + b_eff/2 int |phi|^4`` with ``b_eff = N int V_pair``.
    """
    N, grid = state.N, state.grid
    w = state.measure
    t = state.tensor
    dens = np.abs(t) ** 2
    kin = float(np.real(w * np.vdot(t, ham.kinetic(t)))) / N
    inter = float(w * np.sum(ham.pair_diag * dens)) / N
    trap = 0.0 if ham.trap_diag is None else float(w * np.sum(ham.trap_diag * dens)) / N
    comp = lim = np.nan
    h = grid.h
    b_eff = float(N * h * np.sum(ham.pair_kernel))
    if phi is not None:
        rho = phi.density
        conv = h * np.real(np.fft.ifft(np.fft.fft(ham.pair_kernel) * np.fft.fft(rho)))
        k1 = kinetic_energy(phi)
        comp = k1 + 0.5 * (N - 1) * h * np.sum(rho * conv)
        lim = k1 + 0.5 * b_eff * h * np.sum(rho**2)
        if ham.trap is not None:
            ext = h * np.sum(np.asarray(ham.trap) * rho)
            comp += ext
            lim += ext
    return EnergyReport(energy_pp=kin + inter + trap, kinetic_pp=kin, interaction_pp=inter,
                        trap_pp=trap, comparator=float(comp), comparator_limit=float(lim),
                        b_eff=b_eff)
