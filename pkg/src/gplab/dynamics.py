"""Strang split-step evolution for GP, Hartree and free flows, and
imaginary-time ground states of the trapped GP functional."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field as dc_field

import numpy as np

from .fields import (GridSpec, WaveField, gp_energy, hartree_energy, hartree_potential,
                     l2_norm, laplacian, sample_pair_potential, sample_trap, second_moment)

log = logging.getLogger(__name__)


class NumericalError(RuntimeError):
    """Non-finite values appeared during a time evolution."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class ConvergenceError(RuntimeError):
    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


@dataclass(frozen=True)
class EvolveParams:
    dt: float
    t_final: float
    record_every: int = 1
    scheme: str = "strang"

    def __post_init__(self):
        if self.scheme != "strang":
            raise ValueError(f"unsupported scheme {self.scheme!r}")
        if not (self.dt > 0 and self.t_final > 0):
            raise ValueError("dt and t_final must be positive")
        if self.dt > self.t_final * (1 + 1e-12):
            raise ValueError("dt must not exceed t_final")
        if self.t_final / self.dt >= 2**31:
            raise ValueError("too many steps")
        if self.record_every < 1:
            raise ValueError("record_every must be a positive integer")

    @property
    def n_steps(self) -> int:
        return max(int(round(self.t_final / self.dt)), 1)


@dataclass
class Trajectory:
    grid: GridSpec
    times: np.ndarray
    values: np.ndarray  # (snapshots, *grid.shape)

    def __len__(self):
        return len(self.times)

    def __getitem__(self, i) -> WaveField:
        return WaveField(self.grid, self.values[i])

    @property
    def fields(self):
        return [self[i] for i in range(len(self))]

    @property
    def final(self) -> WaveField:
        return self[-1]

    def observables(self, energy_fn=None):
        """Rows of ``time, mass, energy, x2, peak_density``."""
        rows = []
        for t, u in zip(self.times, self.values):
            f = WaveField(self.grid, u)
            rows.append({
                "time": float(t),
                "mass": l2_norm(f) ** 2,
                "energy": float(energy_fn(f)) if energy_fn else float("nan"),
                "x2": second_moment(f),
                "peak_density": float(np.max(f.density)),
            })
        return rows


def _split_step(u0, grid, params, potential_fn):
    """Generic Strang loop; ``potential_fn(u)`` returns the real multiplicative potential."""
    kin = np.exp(-1j * params.dt * grid.k_squared)
    half = -0.5j * params.dt
    u = np.array(u0, dtype=complex)
    times, snaps = [0.0], [u.copy()]
    n = params.n_steps
    for step in range(1, n + 1):
        u = u * np.exp(half * potential_fn(u))
        u = np.fft.ifftn(kin * np.fft.fftn(u))
        u = u * np.exp(half * potential_fn(u))
        if not np.isfinite(u).all():
            raise NumericalError(f"non-finite field at step {step}", step=step)
        if step % params.record_every == 0 or step == n:
            times.append(step * params.dt)
            snaps.append(u.copy())
    return Trajectory(grid, np.array(times), np.array(snaps))


def evolve_gp(field: WaveField, sigma: float, trap=None, params: EvolveParams = None) -> Trajectory:
    """``i u_t = -Delta u + sigma |u|^2 u + V_ext u``."""
    v = sample_trap(trap, field.grid)
    if v is None:
        fn = lambda u: sigma * np.abs(u) ** 2  # noqa: E731
    else:
        fn = lambda u: sigma * np.abs(u) ** 2 + v  # noqa: E731
    return _split_step(field.values, field.grid, params, fn)


def evolve_hartree(field: WaveField, pot, params: EvolveParams, trap=None) -> Trajectory:
    """``i u_t = -Delta u + (V * |u|^2) u``; the convolution is refreshed each half step."""
    g = field.grid
    kernel = sample_pair_potential(pot, g)
    khat = np.fft.fftn(kernel) * g.cell_volume
    v = sample_trap(trap, g)

    def fn(u):
        w = np.fft.ifftn(khat * np.fft.fftn(np.abs(u) ** 2)).real
        return w if v is None else w + v

    return _split_step(field.values, g, params, fn)


def evolve_free(field: WaveField, params: EvolveParams) -> Trajectory:
    return evolve_gp(field, 0.0, None, params)


def free_propagate(field: WaveField, t: float) -> WaveField:
    """Exact ``e^{i t Delta} u`` as a Fourier multiplier."""
    g = field.grid
    return WaveField(g, np.fft.ifftn(np.exp(-1j * t * g.k_squared) * np.fft.fftn(field.values)))


def gp_operator(values, grid: GridSpec, sigma: float, v_ext=None):
    """``(-Delta + V_ext + sigma |u|^2) u``."""
    out = -laplacian(values, grid) + sigma * np.abs(values) ** 2 * values
    if v_ext is not None:
        out = out + v_ext * values
    return out


def eigen_residual(field: WaveField, sigma: float, v_ext=None):
    """Rayleigh quotient ``mu`` and ``||H u - mu u||`` for a normalised field."""
    g = field.grid
    hu = gp_operator(field.values, g, sigma, v_ext)
    mu = float(np.real(g.cell_volume * np.vdot(field.values, hu)))
    res = hu - mu * field.values
    return mu, float(np.sqrt(g.cell_volume * np.sum(np.abs(res) ** 2)))


@dataclass
class GroundStateResult:
    field: WaveField
    mu: float
    energy: float
    residual: float
    iterations: int
    energies: list = dc_field(default_factory=list, repr=False)


TRAP_EDGE_MIN = 50.0
# energy increases below this relative size are treated as roundoff
ENERGY_ROUNDOFF = 4e-15


def check_confining(v_ext: np.ndarray, grid: GridSpec) -> None:
    """The trap must reach ``TRAP_EDGE_MIN`` on the box boundary."""
    edge = [np.take(v_ext, 0, axis=ax) for ax in range(grid.dim)]
    lowest = min(float(e.min()) for e in edge)
    if lowest < TRAP_EDGE_MIN:
        raise ValueError(f"trap is not confining: V_ext at the box edge is {lowest:.3g} < {TRAP_EDGE_MIN:g}")


def ground_state_imag_time(grid: GridSpec, sigma: float, trap, tol: float = 1e-8,
                           max_iter: int = 2_000_000, dt: float = 1e-2,
                           dt_min: float = 1e-7, check_every: int = 50,
                           initial: WaveField | None = None) -> GroundStateResult:
    """Normalised gradient flow with imaginary-time Strang steps.

    Every step is followed by renormalisation and its energy is recorded; the
    step ``dt`` is divided by 10 whenever the eigen-residual stops improving.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    v = sample_trap(trap, grid)
    if v is None:
        raise ValueError("a confining trap is required")
    check_confining(v, grid)
    if initial is None:
        u = np.exp(-0.5 * grid.r_squared / max(grid.L / 8, grid.h) ** 2).astype(complex)
    else:
        u = np.array(initial.values, dtype=complex)
    w = grid.cell_volume
    u /= np.sqrt(w * np.sum(np.abs(u) ** 2))

    def energy(vals):
        return gp_energy(WaveField(grid, vals), sigma, v)

    def propagators(dt):
        return np.exp(-dt * grid.k_squared), -0.5 * dt

    e_prev = energy(u)
    energies = [e_prev]
    kin, half = propagators(dt)
    best = np.inf
    mu, res = eigen_residual(WaveField(grid, u), sigma, v)
    rejected = 0
    for it in range(1, max_iter + 1):
        u_prev = u
        # nonlinearity frozen at the start of the step: keeps the fixed point
        # within O(dt^2) of the minimiser (re-evaluating it mid-step gives O(dt))
        pot_half = np.exp(half * (v + sigma * np.abs(u) ** 2))
        u = pot_half * np.fft.ifftn(kin * np.fft.fftn(pot_half * u))
        u /= np.sqrt(w * np.sum(np.abs(u) ** 2))
        e = energy(u)
        if e > e_prev + ENERGY_ROUNDOFF * max(1.0, abs(e_prev)):
            # the split-step fixed point sits O(dt^2) off the true minimiser;
            # once the flow overshoots it the step is rejected and dt refined
            if dt / 10 < dt_min:
                raise ConvergenceError(f"energy stalled at {e_prev!r} with dt={dt:g}", residual=res)
            u = u_prev
            rejected += 1
            dt /= 10
            kin, half = propagators(dt)
            best = np.inf
            continue
        if e > e_prev + 1e-12 * max(1.0, abs(e_prev)):
            raise RuntimeError(f"imaginary-time energy increased at iterate {it}: {e_prev!r} -> {e!r}")
        energies.append(e)
        e_prev = e
        if it % check_every:
            continue
        mu, res = eigen_residual(WaveField(grid, u), sigma, v)
        if res <= tol:
            break
        if res > 0.999 * best:
            if dt / 10 < dt_min:
                raise ConvergenceError(f"residual stalled at {res:.3e} with dt={dt:g}", residual=res)
            dt /= 10
            kin, half = propagators(dt)
            log.debug("imaginary time: residual %.3e stalled, dt -> %g", res, dt)
            best = np.inf
        else:
            best = min(best, res)
    else:
        raise ConvergenceError(f"no convergence after {max_iter} iterations (residual {res:.3e})",
                               residual=res)
    log.debug("imaginary time: %d iterations, %d rejected steps, final dt %g", it, rejected, dt)
    # fix the global phase so the minimiser is real and positive
    u = u * np.exp(-1j * np.angle(u.flat[np.argmax(np.abs(u))]))
    f = WaveField(grid, u)
    mu, res = eigen_residual(f, sigma, v)
    return GroundStateResult(field=f, mu=mu, energy=energy(u), residual=res,
                             iterations=it, energies=energies)


def harmonic_trap(omega2: float = 1.0):
    """``omega2 * |x|^2`` as a callable of the mesh coordinates."""
    return lambda *xs: omega2 * sum(x**2 for x in xs)


@dataclass
class ReleaseResult:
    ground: GroundStateResult
    trajectory: Trajectory
    widths: np.ndarray


def trap_release(grid: GridSpec, sigma: float, trap, params: EvolveParams, tol: float = 1e-8) -> ReleaseResult:
    """Trapped minimiser evolved with the trap switched off; reports ``<x^2>_t``."""
    ground = ground_state_imag_time(grid, sigma, trap, tol=tol)
    traj = evolve_gp(ground.field, sigma, None, params)
    widths = np.array([second_moment(f) for f in traj.fields])
    return ReleaseResult(ground, traj, widths)


def hartree_energy_fn(pot):
    return lambda f: hartree_energy(f, pot)


def gp_energy_fn(sigma, trap=None):
    return lambda f: gp_energy(f, sigma, trap)
