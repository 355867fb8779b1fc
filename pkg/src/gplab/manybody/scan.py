"""Finite-N convergence of one-particle marginals towards the one-body flow."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

import numpy as np

from ..dynamics import EvolveParams, evolve_gp, evolve_hartree
from ..fields import GridSpec, WaveField
from .evolution import ManyBodyHamiltonian, energy_per_particle, evolve_exact
from .marginals import condensate_overlap, marginal, pure_marginal, sobolev_trace, trace_distance
from .states import check_budget, pair_profile, product_state


def scaled_pair_kernel(pot, grid: GridSpec, N: int, beta: float) -> np.ndarray:
    """Pair potential ``N**(beta - 1) V(N**beta x)`` on a 1D grid.

    This is the one-dimensional analogue of the mean-field family: ``N`` times
    its integral stays ``int V`` for every ``beta``.  ``beta = 0`` is ``V/N``.
    """
    scale = float(N) ** beta
    base = pot if isinstance(pot, np.ndarray) else None
    if base is not None:
        if beta != 0:
            raise ValueError("a pre-sampled pair potential only supports beta = 0")
        return base / N
    return float(N) ** (beta - 1.0) * np.asarray(pot(scale * grid.offset_distance), dtype=float)


def scan_point(phi0: WaveField, pot, beta: float, t: float, N: int, params: EvolveParams,
               comparator=None):
    grid = phi0.grid
    check_budget(grid.n, N)
    kernel = scaled_pair_kernel(pot, grid, N, beta)
    ham = ManyBodyHamiltonian(N, grid, kernel)
    psi0 = product_state(phi0, N)
    if t > 0:
        p = EvolveParams(params.dt, t, record_every=max(int(round(t / params.dt)), 1))
        psi_t = evolve_exact(psi0, ham, p).final
    else:
        psi_t = psi0
    if comparator is None:
        comparator = one_body_comparator(phi0, pot, beta, t, params)
    phi_t = comparator
    g1 = marginal(psi_t, 1)
    return {
        "N": N,
        "beta": beta,
        "t": t,
        "trace_dist": trace_distance(g1, pure_marginal(phi_t, 1)),
        "overlap": condensate_overlap(g1, phi_t),
        "energy_pp": energy_per_particle(psi_t, ham).energy_pp,
        "sobolev_trace_k1": sobolev_trace(g1),
    }


def one_body_comparator(phi0: WaveField, pot, beta: float, t: float, params: EvolveParams) -> WaveField:
    """Hartree flow with ``V`` for ``beta = 0``; cubic flow with ``sigma = int V`` otherwise."""
    if t <= 0:
        return phi0
    grid = phi0.grid
    p = EvolveParams(params.dt, t, record_every=max(int(round(t / params.dt)), 1))
    kernel = pair_profile(pot, grid) if not isinstance(pot, np.ndarray) else pot
    if beta == 0:
        return evolve_hartree(phi0, kernel, p).final
    sigma = float(grid.h * np.sum(kernel))
    return evolve_gp(phi0, sigma, None, p).final


def mean_field_scan(phi0: WaveField, pot, beta: float, t: float, N_list, params: EvolveParams,
                    threads: int = 1):
    """Rows ``N, beta, t, trace_dist, overlap, energy_pp, sobolev_trace_k1`` sorted by ``N``."""
    for N in N_list:
        check_budget(phi0.grid.n, N)
    comparator = one_body_comparator(phi0, pot, beta, t, params)
    Ns = sorted(set(int(N) for N in N_list))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(lambda N: scan_point(phi0, pot, beta, t, N, params, comparator), Ns))
    else:
        rows = [scan_point(phi0, pot, beta, t, N, params, comparator) for N in Ns]
    return sorted(rows, key=lambda r: r["N"])
