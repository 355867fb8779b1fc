from .cutoff import CutoffParams, cutoff_theta, empirical_level_sup, level_ratio_bound
from .evolution import (ManyBodyHamiltonian, ManyBodyTrajectory, apply_hamiltonian, energy_per_particle,
                        evolve_exact, expectation, ground_state_manybody)
from .marginals import (DensityMatrixK, condensate_overlap, export_marginal, load_marginal, marginal,
                        pure_marginal, sobolev_trace, trace_distance)
from .scan import mean_field_scan, scaled_pair_kernel
from .states import (MEMORY_BUDGET, ManyBodyState, MemoryBudgetError, asymmetry, check_budget,
                     jastrow_state, pair_profile, product_state, symmetrize)

__all__ = [
    "CutoffParams", "cutoff_theta", "empirical_level_sup", "level_ratio_bound",
    "ManyBodyHamiltonian", "ManyBodyTrajectory", "apply_hamiltonian", "energy_per_particle",
    "evolve_exact", "expectation", "ground_state_manybody",
    "DensityMatrixK", "condensate_overlap", "export_marginal", "load_marginal", "marginal", "pure_marginal", "sobolev_trace",
    "trace_distance", "mean_field_scan", "scaled_pair_kernel",
    "MEMORY_BUDGET", "ManyBodyState", "MemoryBudgetError", "asymmetry", "check_budget",
    "jastrow_state", "pair_profile", "product_state", "symmetrize",
]
