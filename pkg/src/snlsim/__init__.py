"""Simulation and verification toolkit for the defocusing stochastic NLS.

Modules: ``spectral`` (grid, transforms, norms), ``propagator`` (linear
group and Duhamel integrals), ``noise`` (Wiener noise and stochastic
convolution), ``dynamics`` (split-step solvers), ``picard`` (fixed-point
map), ``perturbation`` (smallness partitions and existence ledger),
``ensemble`` (Monte Carlo identities), ``config`` / ``cli`` (experiments).
"""

from .dynamics import (
    NonlinearitySpec,
    SolverConfig,
    energy,
    mass,
    solve_deterministic,
    solve_perturbed_v,
    solve_snls,
    solve_truncated,
)
from .noise import MultiplierOperator, NoiseStream, hs_norm
from .spectral import GridField, SpectralGrid, make_grid

__version__ = "0.1.0"

__all__ = [
    "GridField",
    "MultiplierOperator",
    "NoiseStream",
    "NonlinearitySpec",
    "SolverConfig",
    "SpectralGrid",
    "energy",
    "hs_norm",
    "make_grid",
    "mass",
    "solve_deterministic",
    "solve_perturbed_v",
    "solve_snls",
    "solve_truncated",
]
