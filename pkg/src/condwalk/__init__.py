"""Random walks among deterministic conductances on Z^d.

Submodules: :mod:`~condwalk.environments` (lazy conductance maps),
:mod:`~condwalk.walk` (seeded simulation), :mod:`~condwalk.lattice`
(Dirichlet operators and solvers), :mod:`~condwalk.corrector`,
:mod:`~condwalk.homogenize` (Dirichlet energies and the effective covariance),
:mod:`~condwalk.experiments` and :mod:`~condwalk.cli`.
"""
from .environments import (Constant, Edge, Environment, GrowingBlocks, HashedIid, LocalObservable,
                           Periodic, Perturbed, QuasiPeriodic, Scaled, Shifted, block_average,
                           conductance, pi, shift)
from .homogenize import effective_sigma, sigma_1d_exact
from .lattice import LatticeField, Window
from .walk import run_batch, simulate, simulate_ct

__version__ = "0.1.0"
