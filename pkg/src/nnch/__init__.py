"""Diffuse-interface solver for two incompressible power-law fluids on a MAC grid.

Modules: ``constitutive`` (stress laws and potentials), ``grid`` and
``mollify`` (staggered operators, projection, smoothing), ``cahn_hilliard``
and ``momentum`` (sub-steps), ``stepper`` (coupled driver and energy
ledger), ``truncation`` (maximal functions and level sets), ``cli``.
"""

from .config import ConfigError, RunConfig, parse_config
from .constitutive import ConstitutiveLaw, FreeEnergy, check_assumption_1
from .grid import Grid, VectorField
from .stepper import eps_convergence_study, run_simulation

__all__ = [
    "ConfigError",
    "ConstitutiveLaw",
    "FreeEnergy",
    "Grid",
    "RunConfig",
    "VectorField",
    "check_assumption_1",
    "eps_convergence_study",
    "parse_config",
    "run_simulation",
]

__version__ = "0.1.0"
