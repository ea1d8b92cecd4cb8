"""Hamiltonian Monte Carlo on homogeneous spaces by integration on matrix Lie groups."""

__version__ = "0.1.0"

from .hmc import (  # noqa: E402
    CapabilityError,
    Chain,
    HmcConfig,
    Phase,
    campostrini_trajectory,
    gibbs_momentum,
    hamiltonian,
    hmc_run,
    leapfrog_trajectory,
)
from .matexp import ExpConfig, exp_dispatch  # noqa: E402
from .potentials import Potential, get_potential  # noqa: E402
from .spaces import HomogeneousSpaceSpec, get_space  # noqa: E402

__all__ = [
    "CapabilityError",
    "Chain",
    "ExpConfig",
    "HmcConfig",
    "HomogeneousSpaceSpec",
    "Phase",
    "Potential",
    "campostrini_trajectory",
    "exp_dispatch",
    "get_potential",
    "get_space",
    "gibbs_momentum",
    "hamiltonian",
    "hmc_run",
    "leapfrog_trajectory",
]
