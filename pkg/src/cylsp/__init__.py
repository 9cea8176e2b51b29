"""Numerical laboratory for semiclassical Schrödinger–Poisson states concentrating on circles."""

from .errors import ConfigError, DomainError, InvariantError, NonConvergenceError, SolverError, StagnationError
from .limit2d import GroundEnergyCache, GroundState2D, build_cache, ground_energy, shoot_radial_ground_state
from .model import PotentialSpec, RegionLambda, auxiliary_potential_M, classify_growth, minimize_M_on_ring
from .penalty import PenalizationParams
from .poisson import CylField, interaction_energy, newtonian_potential, ring_kernel

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "DomainError", "InvariantError", "NonConvergenceError", "SolverError", "StagnationError",
    "GroundEnergyCache", "GroundState2D", "build_cache", "ground_energy", "shoot_radial_ground_state",
    "PotentialSpec", "RegionLambda", "auxiliary_potential_M", "classify_growth", "minimize_M_on_ring",
    "PenalizationParams", "CylField", "interaction_energy", "newtonian_potential", "ring_kernel",
]
