"""Finite-difference time-domain Maxwell solver on a uniform Yee lattice."""

from .grid import GridSpec, yee_phase_velocity
from .monitors import FluxBox, FluxPlane, box_around, plane_from_nm, poynting_flux
from .solver import (
    DipoleSource,
    FieldLattice,
    InstabilityError,
    RunResult,
    Simulation,
    dump_plane,
    load_plane,
)

__all__ = [
    "DipoleSource",
    "FieldLattice",
    "FluxBox",
    "FluxPlane",
    "GridSpec",
    "InstabilityError",
    "RunResult",
    "Simulation",
    "box_around",
    "dump_plane",
    "load_plane",
    "plane_from_nm",
    "poynting_flux",
    "yee_phase_velocity",
]
