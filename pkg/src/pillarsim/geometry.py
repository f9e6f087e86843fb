"""Scene builders for bulk, nanopillar and fully etched structures.

Coordinates are in nm with the substrate top surface at ``z = 0`` and the
pillar axis on ``x = y = 0``.  The substrate is semi-infinite: it runs through
the side and bottom PML.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .fdtd.grid import COMPONENT_OFFSETS, GridSpec

KINDS = ("bulk", "pillar", "etched")
DEFAULT_DIAMETERS = tuple(range(300, 1101, 100))


@dataclass(frozen=True)
class StructureSpec:
    """Geometry and materials of one simulated structure.

    Parameters
    ----------
    kind : {"bulk", "pillar", "etched"}
    pillar_diameter : float
        nm; only used by ``pillar``.
    pillar_height : float
        nm; pillar height, and etch depth for ``etched``.
    emitter_depth : float, optional
        nm below the top surface.  Defaults to 500 for ``bulk`` and to half the
        pillar height for ``pillar``.  ``etched`` scenes carry no emitter.
    substrate_index, ambient_index : float
    """

    kind: str = "bulk"
    pillar_diameter: float = 800.0
    pillar_height: float = 1000.0
    emitter_depth: float | None = None
    substrate_index: float = 2.60
    ambient_index: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if not self.pillar_diameter > 0:
            raise ValueError("pillar_diameter must be positive")
        if not self.pillar_height > 0:
            raise ValueError("pillar_height must be positive")
        if self.substrate_index < self.ambient_index or self.ambient_index < 1:
            raise ValueError("need 1 <= ambient_index <= substrate_index")
        if self.kind == "pillar" and self.emitter_depth is not None:
            if not 0 < self.emitter_depth < self.pillar_height:
                raise ValueError("emitter must sit inside the pillar")
        if self.kind == "bulk" and self.emitter_depth is not None and self.emitter_depth <= 0:
            raise ValueError("emitter must sit inside the substrate")

    @property
    def top_surface(self) -> float:
        """Height (nm) of the highest dielectric surface."""
        return {"bulk": 0.0, "pillar": self.pillar_height, "etched": -self.pillar_height}[self.kind]

    @property
    def substrate_top(self) -> float:
        return -self.pillar_height if self.kind == "etched" else 0.0

    @property
    def depth(self) -> float | None:
        if self.kind == "etched":
            return None
        if self.emitter_depth is not None:
            return float(self.emitter_depth)
        return 500.0 if self.kind == "bulk" else self.pillar_height / 2

    @property
    def emitter_position(self):
        """Dipole position (nm), or ``None`` for emitter-free scenes."""
        d = self.depth
        return None if d is None else (0.0, 0.0, self.top_surface - d)

    @property
    def label(self) -> str:
        return f"pillar-{self.pillar_diameter:g}" if self.kind == "pillar" else self.kind

    def permittivity_at(self, x, y, z):
        """Relative permittivity at physical points (broadcasting arrays).

        Points on a surface count as dielectric.
        """
        x, y, z = np.broadcast_arrays(*(np.asarray(a, float) for a in (x, y, z)))
        inside = z <= self.substrate_top
        if self.kind == "pillar":
            r2 = x * x + y * y
            inside = inside | ((z >= 0) & (z <= self.pillar_height)
                               & (r2 <= (self.pillar_diameter / 2) ** 2))
        return np.where(inside, self.substrate_index**2, self.ambient_index**2)


@dataclass(frozen=True)
class MaterialMap:
    """Permittivity sampled at the Ex, Ey and Ez positions of a grid."""

    grid: GridSpec
    eps: tuple
    structure: StructureSpec

    def __call__(self, component: str) -> np.ndarray:
        return self.eps["xyz".index(component[-1])]

    def cross_section_area(self, z: float) -> float:
        """Dielectric area (nm^2) of the Ez sample layer nearest height ``z``."""
        k = int(np.floor((z - self.grid.origin[2]) / self.grid.cell_size))  # Ez sits at k + 1/2
        layer = self.eps[2][:, :, k]
        return float(np.count_nonzero(layer > self.structure.ambient_index**2)) * self.grid.cell_size**2


def sample_permittivity(spec: StructureSpec, grid: GridSpec) -> tuple:
    """Edge-midpoint staircase sampling of ``spec`` on the three E sublattices."""
    out = []
    for comp in ("ex", "ey", "ez"):
        off = COMPONENT_OFFSETS[comp]
        x, y, z = (grid.coords(a, off[a]) for a in range(3))
        out.append(spec.permittivity_at(x[:, None, None], y[None, :, None], z[None, None, :]))
    return tuple(out)


def build_scene(spec: StructureSpec, grid: GridSpec, air_margin: float = 500.0):
    """Voxelize ``spec`` on ``grid``.

    Returns
    -------
    MaterialMap, tuple or None
        The sampled scene and the dipole position (nm).
    """
    top = spec.top_surface
    z_hi = grid.coords(2)[grid.interior(2)[1]]
    if z_hi - top < air_margin - 1e-9:
        raise ValueError(f"need at least {air_margin:g} nm of ambient above the top surface "
                         "inside the PML-free region")
    if spec.kind == "pillar":
        r = spec.pillar_diameter / 2
        for a in (0, 1):
            lo, hi = (grid.coords(a)[i] for i in grid.interior(a))
            if -r < lo or r > hi:
                raise ValueError("pillar is clipped by the lateral PML")
        z_lo = grid.coords(2)[grid.interior(2)[0]]
        if z_lo >= 0:
            raise ValueError("pillar base must lie inside the PML-free region")
    position = spec.emitter_position
    if position is not None and not grid.inside_interior(position):
        raise ValueError("emitter lies outside the PML-free region")
    eps = sample_permittivity(spec, grid)
    return MaterialMap(grid, eps, spec), position


def diameter_sweep(template: StructureSpec, diameters=DEFAULT_DIAMETERS):
    """One pillar spec per diameter, every other field copied from ``template``."""
    diameters = list(diameters)
    if not diameters:
        raise ValueError("diameter list is empty")
    return [replace(template, kind="pillar", pillar_diameter=float(d)) for d in diameters]


def grid_for(spec: StructureSpec, cell_size: float = 25.0, lateral_span: float = 2500.0,
             substrate_margin: float = 400.0, air_margin: float = 500.0,
             pml_cells: int = 10, courant_factor: float = 0.5, **grid_kwargs) -> GridSpec:
    """Smallest node-aligned grid holding ``spec`` with the requested margins.

    The node ``(0, 0, 0)`` of physical space coincides with a grid node so
    surfaces at multiples of ``cell_size`` fall on node planes.
    """
    dx = float(cell_size)
    half = lateral_span / 2
    if spec.kind == "pillar":
        half = max(half, spec.pillar_diameter / 2 + 250.0)
    n_half = math.ceil(half / dx - 1e-9)
    floor_z = min(spec.substrate_top, spec.top_surface - (spec.depth or 0.0))
    k_lo = math.floor((floor_z - substrate_margin) / dx + 1e-9)
    k_hi = math.ceil((spec.top_surface + air_margin) / dx - 1e-9)
    p = pml_cells
    extents = (2 * n_half + 2 * p + 1, 2 * n_half + 2 * p + 1, k_hi - k_lo + 2 * p + 1)
    origin = (-(n_half + p) * dx, -(n_half + p) * dx, (k_lo - p) * dx)
    return GridSpec(cell_size=dx, extents=extents, courant_factor=courant_factor,
                    pml_cells=pml_cells, origin=origin, **grid_kwargs)
