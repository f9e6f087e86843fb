"""Uniform Yee grid description and CPML profiles."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

COMPONENTS = ("ex", "ey", "ez", "hx", "hy", "hz")

# Offsets (in cells) of each component's sample point relative to node (i, j, k).
COMPONENT_OFFSETS = {
    "ex": (0.5, 0.0, 0.0),
    "ey": (0.0, 0.5, 0.0),
    "ez": (0.0, 0.0, 0.5),
    "hx": (0.0, 0.5, 0.5),
    "hy": (0.5, 0.0, 0.5),
    "hz": (0.5, 0.5, 0.0),
}


def _triple(value, name):
    if np.isscalar(value):
        return (value,) * 3
    value = tuple(value)
    if len(value) != 3:
        raise ValueError(f"{name} needs 3 entries, got {len(value)}")
    return value


@dataclass(frozen=True)
class GridSpec:
    """Uniform cubic grid.

    Parameters
    ----------
    cell_size : float
        Cell edge in nm.
    extents : tuple of int
        Number of cells along x, y, z (PML included).
    courant_factor : float
        ``c * dt / cell_size``.  Must satisfy ``courant_factor * sqrt(3) < 1``.
    pml_cells : int or tuple of int
        CPML thickness on every face of the given axis.  Ignored on periodic
        axes.
    pml_order : int
        Polynomial grading order of the conductivity profile.
    pml_sigma_max : float, optional
        Peak conductivity in units of ``eps0 * c / cell_size``; defaults to the
        usual optimum ``0.8 * (order + 1)``.
    pml_alpha_max : float
        Peak complex-frequency-shift, same units, graded linearly to zero at
        the outer wall.
    origin : tuple of float
        Physical position (nm) of node ``(0, 0, 0)``.
    periodic : tuple of bool
        Periodic wrap per axis (no PML on those axes).
    precision : {"single", "double"}
        Floating point width of the field arrays.
    """

    cell_size: float = 25.0
    extents: tuple = (120, 120, 92)
    courant_factor: float = 0.5
    pml_cells: int | tuple = 10
    pml_order: int = 3
    pml_sigma_max: float | None = None
    pml_alpha_max: float = 0.05
    origin: tuple = (0.0, 0.0, 0.0)
    periodic: tuple = (False, False, False)
    precision: str = "single"
    _pml: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not self.cell_size > 0:
            raise ValueError("cell_size must be positive")
        if not 0 < self.courant_factor < 1 / np.sqrt(3):
            raise ValueError("courant_factor must lie in (0, 1/sqrt(3)) for stability")
        if self.precision not in ("single", "double"):
            raise ValueError("precision must be 'single' or 'double'")
        extents = tuple(int(n) for n in _triple(self.extents, "extents"))
        periodic = tuple(bool(p) for p in _triple(self.periodic, "periodic"))
        pml = tuple(0 if per else int(p)
                    for p, per in zip(_triple(self.pml_cells, "pml_cells"), periodic))
        for n, p, per in zip(extents, pml, periodic):
            if per:
                if n < 1:
                    raise ValueError("periodic axes need at least one cell")
                continue
            if p < 5:
                raise ValueError("pml_cells must be at least 5")
            if n <= 2 * p:
                raise ValueError("each axis needs more than 2*pml_cells cells")
        object.__setattr__(self, "extents", extents)
        object.__setattr__(self, "periodic", periodic)
        object.__setattr__(self, "origin", tuple(float(o) for o in _triple(self.origin, "origin")))
        object.__setattr__(self, "_pml", pml)

    # -- geometry helpers -------------------------------------------------

    @property
    def pml(self) -> tuple:
        """PML thickness per axis (0 on periodic axes)."""
        return self._pml

    @property
    def dtype(self):
        return np.float32 if self.precision == "single" else np.float64

    @property
    def dt(self) -> float:
        """Time step in normalized units (cells / c)."""
        return self.courant_factor

    def interior(self, axis: int) -> tuple:
        """Node index range ``[lo, hi]`` (inclusive) free of PML along ``axis``."""
        n, p = self.extents[axis], self.pml[axis]
        if self.periodic[axis]:
            return 0, n - 1
        return p, n - 1 - p

    def interior_box(self) -> tuple:
        lo = tuple(self.interior(a)[0] for a in range(3))
        hi = tuple(self.interior(a)[1] for a in range(3))
        return lo, hi

    def coords(self, axis: int, offset: float = 0.0) -> np.ndarray:
        """Physical coordinates (nm) of samples ``i + offset`` along ``axis``."""
        n = self.extents[axis]
        return self.origin[axis] + (np.arange(n) + offset) * self.cell_size

    def to_index(self, point) -> np.ndarray:
        """Continuous node-index coordinates of a physical point (nm)."""
        return (np.asarray(point, float) - np.asarray(self.origin)) / self.cell_size

    def nearest_node(self, point) -> tuple:
        idx = np.floor(self.to_index(point) + 0.5).astype(int)
        return tuple(int(i) for i in idx)

    def is_aligned(self, value: float, axis: int, tol: float = 1e-6) -> bool:
        """True when ``value`` (nm) falls on a node plane along ``axis``."""
        x = (value - self.origin[axis]) / self.cell_size
        return abs(x - round(x)) < tol

    def inside_interior(self, point, margin: int = 0) -> bool:
        idx = self.to_index(point)
        for a in range(3):
            lo, hi = self.interior(a)
            if not (lo + margin < idx[a] < hi - margin):
                return False
        return True

    # -- CPML ---------------------------------------------------------------

    def cpml_profile(self, axis: int):
        """Recursive-convolution coefficients for one axis.

        Returns ``(nlo, hi, bE, aE, bH, aH)``; rows ``[0, nlo)`` cover indices
        ``[0, nlo)`` and rows ``[nlo, ...)`` cover ``[hi, n)``.
        """
        n, p = self.extents[axis], self.pml[axis]
        dtype = self.dtype
        if p == 0:
            empty = np.zeros(0, dtype)
            return 0, n, empty, empty, empty, empty
        nlo, hi = p + 1, n - p - 1
        idx = np.r_[0:nlo, hi:n].astype(float)
        inner_hi = n - 1 - p

        def depth(x):
            rho = np.where(x < p, (p - x) / p, np.where(x > inner_hi, (x - inner_hi) / p, 0.0))
            return np.clip(rho, 0.0, 1.0)

        m = self.pml_order
        sigma_max = 0.8 * (m + 1) if self.pml_sigma_max is None else self.pml_sigma_max
        out = []
        for x in (idx, idx + 0.5):
            rho = depth(x)
            sigma = sigma_max * rho**m
            alpha = np.where(rho > 0, self.pml_alpha_max * (1 - rho), 0.0)
            b = np.exp(-(sigma + alpha) * self.dt)
            with np.errstate(invalid="ignore", divide="ignore"):
                a = np.where(sigma + alpha > 0, sigma / (sigma + alpha) * (b - 1), 0.0)
            out += [b.astype(dtype), a.astype(dtype)]
        return (nlo, hi, *out)


def yee_phase_velocity(wavelength: float, cell_size: float, courant_factor: float,
                       direction=(1.0, 0.0, 0.0)) -> float:
    """Numerical phase velocity (units of c) of the Yee scheme.

    Solves ``(sin(w dt/2)/(c dt))^2 = sum_a (sin(k_a dx/2)/dx)^2`` for the
    wavenumber at the vacuum frequency ``w = 2 pi c / wavelength`` by bisection.
    """
    direction = np.asarray(direction, float)
    direction = direction / np.linalg.norm(direction)
    dx = cell_size
    dt = courant_factor * dx  # c = 1 in nm units
    w = 2 * np.pi / wavelength
    lhs = (np.sin(w * dt / 2) / dt) ** 2

    def residual(k):
        return np.sum((np.sin(k * direction * dx / 2) / dx) ** 2) - lhs

    lo, hi = 0.0, np.pi / dx
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if residual(mid) > 0:
            hi = mid
        else:
            lo = mid
    k = 0.5 * (lo + hi)
    return w / k
