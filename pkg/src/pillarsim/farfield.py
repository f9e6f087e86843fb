"""Angular-spectrum far-field projection and objective collection.

The tangential phasors on a horizontal monitor plane are Fourier transformed;
each transverse-wavevector bin then carries the +z Poynting flux of one plane
wave.  On an unbounded plane in a homogeneous medium distinct plane waves
carry no cross flux, so the bin powers add up to the plane flux.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .fdtd.monitors import FluxPlane, poynting_flux

ORIENTATIONS = ("horizontal", "vertical")


@dataclass(frozen=True)
class ObjectiveSpec:
    """Collection optics above the sample, looking down the -z axis."""

    numerical_aperture: float = 0.85
    ambient_index: float = 1.0

    def __post_init__(self):
        if not 0 <= self.numerical_aperture < self.ambient_index:
            raise ValueError("numerical aperture must lie in [0, ambient_index)")


@dataclass
class AngularSpectrum:
    """Plane-wave power per transverse-wavevector bin.

    ``kx``/``ky`` are in rad/nm on an ``fftfreq`` layout, ``power`` is the
    +z flux per bin in the monitor's units.
    """

    kx: np.ndarray
    ky: np.ndarray
    power: np.ndarray
    wavelength: float
    ambient_index: float = 1.0
    plane_flux: float = float("nan")

    @property
    def k0(self) -> float:
        return 2 * np.pi * self.ambient_index / self.wavelength

    @property
    def kt2(self) -> np.ndarray:
        return self.kx[:, None] ** 2 + self.ky[None, :] ** 2

    @property
    def propagating(self) -> np.ndarray:
        return self.kt2 <= self.k0**2

    @property
    def bin_area(self) -> float:
        return abs(self.kx[1] - self.kx[0]) * abs(self.ky[1] - self.ky[0])

    def total(self, propagating_only: bool = True) -> float:
        p = self.power[self.propagating] if propagating_only else self.power
        return float(p.sum())

    def within(self, sin_theta_max: float) -> float:
        """Power in the cone ``sin(theta) <= sin_theta_max`` (ambient medium)."""
        if sin_theta_max <= 0:
            return 0.0
        return float(self.power[self.kt2 <= (sin_theta_max * self.k0) ** 2].sum())

    def cone_profile(self):
        """``(sin_theta, cumulative_power)`` over propagating bins, sorted by angle.

        ``cumulative_power[i]`` is the power in bins with ``sin(theta) <=
        sin_theta[i]``, so the collected power for any aperture follows by
        lookup.
        """
        m = self.propagating
        s = np.sqrt(self.kt2[m]) / self.k0
        order = np.argsort(s, kind="stable")
        return s[order], np.cumsum(self.power[m][order])

    def radiance(self):
        """Power per unit solid angle on the propagating bins.

        Returns ``(theta, phi, dP/dOmega)`` as flat arrays.
        """
        m = self.kt2 < self.k0**2
        kx, ky = np.meshgrid(self.kx, self.ky, indexing="ij")
        kz = np.sqrt(self.k0**2 - self.kt2[m])
        theta = np.arccos(kz / self.k0)
        phi = np.arctan2(ky[m], kx[m])
        # dkx dky = k0^2 cos(theta) dOmega
        density = self.power[m] / self.bin_area * self.k0**2 * (kz / self.k0)
        return theta, phi, density


def near_to_far(plane: FluxPlane, wavelength_index: int = 0, ambient_index: float = 1.0,
                method: str = "magnetic", min_points: int = 1024) -> AngularSpectrum:
    """Angular spectrum of the fields recorded on a +z-facing monitor plane.

    Parameters
    ----------
    plane : FluxPlane
        Uniform-weight z-normal monitor lying entirely in the ambient medium.
    method : {"magnetic", "poynting"}
        ``magnetic`` rebuilds each upgoing plane wave from the tangential H
        spectrum alone and reports its +z flux; it is exact for an unbounded
        plane and much less sensitive to truncation of the plane than the
        mixed product, because an electric dipole's magnetic near field is
        one order weaker in ``1/r``.  ``poynting`` uses ``1/2 Re(E x H*)`` per
        bin, whose sum over all bins equals the plane flux exactly.
    min_points : int
        Zero padding target per axis so the NA disc spans many bins.
    """
    if plane.axis != 2 or plane.normal != 1:
        raise ValueError("far-field projection needs an upward-facing z-normal plane")
    if plane.weighting != "uniform":
        raise ValueError("far-field projection needs a uniform-weight plane")
    if plane.cell_size is None:
        raise ValueError("monitor plane has not been attached to a simulation")
    if method not in ("magnetic", "poynting"):
        raise ValueError("method must be 'magnetic' or 'poynting'")
    eps_amb = ambient_index**2
    if plane.max_eps is not None and not (abs(plane.max_eps - eps_amb) < 1e-9
                                          and abs(plane.min_eps - eps_amb) < 1e-9):
        raise ValueError("monitor plane intersects a dielectric; move it above all structures")
    w = wavelength_index
    dx = plane.cell_size
    nu, nv = plane.eu.shape[1:]
    mu = max(min_points, 1 << int(np.ceil(np.log2(nu))))
    mv = max(min_points, 1 << int(np.ceil(np.log2(nv))))
    kx = 2 * np.pi * np.fft.fftfreq(mu, d=dx)
    ky = 2 * np.pi * np.fft.fftfreq(mv, d=dx)
    wavelength = float(plane.wavelengths[w])

    def spec(a):
        return np.fft.fft2(a[w], s=(mu, mv))

    if method == "poynting":
        # E_x/H_y and E_y/H_x share sample points, so the shift phases cancel
        power = 0.5 * np.real(spec(plane.eu) * np.conj(spec(plane.hv))
                              - spec(plane.ev) * np.conj(spec(plane.hu))) * dx**2 / (mu * mv)
    else:
        k = 2 * np.pi * ambient_index / wavelength
        KX, KY = kx[:, None], ky[None, :]
        kt2 = KX**2 + KY**2
        prop = kt2 < k**2
        kz = np.sqrt(np.where(prop, k**2 - kt2, 1.0))
        # H_y sits half a cell along x, H_x half a cell along y
        hy = spec(plane.hv) * np.exp(-0.5j * KX * dx)
        hx = spec(plane.hu) * np.exp(-0.5j * KY * dx)
        hz = -(KX * hx + KY * hy) / kz
        eta = 1.0 / ambient_index
        power = 0.5 * eta * (abs(hx)**2 + abs(hy)**2 + abs(hz)**2) * (kz / k) * dx**2 / (mu * mv)
        power = np.where(prop, power, 0.0)
    return AngularSpectrum(kx, ky, power, wavelength, ambient_index, poynting_flux(plane, w))


@dataclass
class CollectionResult:
    """Collected and emitted power of one dipole in one structure."""

    structure: object
    orientation: str
    collected_power: float
    total_emitted_power: float
    steps: int = 0
    warning: str | None = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.orientation not in ORIENTATIONS:
            raise ValueError(f"orientation must be one of {ORIENTATIONS}")
        if not self.total_emitted_power > 0:
            raise ValueError("total emitted power must be positive")

    @property
    def efficiency(self) -> float:
        return float(np.clip(self.collected_power / self.total_emitted_power, 0.0, 1.0))

    @property
    def diameter(self):
        s = self.structure
        return s.pillar_diameter if getattr(s, "kind", None) == "pillar" else None


def collection_efficiency(spectrum: AngularSpectrum, objective: ObjectiveSpec, total_power: float,
                          structure=None, orientation: str = "horizontal") -> CollectionResult:
    """Fraction of ``total_power`` inside the objective's acceptance cone."""
    if not total_power > 0:
        raise ValueError("total_power must be positive")
    if abs(objective.ambient_index - spectrum.ambient_index) > 1e-12:
        raise ValueError("objective and spectrum disagree on the ambient index")
    collected = spectrum.within(objective.numerical_aperture / objective.ambient_index)
    return CollectionResult(structure, orientation, max(collected, 0.0), total_power)


def collected_from_profile(sin_theta, cumulative, sin_theta_max: float) -> float:
    """Power inside ``sin_theta_max`` from a :meth:`AngularSpectrum.cone_profile`."""
    if sin_theta_max <= 0:
        return 0.0
    i = int(np.searchsorted(sin_theta, sin_theta_max * (1 + 1e-12), side="right"))
    return float(cumulative[i - 1]) if i > 0 else 0.0


def enhancement_curve(results, bulk: CollectionResult) -> dict:
    """``efficiency(d) / efficiency(bulk)`` keyed by pillar diameter."""
    out = {}
    for r in results:
        if r.orientation != bulk.orientation:
            raise ValueError("pillar and bulk results have different dipole orientations")
        out[r.diameter] = r.efficiency / bulk.efficiency
    return out


CSV_HEADER = ("diameter_nm", "orientation", "efficiency", "enhancement")


def write_collection_csv(path, rows) -> None:
    """Write ``(diameter_nm | "bulk", orientation, efficiency, enhancement)`` rows."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_HEADER)
        for d, o, e, f in rows:
            w.writerow([d if isinstance(d, str) else f"{float(d):g}", o, repr(float(e)), repr(float(f))])


def read_collection_csv(path) -> list:
    with open(path, newline="") as fh:
        rd = csv.reader(fh)
        if tuple(next(rd)) != CSV_HEADER:
            raise ValueError(f"{path}: unexpected header")
        rows = []
        for d, o, e, f in rd:
            rows.append((d if d == "bulk" else float(d), o, float(e), float(f)))
    return rows
