"""NV-center site catalog, dipole geometry and orientation-mixed collection.

The c-axis is the surface normal ``z``.  An emitter's two degenerate
transition dipoles lie in the plane perpendicular to its N-V axis; each
dipole is reduced to its angle ``beta`` from the c-axis, and its collection
efficiency mixes the vertical and horizontal solver results as
``c(beta) = c0 cos^2 beta + c90 sin^2 beta``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace

import numpy as np

BASAL_ANGLE = 71.0
CLASSES = ("axial", "basal")


@dataclass(frozen=True)
class NVSite:
    """One zero-phonon line of the catalog."""

    label: str
    zpl_wavelength: float
    site_class: str
    lifetime: float = 2.5

    def __post_init__(self):
        if self.site_class not in CLASSES:
            raise ValueError(f"site_class must be one of {CLASSES}")
        if not 1170.0 <= self.zpl_wavelength <= 1245.0:
            raise ValueError("ZPL wavelength outside the 1170-1245 nm NV band")
        if not self.lifetime > 0:
            raise ValueError("lifetime must be positive")

    @property
    def nv_axis_angle(self) -> float:
        return 0.0 if self.site_class == "axial" else BASAL_ANGLE


# 1179/1222 axial, 1176/1242 basal; the 1173 line is presumed basal.
DEFAULT_CATALOG = (
    NVSite("line1173", 1173.0, "basal", 2.5),
    NVSite("kh", 1176.0, "basal", 2.5),
    NVSite("hh", 1179.0, "axial", 2.5),
    NVSite("kk", 1222.0, "axial", 2.8),
    NVSite("hk", 1242.0, "basal", 2.2),
)


def catalog(overrides: dict | None = None):
    """Default catalog with optional ``{label: {field: value}}`` overrides."""
    overrides = dict(overrides or {})
    out = []
    for site in DEFAULT_CATALOG:
        patch = overrides.pop(site.label, None)
        out.append(replace(site, **patch) if patch else site)
    if overrides:
        raise KeyError(f"unknown catalog labels: {sorted(overrides)}")
    return tuple(out)


def site_by_label(sites, label: str) -> NVSite:
    for s in sites:
        if s.label == label:
            return s
    raise KeyError(label)


def nearest_site(sites, wavelength: float, tolerance: float = 3.0) -> NVSite:
    """Catalog line closest to ``wavelength`` (nm), within ``tolerance``."""
    best = min(sites, key=lambda s: abs(s.zpl_wavelength - wavelength))
    if abs(best.zpl_wavelength - wavelength) > tolerance:
        raise ValueError(f"no catalog line within {tolerance} nm of {wavelength} nm")
    return best


CATALOG_HEADER = ("label", "zpl_nm", "class", "axis_angle_deg")


def write_catalog_csv(path, sites) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CATALOG_HEADER)
        for s in sites:
            w.writerow([s.label, repr(float(s.zpl_wavelength)), s.site_class, repr(float(s.nv_axis_angle))])


def read_catalog_csv(path, lifetimes: dict | None = None):
    """Read a catalog CSV; lifetimes come from ``lifetimes`` or the defaults."""
    defaults = {s.label: s.lifetime for s in DEFAULT_CATALOG}
    defaults.update(lifetimes or {})
    sites = []
    with open(path, newline="") as fh:
        rd = csv.reader(fh)
        if tuple(next(rd)) != CATALOG_HEADER:
            raise ValueError(f"{path}: unexpected header")
        for label, zpl, cls, angle in rd:
            site = NVSite(label, float(zpl), cls, defaults.get(label, 2.5))
            if abs(site.nv_axis_angle - float(angle)) > 1e-9:
                raise ValueError(f"{label}: axis angle {angle} inconsistent with class {cls}")
            sites.append(site)
    return tuple(sites)


# --- collection curve --------------------------------------------------------


@dataclass
class CollectionCurve:
    """Vertical (``c0``) and horizontal (``c90``) efficiencies per structure.

    Keys are pillar diameters in nm or the string ``"bulk"``.
    """

    values: dict = field(default_factory=dict)

    def __post_init__(self):
        clean = {}
        for key, (c0, c90) in self.values.items():
            if not (0 <= c0 <= 1 and 0 <= c90 <= 1):
                raise ValueError(f"efficiencies for {key!r} must lie in [0, 1]")
            clean[key if key == "bulk" else float(key)] = (float(c0), float(c90))
        self.values = clean

    @property
    def diameters(self):
        return sorted(k for k in self.values if k != "bulk")

    def endpoints(self, d, interpolate: bool = False):
        key = d if d == "bulk" else float(d)
        if key in self.values:
            return self.values[key]
        if not interpolate or key == "bulk":
            raise KeyError(f"no collection data for {d!r}")
        ds = self.diameters
        if not ds or not ds[0] <= key <= ds[-1]:
            raise KeyError(f"{d!r} is outside the simulated diameter range")
        c0 = np.interp(key, ds, [self.values[x][0] for x in ds])
        c90 = np.interp(key, ds, [self.values[x][1] for x in ds])
        return float(c0), float(c90)


def mix_collection(curve: CollectionCurve, d, beta: float, interpolate: bool = False) -> float:
    """Collection efficiency of a dipole at ``beta`` degrees from the c-axis."""
    if not 0.0 <= beta <= 90.0:
        raise ValueError("beta must lie in [0, 90] degrees")
    c0, c90 = curve.endpoints(d, interpolate)
    b = np.radians(beta)
    return float(c0 * np.cos(b) ** 2 + c90 * np.sin(b) ** 2)


def nv_axis(site: NVSite) -> np.ndarray:
    """Unit N-V axis, tilted from ``z`` towards ``x``."""
    a = np.radians(site.nv_axis_angle)
    return np.array([np.sin(a), 0.0, np.cos(a)])


def dipole_vectors(site: NVSite, phi: float):
    """The two orthogonal dipole directions in the plane normal to the N-V axis.

    ``phi`` (degrees) rotates the pair about the axis; ``phi = 0`` puts the
    first dipole along the in-plane direction closest to the c-axis.
    """
    n = nv_axis(site)
    if site.nv_axis_angle == 0.0:
        e1, e2 = np.array([1.0, 0.0, 0.0]), np.array([0.0, 1.0, 0.0])
    else:
        z = np.array([0.0, 0.0, 1.0])
        e1 = z - n * (n @ z)
        e1 /= np.linalg.norm(e1)
        e2 = np.cross(n, e1)
    p = np.radians(phi)
    d1 = np.cos(p) * e1 + np.sin(p) * e2
    d2 = -np.sin(p) * e1 + np.cos(p) * e2
    return d1, d2


def beta_of(vector) -> float:
    """Angle (degrees, folded into [0, 90]) between a dipole and the c-axis."""
    v = np.asarray(vector, float)
    c = abs(v[2]) / np.linalg.norm(v)
    return float(np.degrees(np.arccos(np.clip(c, 0.0, 1.0))))


def site_dipole_pair(site: NVSite, phi: float):
    """``(beta1, beta2)`` of the degenerate dipole pair at azimuth ``phi``."""
    if not 0.0 <= phi < 180.0:
        raise ValueError("phi must lie in [0, 180) degrees")
    d1, d2 = dipole_vectors(site, phi)
    return beta_of(d1), beta_of(d2)


@dataclass(frozen=True)
class CollectionBand:
    """Range of single-dipole efficiencies over phi, plus the pair average."""

    low: float
    high: float
    pair_average: float


def site_collection_band(curve: CollectionCurve, d, site: NVSite, samples: int = 181,
                         interpolate: bool = False) -> CollectionBand:
    """Collection band of a site over every in-plane dipole azimuth.

    ``low``/``high`` bound the efficiency of a single dipole of the pair over
    ``phi``; ``pair_average`` is the incoherent mean of the two dipoles, which
    for orthogonal in-plane dipoles does not depend on ``phi``.
    """
    phis = np.linspace(0.0, 180.0, samples, endpoint=False)
    singles, pairs = [], []
    for phi in phis:
        b1, b2 = site_dipole_pair(site, phi)
        c1 = mix_collection(curve, d, b1, interpolate)
        c2 = mix_collection(curve, d, b2, interpolate)
        singles += [c1, c2]
        pairs.append(0.5 * (c1 + c2))
    # the extreme single-dipole betas are the in-plane tilt and 90 degrees
    c90 = curve.endpoints(d, interpolate)[1]
    tilt = 90.0 - site.nv_axis_angle if site.nv_axis_angle else 90.0
    singles += [mix_collection(curve, d, tilt, interpolate), c90]
    return CollectionBand(min(singles), max(singles), float(np.mean(pairs)))


CURVE_HEADER = ("structure", "c0", "c90")


def write_curve_csv(path, curve: CollectionCurve) -> None:
    """One row per structure: ``bulk`` or a diameter in nm."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CURVE_HEADER)
        if "bulk" in curve.values:
            w.writerow(["bulk", *(repr(float(v)) for v in curve.values["bulk"])])
        for d in curve.diameters:
            w.writerow([f"{d:g}", *(repr(float(v)) for v in curve.values[d])])


def read_curve_csv(path) -> CollectionCurve:
    with open(path, newline="") as fh:
        rd = csv.reader(fh)
        if tuple(next(rd)) != CURVE_HEADER:
            raise ValueError(f"{path}: unexpected header")
        return CollectionCurve({(k if k == "bulk" else float(k)): (float(a), float(b)) for k, a, b in rd})
