"""Confocal PL raster scans over bulk, pillar-array and etched regions.

The scene is a fine 2D label map.  Each raster point sees the scene's
collection-efficiency map weighted by a normalized Gaussian spot; emitters
are spread uniformly over the material, so etched ground contributes nothing.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import gaussian_filter, map_coordinates

from .fitkit.models import FWHM_TO_SIGMA
from .nvmodel import CollectionCurve, catalog, site_collection_band
from .tcspc import DetectorModel

BULK, ETCHED = ("bulk", None), ("etched", None)


@dataclass
class SceneMap:
    """Region labels on a square grid of ``pixel`` µm.

    Parameters
    ----------
    regions : ndarray of int, shape (ny, nx)
        Index into ``legend`` per scene pixel.
    legend : tuple
        Region keys: ``("bulk", None)``, ``("etched", None)`` or
        ``("pillar", diameter_nm)``.
    pixel : float
        Scene pixel size in µm.
    pitch : float
        Pillar pitch in µm.
    emitter_density : float
        Photons per second reaching the objective from a spot fully filled
        with material of unit collection efficiency.
    """

    regions: np.ndarray
    legend: tuple
    pixel: float = 0.02
    pitch: float = 5.0
    emitter_density: float = 5e6

    def __post_init__(self):
        self.regions = np.asarray(self.regions, np.int64)
        self.legend = tuple((k, None if d is None else float(d)) for k, d in self.legend)
        if self.regions.ndim != 2:
            raise ValueError("region map must be 2D")
        if self.regions.min() < 0 or self.regions.max() >= len(self.legend):
            raise ValueError("region index outside the legend")
        if not self.pixel > 0 or self.emitter_density < 0:
            raise ValueError("pixel must be positive and emitter density non-negative")
        for kind, d in self.legend:
            if kind not in ("bulk", "etched", "pillar"):
                raise ValueError(f"unknown region kind {kind!r}")
            if kind == "pillar" and not 0 < d * 1e-3 < self.pitch:
                raise ValueError("pillar diameter must be positive and below the pitch")

    @property
    def extent(self):
        """``(width, height)`` in µm."""
        return self.regions.shape[1] * self.pixel, self.regions.shape[0] * self.pixel

    def region_at(self, x, y) -> np.ndarray:
        """Legend index at points ``(x, y)`` in µm (nearest scene pixel)."""
        ix = np.clip((np.asarray(x) / self.pixel).astype(int), 0, self.regions.shape[1] - 1)
        iy = np.clip((np.asarray(y) / self.pixel).astype(int), 0, self.regions.shape[0] - 1)
        return self.regions[iy, ix]


def pillar_centers(width, height, pitch, x_start=0.0):
    """Pillar centers of a square array at ``pitch``, inset by half a pitch."""
    xs = np.arange(x_start + pitch / 2, width, pitch)
    ys = np.arange(pitch / 2, height, pitch)
    return [(x, y) for y in ys for x in xs if x + pitch / 2 <= width + 1e-9 and y + pitch / 2 <= height + 1e-9]


def make_scene(width: float = 30.0, height: float = 20.0, pillar_diameter: float = 800.0,
               pitch: float = 5.0, bulk_width: float = 10.0, pixel: float = 0.02,
               emitter_density: float = 5e6) -> SceneMap:
    """Unetched bulk strip on the left, etched field with a pillar array on the right.

    ``bulk_width=0`` gives a pure pillar field and ``bulk_width=width`` pure
    bulk.  ``pillar_diameter=None`` leaves the etched field empty.
    """
    nx, ny = int(round(width / pixel)), int(round(height / pixel))
    x = (np.arange(nx) + 0.5) * pixel
    y = (np.arange(ny) + 0.5) * pixel
    X, Y = np.meshgrid(x, y)
    legend = [BULK, ETCHED]
    regions = np.where(X < bulk_width, 0, 1)
    if pillar_diameter is not None and bulk_width < width:
        legend.append(("pillar", pillar_diameter))
        r = pillar_diameter * 1e-3 / 2
        for cx, cy in pillar_centers(width, height, pitch, bulk_width):
            regions[(X - cx) ** 2 + (Y - cy) ** 2 <= r * r] = 2
    return SceneMap(regions, tuple(legend), pixel, pitch, emitter_density)


@dataclass(frozen=True)
class BeamSpec:
    """Gaussian excitation/collection spot and raster step, both in µm."""

    fwhm: float = 1.2
    step: float = 0.2

    def __post_init__(self):
        if not self.fwhm > 0:
            raise ValueError("spot FWHM must be positive")
        if not 0 < self.step <= self.fwhm:
            raise ValueError("raster step must lie in (0, fwhm]")


def region_efficiency(curve: CollectionCurve, key, sites=None, interpolate: bool = False) -> float:
    """Catalog-averaged, dipole-pair-averaged collection efficiency of a region."""
    kind, d = key
    if kind == "etched":
        return 0.0
    ref = "bulk" if kind == "bulk" else d
    sites = catalog() if sites is None else sites
    return float(np.mean([site_collection_band(curve, ref, s, interpolate=interpolate).pair_average
                          for s in sites]))


@dataclass
class ScanImage:
    x: np.ndarray
    y: np.ndarray
    counts: np.ndarray
    expected: np.ndarray
    regions: np.ndarray
    dwell: float

    def region_mean(self, index: int, which: str = "counts") -> float:
        img = self.counts if which == "counts" else self.expected
        sel = self.regions == index
        if not sel.any():
            raise ValueError("no raster points in that region")
        return float(img[sel].mean())


def raster(scene: SceneMap, beam: BeamSpec):
    w, h = scene.extent
    return np.arange(beam.step / 2, w, beam.step), np.arange(beam.step / 2, h, beam.step)


def expected_scan(scene: SceneMap, beam: BeamSpec, curve: CollectionCurve, dwell: float = 10.0,
                  det: DetectorModel | None = None, sites=None):
    """Noise-free mean counts per raster point for ``dwell`` ms.

    Returns ``(x, y, image)`` with ``image[iy, ix]``.
    """
    if dwell < 0:
        raise ValueError("dwell must be non-negative")
    det = DetectorModel() if det is None else det
    eff = np.array([region_efficiency(curve, k, sites) for k in scene.legend])[scene.regions]
    s = beam.fwhm * FWHM_TO_SIGMA / scene.pixel
    # zero outside the scene: the map is surrounded by etched ground
    blurred = gaussian_filter(eff, s, mode="constant", cval=0.0, truncate=5.0)
    x, y = raster(scene, beam)
    X, Y = np.meshgrid(x, y)
    coords = np.array([Y.ravel() / scene.pixel - 0.5, X.ravel() / scene.pixel - 0.5])
    sampled = map_coordinates(blurred, coords, order=1, mode="nearest").reshape(X.shape)
    rate = det.efficiency * scene.emitter_density * np.maximum(sampled, 0.0) + det.dark_rate
    return x, y, rate * dwell * 1e-3


def render_scan(scene: SceneMap, beam: BeamSpec, curve: CollectionCurve, dwell: float = 10.0,
                det: DetectorModel | None = None, seed: int = 0, sites=None) -> ScanImage:
    """Poisson-sampled scan image; raster row ``i`` draws from Philox stream ``(seed, i)``."""
    x, y, mean = expected_scan(scene, beam, curve, dwell, det, sites)
    counts = np.empty_like(mean)
    for i in range(mean.shape[0]):
        rng = np.random.Generator(np.random.Philox(key=np.array([seed, i], dtype=np.uint64)))
        counts[i] = rng.poisson(mean[i])
    X, Y = np.meshgrid(x, y)
    return ScanImage(x, y, counts, mean, scene.region_at(X, Y), dwell)


def write_image_csv(path, image: np.ndarray) -> None:
    """Plain matrix CSV, one raster row per line."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        for row in np.asarray(image):
            w.writerow([int(v) if float(v).is_integer() else repr(float(v)) for v in row])


def read_image_csv(path) -> np.ndarray:
    with open(path, newline="") as fh:
        return np.array([[float(v) for v in row] for row in csv.reader(fh) if row])


def to_gray8(image: np.ndarray) -> np.ndarray:
    """Linear 8-bit grayscale from min to max."""
    img = np.asarray(image, float)
    lo, hi = img.min(), img.max()
    if hi <= lo:
        return np.zeros(img.shape, np.uint8)
    return np.round((img - lo) / (hi - lo) * 255).astype(np.uint8)
