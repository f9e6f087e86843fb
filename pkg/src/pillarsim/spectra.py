"""Photoluminescence spectra: synthesis, seven-Lorentzian fits and pillar/bulk comparison.

A spectrum is five catalog zero-phonon lines plus two broad phonon sidebands
on a flat dark floor.  Counts are per wavelength bin; fits run on the count
density (counts per nm) so peak areas come out in counts.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .fitkit import FitConvergenceError, LorentzianPeak, LorentzianSumRegressor, check_xy
from .fitkit.models import lorentzian_sum
from .nvmodel import CollectionCurve, catalog, site_collection_band

SIDEBAND_LABELS = ("sideband1", "sideband2")
SIDEBAND_SEEDS = (1190.0, 1260.0)


@dataclass
class Spectrum:
    """Counts per bin on an ascending wavelength grid (nm)."""

    wavelength: np.ndarray
    counts: np.ndarray
    label: str = ""
    tag: str = ""

    def __post_init__(self):
        self.wavelength = np.asarray(self.wavelength, float)
        self.counts = np.asarray(self.counts, float)
        if self.wavelength.ndim != 1 or self.wavelength.shape != self.counts.shape:
            raise ValueError("wavelength and counts must be 1D arrays of equal length")
        if self.wavelength.size < 2 or np.any(np.diff(self.wavelength) <= 0):
            raise ValueError("wavelength grid must be strictly ascending")
        if not np.all(np.isfinite(self.counts)) or np.any(self.counts < 0):
            raise ValueError("counts must be finite and non-negative")

    @property
    def bin_width(self) -> np.ndarray:
        return np.gradient(self.wavelength)


def write_spectrum_csv(path, spectrum: Spectrum) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("wavelength_nm", "counts"))
        for x, c in zip(spectrum.wavelength, spectrum.counts):
            w.writerow((repr(float(x)), repr(float(c))))


def read_spectrum_csv(path, label: str = "") -> Spectrum:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    with open(path) as fh:
        if fh.readline().strip() != "wavelength_nm,counts":
            raise ValueError(f"{path}: unexpected header")
    return Spectrum(data[:, 0], data[:, 1], label=label)


# --- synthesis --------------------------------------------------------------------


@dataclass(frozen=True)
class SynthOptions:
    """Line shapes and count levels of synthetic spectra."""

    start: float = 1150.0
    stop: float = 1300.0
    step: float = 0.1
    zpl_fwhm: float = 1.5
    sideband_centers: tuple = (1192.0, 1262.0)
    sideband_fwhm: tuple = (25.0, 25.0)
    sideband_fractions: tuple = (0.6, 0.4)
    exposure: float = 5e6
    dark_per_bin: float = 1.0
    zpl_broadening: float = 1.0
    zpl_shift: float = 0.0

    def grid(self) -> np.ndarray:
        n = int(round((self.stop - self.start) / self.step)) + 1
        return self.start + self.step * np.arange(n)


def default_collection_curve(diameters=range(300, 1101, 100), axial_gain=2.0, basal_gain=10.0,
                             peak=800.0, width=300.0) -> CollectionCurve:
    """Measurement-like curve: pillars lift axial lines ~2x and basal lines ~10x.

    The bulk endpoints are the quoted bulk efficiencies.  Pillar gains follow a
    Gaussian bump in diameter peaking at ``peak``.  ``c90`` carries the axial
    gain and ``c0`` is chosen so the basal pair average carries the basal gain.
    """
    c0_b, c90_b = 0.0063, 0.037
    w90 = 1 - 0.5 * np.sin(np.radians(71.0)) ** 2  # basal pair-average weight of c90
    basal_b = c0_b * (1 - w90) + c90_b * w90
    values = {"bulk": (c0_b, c90_b)}
    for d in diameters:
        bump = np.exp(-(((d - peak) / width) ** 2))
        ga = 1 + (axial_gain - 1) * bump
        gb = 1 + (basal_gain - 1) * bump
        c90 = c90_b * ga
        c0 = (gb * basal_b - c90 * w90) / (1 - w90)
        values[d] = (min(c0, 1.0), min(c90, 1.0))
    return CollectionCurve(values)


def expected_zpl_areas(weights: dict, curve: CollectionCurve, structure, sites=None,
                       exposure: float = 5e6) -> dict:
    """Noise-free ZPL areas (counts): ``exposure * weight * pair-averaged collection``."""
    sites = catalog() if sites is None else sites
    out = {}
    for s in sites:
        w = float(weights.get(s.label, 0.0))
        if w < 0:
            raise ValueError("site weights must be non-negative")
        out[s.label] = exposure * w * site_collection_band(curve, structure, s).pair_average
    return out


def synth_spectrum(weights: dict, curve: CollectionCurve, structure, seed=None, sites=None,
                   options: SynthOptions = SynthOptions(), label: str = "") -> Spectrum:
    """Poisson-sampled spectrum of the catalog lines seen through ``structure``.

    ``weights`` maps site labels to relative emitter abundance; ``structure``
    is ``"bulk"`` or a pillar diameter present in ``curve``.  Sideband areas
    are fixed fractions of the summed ZPL area.  The grid starts at the
    long-pass edge, so nothing below it is recorded.
    """
    sites = catalog() if sites is None else sites
    x = options.grid()
    areas = expected_zpl_areas(weights, curve, structure, sites, options.exposure)
    params = []
    for s in sites:
        params += [areas[s.label], s.zpl_wavelength + options.zpl_shift,
                   options.zpl_fwhm * options.zpl_broadening]
    total = sum(areas.values())
    for c, g, f in zip(options.sideband_centers, options.sideband_fwhm, options.sideband_fractions):
        params += [f * total, c, g]
    mean = lorentzian_sum(x, params) * options.step + options.dark_per_bin
    rng = np.random.default_rng(seed)
    counts = rng.poisson(mean).astype(float)
    return Spectrum(x, counts, label=label or str(structure), tag=f"seed={seed}")


# --- fitting ----------------------------------------------------------------------


@dataclass
class SpectrumModel:
    """Seven fitted Lorentzians (five ZPLs, two sidebands) with covariance.

    ``covariance`` is over ``[area, center, fwhm] * 7 + [baseline]`` in the
    order of ``labels``.
    """

    labels: tuple
    peaks: tuple
    baseline: float
    covariance: np.ndarray
    converged: bool
    reduced_chi2: float
    label: str = ""

    def __post_init__(self):
        if len(self.peaks) != 7 or len(self.labels) != 7:
            raise ValueError("a spectrum model has exactly seven peaks")

    @property
    def zpl_labels(self):
        return tuple(lb for lb in self.labels if lb not in SIDEBAND_LABELS)

    def index(self, label: str) -> int:
        return self.labels.index(label)

    def peak(self, label: str) -> LorentzianPeak:
        return self.peaks[self.index(label)]

    def param_cov(self, label: str) -> np.ndarray:
        i = 3 * self.index(label)
        return self.covariance[i:i + 3, i:i + 3]

    def errors(self, label: str) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.param_cov(label)), 0, None))

    def curve(self, x) -> np.ndarray:
        """Model count density (counts per nm)."""
        p = [v for pk in self.peaks for v in (pk.area, pk.center, pk.fwhm)]
        return lorentzian_sum(x, p) + self.baseline


class SevenPeakFitter(BaseEstimator):
    """Seven-Lorentzian decomposition of a PL spectrum.

    ZPL centers start on the catalog lines and are bounded to
    ``+/- center_window`` nm; sidebands start at 1190 and 1260 nm with widths
    of at least ``min_sideband_fwhm``.

    Parameters
    ----------
    sites : sequence of NVSite, optional
    center_window : float
    zpl_fwhm_init : float
    min_sideband_fwhm : float
    """

    def __init__(self, sites=None, center_window=3.0, zpl_fwhm_init=1.5,
                 min_sideband_fwhm=10.0, max_iter=200):
        self.sites = sites
        self.center_window = center_window
        self.zpl_fwhm_init = zpl_fwhm_init
        self.min_sideband_fwhm = min_sideband_fwhm
        self.max_iter = max_iter

    def _init(self, x, density, step):
        sites = sorted(catalog() if self.sites is None else self.sites, key=lambda s: s.zpl_wavelength)
        if len(sites) != 5:
            raise ValueError("the seven-peak model needs exactly five catalog lines")
        floor = float(np.percentile(density, 2))
        init, lo, hi, labels = [], [], [], []
        zpl_total = 0.0
        for s in sites:
            near = np.abs(x - s.zpl_wavelength) <= 1.0
            ring = (np.abs(x - s.zpl_wavelength) > 4.0) & (np.abs(x - s.zpl_wavelength) < 8.0)
            under = float(np.median(density[ring])) if ring.any() else floor
            height = max(float(density[near].max()) - under, 0.0) if near.any() else 0.0
            area = max(height * np.pi * self.zpl_fwhm_init / 2, 1e-6)
            zpl_total += area
            init.append([area, s.zpl_wavelength, self.zpl_fwhm_init])
            lo.append([0.0, s.zpl_wavelength - self.center_window, 0.1])
            hi.append([np.inf, s.zpl_wavelength + self.center_window, 3 * self.center_window])
            labels.append(s.label)
        rest = max(float(np.sum((density - floor) * step)) - zpl_total, 1e-6)
        for lb, c, f in zip(SIDEBAND_LABELS, SIDEBAND_SEEDS, (0.6, 0.4)):
            init.append([f * rest, c, 2.5 * self.min_sideband_fwhm])
            lo.append([0.0, c - 25.0, self.min_sideband_fwhm])
            hi.append([np.inf, c + 25.0, 200.0])
            labels.append(lb)
        return tuple(labels), np.array(init), np.array(lo), np.array(hi), max(floor, 0.0)

    def fit(self, X, y, label: str = ""):
        x, counts = check_xy(X, y)
        step = np.gradient(x)
        density = counts / step
        sigma = np.sqrt(np.maximum(counts, 1.0)) / step
        labels, p0, lo, hi, floor = self._init(x, density, step)
        reg = LorentzianSumRegressor(init_peaks=p0, lower=lo, upper=hi, baseline=floor,
                                     max_iter=self.max_iter, require_convergence=False)
        reg.fit(x, density, sigma=sigma)
        res = reg.result_
        peaks = tuple(LorentzianPeak(*row) for row in reg.peaks_)
        self.model_ = SpectrumModel(labels, peaks, reg.baseline_, res.covariance, res.converged,
                                    res.reduced_chi2, label)
        self.result_ = res
        if not res.converged:
            raise FitConvergenceError(f"seven-peak fit did not converge: {res.message}", self.model_)
        return self

    def predict(self, X):
        check_is_fitted(self, "model_")
        x = check_xy(X)
        return self.model_.curve(x) * np.gradient(x)


def fit_seven(spectrum: Spectrum, sites=None, **kwargs) -> SpectrumModel:
    """Fit five ZPLs and two phonon sidebands; raises on non-convergence."""
    if spectrum.wavelength[0] > 1170.0 or spectrum.wavelength[-1] < 1280.0:
        raise ValueError("spectrum must cover the NV band (about 1150-1300 nm)")
    return SevenPeakFitter(sites=sites, **kwargs).fit(spectrum.wavelength, spectrum.counts,
                                                      label=spectrum.label).model_


# --- comparison -------------------------------------------------------------------


@dataclass(frozen=True)
class ZplComparison:
    label: str
    ratio: float
    ratio_err: float
    width_ratio: float
    width_ratio_err: float
    shift_nm: float
    shift_err: float


@dataclass
class EnhancementReport:
    """Pillar-over-bulk ZPL ratios for one pillar diameter."""

    diameter: float | None
    rows: list = field(default_factory=list)

    def row(self, label: str) -> ZplComparison:
        for r in self.rows:
            if r.label == label:
                return r
        raise KeyError(label)


def compare(pillar: SpectrumModel, bulk: SpectrumModel, diameter=None) -> EnhancementReport:
    """Area ratio, width ratio and center shift per catalog ZPL.

    The two fits are independent, so their covariances combine block-diagonally;
    each quantity's gradient is taken over the full parameter vector of both fits.
    """
    if not (pillar.converged and bulk.converged):
        raise ValueError("both spectrum models must be converged")
    if set(pillar.zpl_labels) != set(bulk.zpl_labels):
        raise ValueError("pillar and bulk models cover different ZPL labels")
    cov = np.zeros((2 * pillar.covariance.shape[0],) * 2)
    n = pillar.covariance.shape[0]
    cov[:n, :n] = pillar.covariance
    cov[n:, n:] = bulk.covariance
    rows = []
    for lb in pillar.zpl_labels:
        ip, ib = 3 * pillar.index(lb), n + 3 * bulk.index(lb)
        P, B = pillar.peak(lb), bulk.peak(lb)
        out = []
        for k, (num, den) in enumerate(((P.area, B.area), (P.fwhm, B.fwhm))):
            off = 0 if k == 0 else 2
            g = np.zeros(2 * n)
            if den <= 0:
                raise ValueError(f"{lb}: bulk {'area' if k == 0 else 'width'} is zero")
            g[ip + off] = 1.0 / den
            g[ib + off] = -num / den**2
            out += [num / den, float(np.sqrt(max(g @ cov @ g, 0.0)))]
        g = np.zeros(2 * n)
        g[ip + 1], g[ib + 1] = 1.0, -1.0
        out += [P.center - B.center, float(np.sqrt(max(g @ cov @ g, 0.0)))]
        rows.append(ZplComparison(lb, *out))
    return EnhancementReport(diameter, rows)


REPORT_HEADER = ("diameter_nm", "zpl_label", "ratio", "ratio_err", "width_ratio",
                 "width_ratio_err", "shift_nm", "shift_err")


def write_report_csv(path, reports) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(REPORT_HEADER)
        for rep in reports:
            for r in rep.rows:
                w.writerow(["" if rep.diameter is None else f"{float(rep.diameter):g}", r.label,
                            *(repr(float(v)) for v in (r.ratio, r.ratio_err, r.width_ratio,
                                                       r.width_ratio_err, r.shift_nm, r.shift_err))])


def read_report_csv(path) -> list:
    reports = {}
    with open(path, newline="") as fh:
        rd = csv.reader(fh)
        if tuple(next(rd)) != REPORT_HEADER:
            raise ValueError(f"{path}: unexpected header")
        for d, lb, *vals in rd:
            key = None if d == "" else float(d)
            reports.setdefault(key, EnhancementReport(key)).rows.append(
                ZplComparison(lb, *(float(v) for v in vals)))
    return list(reports.values())


MODEL_HEADER = ("label", "area", "area_err", "center_nm", "center_err", "fwhm_nm", "fwhm_err")


def write_model_csv(path, model: SpectrumModel) -> None:
    """Fitted peaks with 1-sigma errors; the baseline is a ``baseline`` row
    with its density in the ``area`` column."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(MODEL_HEADER)
        for lb, pk in zip(model.labels, model.peaks):
            e = model.errors(lb)
            w.writerow([lb, *(repr(float(v)) for v in (pk.area, e[0], pk.center, e[1], pk.fwhm, e[2]))])
        err_b = float(np.sqrt(max(model.covariance[-1, -1], 0.0)))
        w.writerow(["baseline", repr(float(model.baseline)), repr(err_b), "", "", "", ""])


def read_model_csv(path) -> dict:
    """``{label: (area, area_err, center, center_err, fwhm, fwhm_err)}``; baseline as ``(b, err)``."""
    out = {}
    with open(path, newline="") as fh:
        rd = csv.reader(fh)
        if tuple(next(rd)) != MODEL_HEADER:
            raise ValueError(f"{path}: unexpected header")
        for row in rd:
            out[row[0]] = tuple(float(v) for v in row[1:] if v != "")
    return out
