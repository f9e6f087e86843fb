"""Time-correlated single-photon counting through a modeled SNSPD chain.

Pulses are grouped into fixed blocks of ``BLOCK_PULSES``; block ``b`` draws
from its own Philox stream keyed by ``(seed, b)``, so the candidate event
stream does not depend on how blocks are spread over workers.  Dead-time
censoring then runs once over the merged, time-ordered stream.
"""

from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy.optimize import nnls

from .fitkit import DecayModel, DecayRegressor, FitConvergenceError
from .fitkit.models import FWHM_TO_SIGMA, decay_curve
from .nvmodel import catalog

log = logging.getLogger(__name__)

BLOCK_PULSES = 1 << 22
BACKSCATTER_LIFETIME = 0.54


@dataclass(frozen=True)
class DetectorModel:
    """SNSPD figures of merit: efficiency, dark rate (Hz), dead time (ns), jitter FWHM (ps)."""

    efficiency: float = 0.80
    dark_rate: float = 100.0
    dead_time: float = 50.0
    irf_fwhm: float = 170.0

    def __post_init__(self):
        if not 0.0 <= self.efficiency <= 1.0:
            raise ValueError("efficiency must lie in [0, 1]")
        if self.dark_rate < 0 or self.dead_time < 0 or self.irf_fwhm < 0:
            raise ValueError("dark rate, dead time and IRF width must be non-negative")


@dataclass(frozen=True)
class EmissionMix:
    """Photon-number weights and lifetimes (ns) of the decay components."""

    components: tuple

    def __post_init__(self):
        comps = tuple((float(w), float(t)) for w, t in self.components)
        if not comps:
            raise ValueError("an emission mix needs at least one component")
        if any(w < 0 for w, _ in comps) or any(t <= 0 for _, t in comps):
            raise ValueError("weights must be >= 0 and lifetimes > 0")
        object.__setattr__(self, "components", comps)

    @property
    def total_weight(self) -> float:
        return sum(w for w, _ in self.components)

    def fractions(self) -> np.ndarray:
        tot = self.total_weight
        return np.array([w / tot for w, _ in self.components]) if tot > 0 else np.zeros(len(self.components))

    def with_backscatter(self, amplitude_ratio: float, lifetime: float = BACKSCATTER_LIFETIME) -> "EmissionMix":
        """Add a fast component whose peak amplitude is ``amplitude_ratio`` times
        the summed peak amplitude of the existing components."""
        signal_amp = sum(w / t for w, t in self.components)
        return EmissionMix(self.components + ((amplitude_ratio * signal_amp * lifetime, lifetime),))


@dataclass(frozen=True)
class BandpassFilter:
    """Ideal top-hat passband in nm."""

    low: float
    high: float

    def __post_init__(self):
        if not self.low < self.high:
            raise ValueError("passband needs low < high")


def lorentzian_band_fraction(center, fwhm, low, high) -> float:
    """Fraction of a Lorentzian's area inside ``[low, high]``."""
    return float((np.arctan(2 * (high - center) / fwhm) - np.arctan(2 * (low - center) / fwhm)) / np.pi)


def filter_mix(zpl_areas: dict, band: BandpassFilter | None = None, sites=None, zpl_fwhm: float = 1.5,
               backscatter: float = 0.0, backscatter_attenuation: float = 1.0) -> EmissionMix:
    """Emission components passed by a bandpass filter.

    Each site contributes ``area * in-band fraction`` of its ZPL Lorentzian at
    the site lifetime.  ``backscatter`` is the photon weight of reflected
    pump light ahead of the filters, scaled by ``backscatter_attenuation``.
    ``band=None`` passes everything.
    """
    sites = catalog() if sites is None else sites
    comps = []
    for s in sites:
        area = float(zpl_areas.get(s.label, 0.0))
        if area <= 0:
            continue
        frac = 1.0 if band is None else lorentzian_band_fraction(s.zpl_wavelength, zpl_fwhm, band.low, band.high)
        comps.append((area * frac, s.lifetime))
    if backscatter > 0:
        comps.append((backscatter * backscatter_attenuation, BACKSCATTER_LIFETIME))
    if not comps:
        comps.append((0.0, 2.5))
    return EmissionMix(tuple(comps))


# --- histogram ------------------------------------------------------------------


@dataclass
class DecayHistogram:
    """Arrival-time histogram over one pulse period."""

    counts: np.ndarray
    bin_ps: float = 16.0
    rep_rate_mhz: float = 20.0
    total_pulses: int = 0
    duration_s: float = 0.0
    irf_fwhm_ps: float = 170.0
    seed: int | None = None
    warning: str | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.counts = np.asarray(self.counts, float)
        if not self.bin_ps > 0:
            raise ValueError("bin width must be positive")
        if np.any(self.counts < 0):
            raise ValueError("counts must be non-negative")
        if self.counts.size * self.bin_ps > 1e6 / self.rep_rate_mhz + 1e-6:
            raise ValueError("histogram span exceeds the pulse period")

    @property
    def time_ps(self) -> np.ndarray:
        """Bin centers in ps."""
        return (np.arange(self.counts.size) + 0.5) * self.bin_ps

    @property
    def time_ns(self) -> np.ndarray:
        return self.time_ps * 1e-3

    @property
    def total(self) -> float:
        return float(self.counts.sum())


def write_histogram_csv(path, hist: DecayHistogram) -> None:
    with open(path, "w") as fh:
        fh.write(f"# rep_rate_mhz={hist.rep_rate_mhz!r}\n")
        fh.write(f"# bin_ps={hist.bin_ps!r}\n")
        fh.write(f"# irf_fwhm_ps={hist.irf_fwhm_ps!r}\n")
        fh.write(f"# seed={hist.seed}\n")
        fh.write(f"# total_pulses={hist.total_pulses}\n")
        fh.write(f"# duration_s={hist.duration_s!r}\n")
        fh.write("time_ps,counts\n")
        for t, c in zip(hist.time_ps, hist.counts):
            fh.write(f"{t!r},{int(c) if float(c).is_integer() else c!r}\n")


def read_histogram_csv(path) -> DecayHistogram:
    meta, rows = {}, []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line.startswith("#"):
                k, _, v = line[1:].strip().partition("=")
                meta[k.strip()] = v.strip()
            elif line and line != "time_ps,counts":
                rows.append(float(line.split(",")[1]))
    seed = meta.get("seed", "None")
    return DecayHistogram(np.array(rows), bin_ps=float(meta["bin_ps"]),
                          rep_rate_mhz=float(meta["rep_rate_mhz"]),
                          total_pulses=int(meta.get("total_pulses", 0)),
                          duration_s=float(meta.get("duration_s", 0.0)),
                          irf_fwhm_ps=float(meta["irf_fwhm_ps"]),
                          seed=None if seed == "None" else int(seed))


# --- stream simulation -------------------------------------------------------------


@njit(cache=True)
def _censor(times, dead_time):
    """Non-paralyzable dead time: keep an event only if the detector has recovered."""
    keep = np.zeros(times.size, np.bool_)
    ready = -np.inf
    for i in range(times.size):
        if times[i] >= ready:
            keep[i] = True
            ready = times[i] + dead_time
    return keep


def _block_rng(seed: int, block: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=np.array([seed, block], dtype=np.uint64)))


def _simulate_block(b, n_pulses, first_pulse, period, mean_per_pulse, fractions, lifetimes,
                    det, seed):
    rng = _block_rng(seed, b)
    n = rng.poisson(mean_per_pulse * n_pulses) if mean_per_pulse > 0 else 0
    pulse = first_pulse + np.sort(rng.integers(0, n_pulses, n))
    comp = rng.choice(len(lifetimes), size=n, p=fractions) if n else np.zeros(0, int)
    delay = rng.exponential(1.0, n) * lifetimes[comp]
    detected = rng.random(n) < det.efficiency
    t_true = pulse[detected] * period + delay[detected]
    dur = n_pulses * period
    n_dark = rng.poisson(det.dark_rate * dur * 1e-9)
    t_dark = first_pulse * period + rng.random(n_dark) * dur
    t_true = np.concatenate([t_true, t_dark])
    jitter = rng.normal(0.0, det.irf_fwhm * 1e-3 * FWHM_TO_SIGMA, t_true.size)
    return t_true, jitter


def simulate_stream(mix: EmissionMix, det: DetectorModel, rep_rate: float = 20.0,
                    duration: float = 1.0, seed: int = 0, photons_per_pulse: float = 0.025,
                    bin_ps: float = 16.0, offset_ns: float = 2.0, workers: int = 1) -> DecayHistogram:
    """Monte Carlo TCSPC acquisition.

    Parameters
    ----------
    mix : EmissionMix
    det : DetectorModel
    rep_rate : float
        Laser repetition rate in MHz.
    duration : float
        Acquisition time in s.
    photons_per_pulse : float
        Mean number of photons reaching the detector per pulse (before the
        detection efficiency).  Scaled by the mix's total weight when that is
        not 1, so a zero-weight mix emits nothing.
    offset_ns : float
        Delay of the laser pulse within the histogram window.
    workers : int
        Threads used to draw blocks; the result does not depend on it.
    """
    if not duration > 0:
        raise ValueError("duration must be positive")
    if not rep_rate > 0:
        raise ValueError("repetition rate must be positive")
    period = 1e3 / rep_rate
    n_bins = int(math.floor(period * 1e3 / bin_ps + 1e-9))
    total_pulses = int(round(duration * rep_rate * 1e6))
    if total_pulses < 1:
        raise ValueError("acquisition shorter than one pulse period")
    fractions = mix.fractions()
    mean = photons_per_pulse if mix.total_weight > 0 else 0.0
    lifetimes = np.array([t for _, t in mix.components])
    detected_rate = mean * det.efficiency * rep_rate * 1e6 + det.dark_rate
    warning = None
    if det.dead_time > 0 and detected_rate > 1e9 / det.dead_time:
        warning = "mean detected rate exceeds 1/dead_time (pile-up regime)"
        log.warning(warning)
    blocks = [(b, min(BLOCK_PULSES, total_pulses - b * BLOCK_PULSES), b * BLOCK_PULSES)
              for b in range(-(-total_pulses // BLOCK_PULSES))]

    def run(args):
        b, n, first = args
        return _simulate_block(b, n, first, period, mean, fractions if mean else None, lifetimes,
                               det, seed)

    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            parts = list(ex.map(run, blocks))
    else:
        parts = [run(a) for a in blocks]
    t_true = np.concatenate([p[0] for p in parts]) if parts else np.zeros(0)
    jitter = np.concatenate([p[1] for p in parts]) if parts else np.zeros(0)
    order = np.argsort(t_true, kind="stable")
    t_true, jitter = t_true[order], jitter[order]
    keep = _censor(t_true, float(det.dead_time)) if det.dead_time > 0 else np.ones(t_true.size, bool)
    micro = np.mod(t_true[keep] + jitter[keep] + offset_ns, period)
    idx = np.minimum((micro * 1e3 / bin_ps).astype(np.int64), n_bins - 1)
    counts = np.bincount(idx, minlength=n_bins).astype(float)
    return DecayHistogram(counts, bin_ps, rep_rate, total_pulses, duration, det.irf_fwhm, seed,
                          warning, {"offset_ns": offset_ns, "events": int(t_true.size)})


# --- lifetime fitting ---------------------------------------------------------------


@dataclass
class LifetimeFit:
    model: DecayModel
    errors: dict
    reduced_chi2: float
    window: tuple
    result: object = None

    @property
    def tau1(self) -> float:
        return self.model.tau1

    @property
    def tau1_err(self) -> float:
        return self.errors["tau1"]


_NAMES = ("a1", "tau1", "a2", "tau2", "baseline", "t0")


FAST_TAU_RANGE = (0.05, 1.5)
MIN_MODEL_VARIANCE = 0.1


def _decay_fit(t, y, p0, fixed, irf_fwhm, window, tau2_range, reweight):
    lower = [0.0, 1e-3, 0.0, tau2_range[0], 0.0, -np.inf]
    upper = [np.inf, np.inf, np.inf, tau2_range[1], np.inf, np.inf]
    reg = DecayRegressor(init=p0, fixed=fixed, lower=lower, upper=upper, irf_fwhm=irf_fwhm,
                         window=window, require_convergence=False)
    reg.fit(t, y)
    for _ in range(reweight):
        if not reg.result_.converged:
            break
        # Pearson weights from the current model; data weights bias low-count tails
        sigma = np.sqrt(np.maximum(reg.predict(t), MIN_MODEL_VARIANCE))
        reg.set_params(init=np.clip(reg.params_, lower, upper))
        reg.fit(t, y, sigma)
    return reg.result_


def _amplitude_seed(t, y, taus, t0, irf_sigma, window):
    """Non-negative linear amplitudes ``[A1, A2, b]`` for fixed lifetimes and onset."""
    keep = (t >= window[0]) & (t <= window[1])
    cols = [decay_curve(t[keep], [1.0, taus[0], 0.0, 1.0, 0.0, t0], irf_sigma),
            decay_curve(t[keep], [0.0, 1.0, 1.0, taus[1], 0.0, t0], irf_sigma),
            decay_curve(t[keep], [0.0, 1.0, 0.0, 1.0, 1.0, t0], irf_sigma)]
    w = 1.0 / np.sqrt(np.maximum(y[keep], 1.0))
    amps, _ = nnls(np.column_stack(cols) * w[:, None], y[keep] * w)
    return amps


def fit_lifetime(hist: DecayHistogram, fix_tau2: bool = True, tau2: float = BACKSCATTER_LIFETIME,
                 components: int = 2, mode: str = "tail", min_counts: float = 1.0,
                 tau1_init: float = 2.5, t0: float | None = None, reweight: int = 2) -> LifetimeFit:
    """Fit an IRF-convolved (bi)exponential decay to a histogram.

    Parameters
    ----------
    fix_tau2 : bool
        Hold the fast lifetime at ``tau2``.  When free it is bounded to
        ``FAST_TAU_RANGE`` so it cannot merge with the slow component.
    components : {1, 2}
        1 fits a single exponential plus baseline.
    mode : {"tail", "full"}
        ``"tail"`` starts the window at the histogram peak with the onset
        ``t0`` held fixed; ``"full"`` includes the rise and fits ``t0``.
    min_counts : float
        The window ends where a 9-bin running mean first drops below this.
    t0 : float, optional
        Onset (ns) for the tail fit; by default taken from a full-model fit.
    reweight : int
        Refits with variances taken from the previous model (Pearson
        weights).  0 keeps the plain sigma = sqrt(max(y, 1)) weights, which
        bias lifetimes low once the tail reaches a few counts per bin.
    """
    if hist.total <= 0:
        raise ValueError("histogram is empty")
    if mode not in ("tail", "full"):
        raise ValueError("mode must be 'tail' or 'full'")
    if components not in (1, 2):
        raise ValueError("components must be 1 or 2")
    t = hist.time_ns
    y = hist.counts
    smooth = np.convolve(y, np.ones(9) / 9, mode="same")
    peak = int(np.argmax(smooth))
    after = np.nonzero(smooth[peak:] < min_counts)[0]
    end = peak + (int(after[0]) if after.size else y.size - peak)
    sigma_irf = hist.irf_fwhm_ps * 1e-3 * FWHM_TO_SIGMA
    rise = max(0, int(np.searchsorted(t, t[peak] - 6 * sigma_irf - 0.5)))
    if end - rise < 8:
        raise ValueError("too few populated bins to fit")
    tau2_range = (tau2, tau2) if fix_tau2 else FAST_TAU_RANGE
    t0_guess = float(t[peak]) - sigma_irf
    full_window = (float(t[rise]), float(t[end - 1]))
    a1, a2, b = _amplitude_seed(t, y, (tau1_init, tau2), t0_guess, sigma_irf, full_window)
    if components == 2:
        p0 = [a1, tau1_init, a2, tau2, b, t0_guess]
        fixed = [False, False, False, fix_tau2, False, False]
    else:
        p0 = [a1 + a2, tau1_init, 0.0, tau2, b, t0_guess]
        fixed = [False, False, True, True, False, False]
    if mode == "full" or t0 is None:
        res = _decay_fit(t, y, p0, fixed, hist.irf_fwhm_ps, full_window, tau2_range, reweight)
        if mode == "full":
            return _lifetime_result(res, full_window)
        if not res.converged:
            raise FitConvergenceError(f"onset estimate did not converge: {res.message}",
                                      _lifetime_result(res, full_window, check=False))
        p0 = list(res.params)
    else:
        p0[5] = float(t0)
    fixed[5] = True
    window = (float(t[peak]), float(t[end - 1]))
    return _lifetime_result(_decay_fit(t, y, p0, fixed, hist.irf_fwhm_ps, window, tau2_range, reweight),
                            window)


def _lifetime_result(res, window, check=True) -> LifetimeFit:
    fit = LifetimeFit(DecayModel.from_params(res.params), dict(zip(_NAMES, res.errors)),
                      res.reduced_chi2, window, res)
    if check and not res.converged:
        raise FitConvergenceError(f"lifetime fit did not converge: {res.message}", fit)
    return fit


def peak_fwhm(hist: DecayHistogram) -> float:
    """Full width at half maximum (ps) of the histogram's main peak, linearly interpolated."""
    y = hist.counts
    i = int(np.argmax(y))
    half = y[i] / 2
    lo = i
    while lo > 0 and y[lo] > half:
        lo -= 1
    hi = i
    while hi < y.size - 1 and y[hi] > half:
        hi += 1
    x = hist.time_ps
    left = x[lo] + (half - y[lo]) / (y[lo + 1] - y[lo]) * (x[lo + 1] - x[lo])
    right = x[hi - 1] + (y[hi - 1] - half) / (y[hi - 1] - y[hi]) * (x[hi] - x[hi - 1])
    return float(right - left)


LIFETIME_HEADER = ("diameter_nm", "band", "tau1_ns", "tau1_err", "a2_over_a1", "reduced_chi2", "photons")


def write_lifetime_csv(path, rows) -> None:
    """Rows of ``(diameter, band, tau1, tau1_err, a2/a1, reduced_chi2, photons)``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(LIFETIME_HEADER)
        for d, band, *vals in rows:
            w.writerow([f"{float(d):g}", band, *(repr(float(v)) for v in vals[:4]), int(vals[4])])


def read_lifetime_csv(path) -> list:
    with open(path, newline="") as fh:
        rd = csv.reader(fh)
        if tuple(next(rd)) != LIFETIME_HEADER:
            raise ValueError(f"{path}: unexpected header")
        return [(float(d), b, *(float(v) for v in vals[:4]), int(vals[4])) for d, b, *vals in rd]
