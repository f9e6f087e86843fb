"""End-to-end workflows behind the CLI subcommands.

Each workflow takes a :class:`RunConfig` and returns an :class:`Outcome`
listing written files and per-item failures.  Config problems raise
:class:`ConfigError`.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..collection import run_collection
from ..farfield import ObjectiveSpec, collected_from_profile, write_collection_csv
from ..fdtd import InstabilityError
from ..fitkit import FitConvergenceError
from ..geometry import StructureSpec
from ..nvmodel import CollectionCurve, read_curve_csv, site_collection_band, write_curve_csv
from ..scansim import BeamSpec, make_scene, render_scan, to_gray8, write_image_csv
from ..spectra import (SynthOptions, compare, default_collection_curve, expected_zpl_areas,
                       fit_seven, read_spectrum_csv, synth_spectrum, write_model_csv,
                       write_report_csv, write_spectrum_csv)
from ..tcspc import (BandpassFilter, DetectorModel, filter_mix, fit_lifetime, read_histogram_csv,
                     simulate_stream, write_histogram_csv, write_lifetime_csv)
from . import plots
from .cache import RunCache, content_key
from .config import ConfigError, RunConfig

log = logging.getLogger(__name__)

ORIENTATIONS = ("horizontal", "vertical")
SOLVER_VERSION = 1


@dataclass
class Outcome:
    files: list = field(default_factory=list)
    failures: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)

    @property
    def exit_code(self) -> int:
        return 2 if self.failures else 0


def _out_dir(cfg: RunConfig) -> Path:
    out = Path(cfg["run"]["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _substream(seed: int, *ids) -> int:
    """Independent integer seed for one item of a workflow."""
    return int(np.random.SeedSequence([seed, *ids]).generate_state(1, np.uint64)[0])


# --- collection sweep ---------------------------------------------------------------


def structure_specs(cfg: RunConfig):
    st = cfg["structure"]
    common = dict(pillar_height=st["pillar_height"], substrate_index=st["substrate_index"],
                  ambient_index=st["ambient_index"])
    bulk = StructureSpec("bulk", emitter_depth=st["bulk_depth"], **common)
    pillars = [StructureSpec("pillar", pillar_diameter=d, **common) for d in st["diameters"]]
    return bulk, pillars


def solver_settings(cfg: RunConfig) -> dict:
    g, s = cfg["grid"], cfg["source"]
    return dict(cell_size=g["cell_size"], wavelength=s["wavelength"],
                pulse_bandwidth=s["pulse_bandwidth"], decay=s["decay"], max_steps=s["max_steps"],
                precision=g["precision"],
                grid_options={k: g[k] for k in ("lateral_span", "substrate_margin", "air_margin",
                                                "pml_cells", "courant_factor")})


def solve_collection(spec: StructureSpec, orientation: str, settings: dict,
                     cache: RunCache | None = None, resume: bool = False) -> dict:
    """Solver record for one run, reused from ``cache`` when ``resume`` is set.

    The record holds the emitted power and the cone profile, so any
    aperture can be evaluated afterwards without re-running the solver.
    """
    key = content_key({"v": SOLVER_VERSION, "spec": spec.__dict__, "orientation": orientation,
                       "settings": settings})
    if cache is not None and resume:
        rec = cache.get(key)
        if rec is not None:
            rec["cached"] = True
            return rec
    res = run_collection(spec, orientation, objective=ObjectiveSpec(0.0, spec.ambient_index),
                         **settings)
    s, cum = res.extra["profile"]
    rec = {
        "key": key, "kind": spec.kind, "diameter": res.diameter, "orientation": orientation,
        "total": res.total_emitted_power, "sin_theta": s.tolist(), "cumulative": cum.tolist(),
        "steps": res.steps, "warning": res.warning, "decayed": bool(res.extra["decayed"]),
        "seconds": res.extra["seconds"], "plane_flux": res.extra["plane_flux"],
        "ambient_index": spec.ambient_index, "cached": False,
    }
    if cache is not None:
        cache.put(key, rec)
    return rec


def record_efficiency(rec: dict, numerical_aperture: float) -> float:
    collected = collected_from_profile(np.asarray(rec["sin_theta"]), np.asarray(rec["cumulative"]),
                                       numerical_aperture / rec["ambient_index"])
    return float(np.clip(collected / rec["total"], 0.0, 1.0))


def collection_sweep(cfg: RunConfig, resume: bool = False) -> Outcome:
    out = _out_dir(cfg)
    na = cfg["objective"]["numerical_aperture"]
    bulk, pillars = structure_specs(cfg)
    ObjectiveSpec(na, bulk.ambient_index)
    settings = solver_settings(cfg)
    cache = RunCache(cfg["run"]["cache_dir"])
    outcome = Outcome()
    records = {}
    for orientation in ORIENTATIONS:
        for spec in [bulk, *pillars]:
            key = ("bulk" if spec.kind == "bulk" else spec.pillar_diameter, orientation)
            try:
                rec = solve_collection(spec, orientation, settings, cache, resume)
            except (InstabilityError, ValueError) as exc:
                outcome.failures.append(f"{spec.label} {orientation}: {exc}")
                continue
            if not rec["decayed"]:
                outcome.failures.append(f"{spec.label} {orientation}: {rec['warning']}")
            records[key] = rec
    eff = {k: record_efficiency(r, na) for k, r in records.items()}
    rows, diag = [], []
    for orientation in ORIENTATIONS:
        b = eff.get(("bulk", orientation))
        for d in ["bulk", *[p.pillar_diameter for p in pillars]]:
            if (d, orientation) not in eff:
                continue
            e = eff[(d, orientation)]
            enh = _ratio(e, b) if b is not None else float("nan")
            rows.append((d, orientation, e, enh))
            r = records[(d, orientation)]
            diag.append((d, orientation, r["steps"], r["decayed"], r["cached"], f"{r['seconds']:.1f}"))
    p = out / "collection.csv"
    write_collection_csv(p, rows)
    outcome.files.append(p)
    p = out / "runs.csv"
    with open(p, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("structure", "orientation", "steps", "decayed", "cached", "seconds"))
        w.writerows(diag)
    outcome.files.append(p)
    complete = [k for k in ["bulk", *[q.pillar_diameter for q in pillars]]
                if all((k, o) in eff for o in ORIENTATIONS)]
    curve = CollectionCurve({k: (eff[(k, "vertical")], eff[(k, "horizontal")]) for k in complete})
    p = out / "collection_curve.csv"
    write_curve_csv(p, curve)
    outcome.files.append(p)
    if "bulk" in curve.values:
        table = band_table(curve, cfg.sites)
        p = out / "enhancement_bands.csv"
        with open(p, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(BAND_HEADER)
            w.writerows([(f"{r[0]:g}", *(repr(float(v)) for v in r[1:])) for r in table])
        outcome.files.append(p)
        outcome.files.append(plots.collection_plot(out / "collection.png", rows, table))
        outcome.summary["bands"] = table
    outcome.summary["efficiency"] = eff
    return outcome


def _ratio(a, b):
    return a / b if b > 0 else float("nan")


BAND_HEADER = ("diameter_nm", "axial_enhancement", "basal_low", "basal_high", "basal_pair_average")


def band_table(curve: CollectionCurve, sites):
    """Axial-site enhancement and the basal-site band per diameter, relative to bulk.

    Each basal entry divides by the bulk pair-averaged efficiency of the same site.
    """
    axial = next(s for s in sites if s.site_class == "axial")
    basal = next(s for s in sites if s.site_class == "basal")
    ab = site_collection_band(curve, "bulk", axial).pair_average
    bb = site_collection_band(curve, "bulk", basal).pair_average
    rows = []
    for d in curve.diameters:
        a = site_collection_band(curve, d, axial)
        b = site_collection_band(curve, d, basal)
        rows.append((d, _ratio(a.pair_average, ab), _ratio(b.low, bb), _ratio(b.high, bb),
                     _ratio(b.pair_average, bb)))
    return rows


# --- spectra ------------------------------------------------------------------------


def spectra_curve(cfg: RunConfig) -> CollectionCurve:
    sp = cfg["spectra"]
    if sp["collection_csv"] is not None:
        try:
            return read_curve_csv(sp["collection_csv"])
        except OSError as exc:
            raise ConfigError(f"cannot read collection curve: {exc}") from exc
    return default_collection_curve(sp["diameters"], sp["axial_gain"], sp["basal_gain"],
                                    sp["gain_peak"], sp["gain_width"])


def synth_options(cfg: RunConfig) -> SynthOptions:
    sp = cfg["spectra"]
    return SynthOptions(exposure=sp["exposure"], zpl_fwhm=sp["zpl_fwhm"],
                        zpl_broadening=sp["zpl_broadening"], zpl_shift=sp["zpl_shift"],
                        dark_per_bin=sp["dark_per_bin"])


def _weights(cfg: RunConfig) -> dict:
    w = cfg["spectra"]["weights"]
    labels = {s.label for s in cfg.sites}
    unknown = sorted(set(w) - labels)
    if unknown:
        raise ConfigError(f"[spectra] weights: unknown labels {unknown}")
    return w


def synthesize_spectra(cfg: RunConfig, write: bool = True):
    """Bulk and pillar spectra: ``{"bulk" | diameter: Spectrum}``.

    The bulk spectrum is broadened/shifted like the pillars only through the
    configured options, so identical settings give the Fig-5 null case.
    """
    sp = cfg["spectra"]
    seed = cfg["run"]["seed"]
    curve = spectra_curve(cfg)
    weights = _weights(cfg)
    base = synth_options(cfg)
    bulk_opts = SynthOptions(exposure=base.exposure, zpl_fwhm=base.zpl_fwhm,
                             dark_per_bin=base.dark_per_bin)
    out = {"bulk": synth_spectrum(weights, curve, "bulk", _substream(seed, 0), cfg.sites, bulk_opts,
                                  label="bulk")}
    for i, d in enumerate(sp["diameters"], 1):
        out[d] = synth_spectrum(weights, curve, d, _substream(seed, i), cfg.sites, base,
                                label=f"pillar {d:g} nm")
    if write:
        folder = _out_dir(cfg) / "spectra"
        folder.mkdir(exist_ok=True)
        for k, s in out.items():
            write_spectrum_csv(folder / _spectrum_name(k), s)
    return out


def _spectrum_name(key) -> str:
    return "bulk.csv" if key == "bulk" else f"pillar_{key:g}.csv"


def load_spectra(cfg: RunConfig):
    sp = cfg["spectra"]
    if sp["bulk_file"] is None and not sp["pillar_files"]:
        return synthesize_spectra(cfg)
    if sp["bulk_file"] is None:
        raise ConfigError("[spectra] pillar_files given without a bulk_file reference")
    try:
        out = {"bulk": read_spectrum_csv(sp["bulk_file"], "bulk")}
        for d, path in sp["pillar_files"].items():
            out[d] = read_spectrum_csv(cfg.base_dir / path, f"pillar {d:g} nm")
    except OSError as exc:
        raise ConfigError(f"cannot read spectrum: {exc}") from exc
    return out


def fit_reports(cfg: RunConfig):
    """Fit every spectrum and compare each pillar with bulk."""
    spectra = load_spectra(cfg)
    outcome = Outcome()
    models = {}
    for key, s in spectra.items():
        try:
            models[key] = fit_seven(s, cfg.sites)
        except FitConvergenceError as exc:
            outcome.failures.append(f"{s.label}: {exc}")
    reports = []
    if "bulk" in models:
        for key, m in models.items():
            if key != "bulk":
                reports.append(compare(m, models["bulk"], diameter=key))
    elif "bulk" in spectra:
        outcome.failures.append("bulk reference fit failed; no ratios computed")
    return reports, models, outcome


def fig4(cfg: RunConfig) -> Outcome:
    reports, models, outcome = fit_reports(cfg)
    out = _out_dir(cfg)
    p = out / "fig4_ratios.csv"
    write_report_csv(p, reports)
    outcome.files += [p, plots.ratio_plot(out / "fig4.png", reports, cfg.sites)]
    outcome.summary["reports"] = reports
    return outcome


def fig5(cfg: RunConfig) -> Outcome:
    reports, models, outcome = fit_reports(cfg)
    out = _out_dir(cfg)
    p = out / "fig5_widths.csv"
    write_report_csv(p, reports)
    outcome.files += [p, plots.width_plot(out / "fig5.png", reports)]
    outcome.summary["reports"] = reports
    return outcome


def synth_spectrum_cmd(cfg: RunConfig) -> Outcome:
    spectra = synthesize_spectra(cfg)
    folder = _out_dir(cfg) / "spectra"
    return Outcome(files=[folder / _spectrum_name(k) for k in spectra])


def fit_spectrum_cmd(cfg: RunConfig, path=None) -> Outcome:
    path = Path(path) if path else cfg["fit"]["spectrum_file"]
    if path is None:
        raise ConfigError("fit-spectrum needs --input or [fit] spectrum_file")
    try:
        spectrum = read_spectrum_csv(path, Path(path).stem)
    except OSError as exc:
        raise ConfigError(f"cannot read spectrum: {exc}") from exc
    outcome = Outcome()
    try:
        model = fit_seven(spectrum, cfg.sites)
    except FitConvergenceError as exc:
        outcome.failures.append(str(exc))
        model = exc.result
    p = _out_dir(cfg) / f"{Path(path).stem}_fit.csv"
    write_model_csv(p, model)
    outcome.files.append(p)
    outcome.summary["model"] = model
    return outcome


# --- lifetimes ----------------------------------------------------------------------


def detector(cfg: RunConfig) -> DetectorModel:
    d = cfg["detector"]
    try:
        return DetectorModel(d["efficiency"], d["dark_rate"], d["dead_time"], d["irf_fwhm"])
    except ValueError as exc:
        raise ConfigError(f"[detector]: {exc}") from exc


def fig6(cfg: RunConfig, threads: int = 1) -> Outcome:
    """Filtered lifetime runs per diameter, plus an unfiltered collective run."""
    tc = cfg["tcspc"]
    if not tc["duration"] > 0:
        raise ConfigError("[tcspc] duration must be positive")
    det = detector(cfg)
    curve = spectra_curve(cfg)
    weights = _weights(cfg)
    sites = cfg.sites
    bands = {"kk": BandpassFilter(*tc["kk_band"]), "hk": BandpassFilter(*tc["hk_band"]), "all": None}
    seed = cfg["run"]["seed"]
    out = _out_dir(cfg)
    hist_dir = out / "histograms"
    hist_dir.mkdir(exist_ok=True)
    outcome = Outcome()
    rows = []
    for i, d in enumerate(tc["diameters"]):
        areas = expected_zpl_areas(weights, curve, d, sites, 1.0)
        for j, (name, band) in enumerate(bands.items()):
            mix = filter_mix(areas, band, sites, cfg["spectra"]["zpl_fwhm"])
            if tc["backscatter_amplitude"] > 0:
                mix = mix.with_backscatter(tc["backscatter_amplitude"], tc["tau2"])
            hist = simulate_stream(mix, det, tc["rep_rate"], tc["duration"], _substream(seed, i, j),
                                   tc["photons_per_pulse"], tc["bin_ps"], workers=threads)
            if hist.warning:
                outcome.failures.append(f"{d:g} nm {name}: {hist.warning}")
            p = hist_dir / f"d{d:g}_{name}.csv"
            write_histogram_csv(p, hist)
            try:
                fit = fit_lifetime(hist, fix_tau2=tc["fix_tau2"], tau2=tc["tau2"])
            except (FitConvergenceError, ValueError) as exc:
                outcome.failures.append(f"{d:g} nm {name}: {exc}")
                continue
            ratio = fit.model.a2 / fit.model.a1 if fit.model.a1 > 0 else float("inf")
            rows.append((d, name, fit.tau1, fit.tau1_err, ratio, fit.reduced_chi2, hist.total))
    p = out / "fig6_lifetimes.csv"
    write_lifetime_csv(p, rows)
    outcome.files += [p, plots.lifetime_plot(out / "fig6.png", rows)]
    spreads = {}
    for name in bands:
        taus = [r[2] for r in rows if r[1] == name]
        if len(taus) > 1:
            spreads[name] = max(taus) - min(taus)
            if spreads[name] >= tc["max_spread"]:
                outcome.failures.append(
                    f"{name}: lifetimes vary by {spreads[name]:.3f} ns across diameters")
    outcome.summary.update(rows=rows, spreads=spreads)
    return outcome


def fit_lifetime_cmd(cfg: RunConfig, path=None) -> Outcome:
    path = Path(path) if path else cfg["fit"]["histogram_file"]
    if path is None:
        raise ConfigError("fit-lifetime needs --input or [fit] histogram_file")
    try:
        hist = read_histogram_csv(path)
    except (OSError, KeyError) as exc:
        raise ConfigError(f"cannot read histogram: {exc}") from exc
    tc = cfg["tcspc"]
    outcome = Outcome()
    try:
        fit = fit_lifetime(hist, fix_tau2=tc["fix_tau2"], tau2=tc["tau2"])
    except (FitConvergenceError, ValueError) as exc:
        outcome.failures.append(str(exc))
        return outcome
    p = _out_dir(cfg) / f"{Path(path).stem}_lifetime.csv"
    with open(p, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("parameter", "value", "error"))
        for name, value in zip(("a1", "tau1", "a2", "tau2", "baseline", "t0"), fit.model.as_params()):
            w.writerow((name, repr(float(value)), repr(float(fit.errors[name]))))
    outcome.files.append(p)
    outcome.summary["fit"] = fit
    return outcome


# --- scan ---------------------------------------------------------------------------


def scan(cfg: RunConfig) -> Outcome:
    sc = cfg["scan"]
    try:
        scene = make_scene(sc["width"], sc["height"], sc["pillar_diameter"], sc["pitch"],
                           sc["bulk_width"], sc["pixel"], sc["emitter_density"])
        beam = BeamSpec(sc["beam_fwhm"], sc["step"])
    except ValueError as exc:
        raise ConfigError(f"[scan]: {exc}") from exc
    curve = spectra_curve(cfg)
    image = render_scan(scene, beam, curve, sc["dwell"], detector(cfg), cfg["run"]["seed"], cfg.sites)
    out = _out_dir(cfg)
    outcome = Outcome()
    p1, p2 = out / "scan_counts.csv", out / "scan_expected.csv"
    write_image_csv(p1, image.counts)
    write_image_csv(p2, image.expected)
    p3 = out / "scan_regions.csv"
    means = {}
    with open(p3, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("region", "points", "mean_counts", "mean_expected"))
        for i, (kind, d) in enumerate(scene.legend):
            n = int((image.regions == i).sum())
            if n:
                name = kind if d is None else f"{kind}_{d:g}"
                means[name] = (image.region_mean(i), image.region_mean(i, "expected"))
                w.writerow((name, n, repr(float(means[name][0])), repr(float(means[name][1]))))
    p4 = out / "scan.png"
    from PIL import Image

    # raster row 0 is the bottom of the scene
    Image.fromarray(to_gray8(image.counts)[::-1]).save(p4)
    outcome.files += [p1, p2, p3, p4]
    outcome.summary.update(means=means, image=image)
    return outcome

