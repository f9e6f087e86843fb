"""End-to-end acceptance checks, one PASS/FAIL line per criterion.

Solver runs go through the harness cache under ``.pillarsim-cache`` in the
project root, so only the first session pays for the FDTD sweep.
"""

import math
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import horizontal_dipole_cone_fraction
from pillarsim.geometry import StructureSpec
from pillarsim.harness.cache import RunCache
from pillarsim.harness.cli import run
from pillarsim.harness.config import RunConfig
from pillarsim.harness.workflows import (
    record_efficiency,
    solve_collection,
    solver_settings,
    structure_specs,
)
from pillarsim.nvmodel import CollectionCurve, catalog, mix_collection
from pillarsim.scansim import BeamSpec, make_scene, render_scan
from pillarsim.spectra import (
    SynthOptions,
    compare,
    default_collection_curve,
    expected_zpl_areas,
    fit_seven,
    synth_spectrum,
)
from pillarsim.tcspc import (
    DetectorModel,
    EmissionMix,
    fit_lifetime,
    peak_fwhm,
    read_histogram_csv,
    read_lifetime_csv,
    simulate_stream,
)

CACHE = RunCache(Path(__file__).resolve().parents[1] / ".pillarsim-cache")
NA = 0.85
BASAL = ("line1173", "kh", "hk")
LABELS = ("line1173", "kh", "hh", "kk", "hk")


def solve(spec, orientation, **overrides):
    settings_ = solver_settings(RunConfig.defaults())
    settings_.update(overrides)
    return solve_collection(spec, orientation, settings_, CACHE, resume=True)


@pytest.fixture(scope="module")
def sweep():
    bulk, pillars = structure_specs(RunConfig.defaults())
    recs = {}
    for orientation in ("horizontal", "vertical"):
        for spec in [bulk, *pillars]:
            key = "bulk" if spec.kind == "bulk" else spec.pillar_diameter
            recs[key, orientation] = solve(spec, orientation)
    return recs


# --- 1 ------------------------------------------------------------------------------


def test_bulk_efficiencies_and_cell_convergence(sweep, criterion):
    bulk = structure_specs(RunConfig.defaults())[0]
    eff = {(25.0, o): record_efficiency(sweep["bulk", o], NA) for o in ("horizontal", "vertical")}
    for dx in (35.0, 20.0):
        for o in ("horizontal", "vertical"):
            eff[dx, o] = record_efficiency(solve(bulk, o, cell_size=dx), NA)
    h, v = eff[25.0, "horizontal"], eff[25.0, "vertical"]
    in_window = 0.024 <= h <= 0.050 and 0.0041 <= v <= 0.0085
    converging = all(abs(eff[25.0, o] - eff[35.0, o]) > abs(eff[20.0, o] - eff[25.0, o])
                     for o in ("horizontal", "vertical"))
    slowest = max(r["seconds"] for r in sweep.values())
    ok = in_window and converging and slowest < 900
    detail = (f"horizontal {100 * h:.3f}% (2.4-5.0), vertical {100 * v:.3f}% (0.41-0.85); "
              + ", ".join(f"{o[0]} {dx:g}nm {100 * eff[dx, o]:.3f}%"
                          for o in ("horizontal", "vertical") for dx in (35.0, 25.0, 20.0))
              + f"; slowest run {slowest:.0f} s")
    criterion(1, ok, detail)
    assert 0.024 <= h <= 0.050
    assert 0.0041 <= v <= 0.0085
    assert converging
    assert slowest < 900


# --- 2 ------------------------------------------------------------------------------


def test_enhancement_trends(sweep, criterion):
    diameters = structure_specs(RunConfig.defaults())[1]
    ds = [p.pillar_diameter for p in diameters]
    enh = {o: {d: record_efficiency(sweep[d, o], NA) / record_efficiency(sweep["bulk", o], NA)
               for d in ds} for o in ("horizontal", "vertical")}
    a = all(enh["vertical"][d] >= enh["horizontal"][d] for d in ds if d >= 400)
    peak_h, peak_v = max(enh["horizontal"].values()), max(enh["vertical"].values())
    b = 3 <= peak_h <= 12
    c = 8 <= peak_v <= 30
    table = " ".join(f"{d:g}:{enh['horizontal'][d]:.1f}/{enh['vertical'][d]:.1f}" for d in ds)
    criterion("2a", a, "vertical >= horizontal enhancement for d >= 400 nm")
    criterion("2b", b, f"peak horizontal enhancement {peak_h:.2f} in [3, 12]")
    criterion("2c", c, f"peak vertical enhancement {peak_v:.2f} in [8, 30]; h/v by diameter {table}")
    assert a and b and c


# --- 3 ------------------------------------------------------------------------------


fractions = st.floats(0.0, 1.0)


@settings(max_examples=1000, derandomize=True)
@given(fractions, fractions, st.floats(0.0, 90.0))
def check_mixing_identities(c0, c90, beta):
    curve = CollectionCurve({600: (c0, c90)})
    assert abs(mix_collection(curve, 600, 0.0) - c0) <= 1e-12
    assert abs(mix_collection(curve, 600, 90.0) - c90) <= 1e-12
    c = mix_collection(curve, 600, beta)
    assert min(c0, c90) - 1e-12 <= c <= max(c0, c90) + 1e-12
    assert abs(c + mix_collection(curve, 600, 90.0 - beta) - (c0 + c90)) <= 1e-12


def test_mixing_identities(criterion):
    try:
        check_mixing_identities()
    except AssertionError:
        criterion(3, False, "mixing identities violated")
        raise
    criterion(3, True, "endpoints, convex bound and complementarity on 1000 cases at 1e-12")


# --- 4 ------------------------------------------------------------------------------


def test_vacuum_aperture_check(criterion):
    spec = StructureSpec("bulk", emitter_depth=100.0, substrate_index=1.0)
    eff = record_efficiency(solve(spec, "horizontal"), NA)
    ref = horizontal_dipole_cone_fraction(NA)
    ok = abs(eff - ref) <= 0.01
    criterion(4, ok, f"FDTD {100 * eff:.2f}% vs closed form {100 * ref:.2f}% (+/- 1 pp)")
    assert ok


# --- 5 ------------------------------------------------------------------------------


def test_spectral_closed_loop(criterion):
    curve = default_collection_curve()
    weights = dict.fromkeys(LABELS, 1.0)
    opts = SynthOptions(exposure=1e6)
    counts = min(expected_zpl_areas(weights, curve, "bulk", exposure=opts.exposure).values())
    bulk = fit_seven(synth_spectrum(weights, curve, "bulk", seed=10, options=opts))
    pillar = fit_seven(synth_spectrum(weights, curve, 800, seed=11, options=opts))
    rep = compare(pillar, bulk, diameter=800)
    centres = max(abs(m.peak(s.label).center - s.zpl_wavelength)
                  for m in (bulk, pillar) for s in catalog())
    pulls = {r.label: (r.ratio - (10.0 if r.label in BASAL else 2.0)) / r.ratio_err for r in rep.rows}
    widths = max(abs(r.width_ratio - 1) for r in rep.rows)
    ok = counts >= 1e4 and max(map(abs, pulls.values())) <= 2 and centres <= 0.2 and widths <= 0.05
    criterion(5, ok, f"min ZPL counts {counts:.0f}; ratio pulls "
              + " ".join(f"{k}:{v:+.2f}" for k, v in pulls.items())
              + f"; worst centre offset {centres:.3f} nm; worst width ratio offset {widths:.3f}")
    assert ok


# --- 6 ------------------------------------------------------------------------------


@pytest.fixture(scope="module")
def fig6_out(tmp_path_factory):
    folder = tmp_path_factory.mktemp("fig6")
    cfg = folder / "fig6.ini"
    # 2.6 s at the default photon rate lands just above 1e6 detected photons
    cfg.write_text("[run]\nout = out\n[tcspc]\nduration = 2.6\n")
    code = run(["fig6", "--config", str(cfg)])
    return folder / "out", code


def test_lifetime_closed_loop(fig6_out, criterion):
    out, code = fig6_out
    rows = read_lifetime_csv(out / "fig6_lifetimes.csv")
    filtered = [r for r in rows if r[1] in ("kk", "hk")]
    photons = min(r[6] for r in filtered)
    hits = all(abs(r[2] - (2.8 if r[1] == "kk" else 2.2)) <= 0.1 for r in filtered)
    spread = {b: np.ptp([r[2] for r in rows if r[1] == b]) for b in ("kk", "hk")}
    hist = read_histogram_csv(out / "histograms" / "d800_kk.csv")
    bi = fit_lifetime(hist, mode="full")
    mono = fit_lifetime(hist, components=1, mode="full")
    biased = abs(mono.tau1 - 2.8) > abs(bi.tau1 - 2.8)
    diameters = sorted({r[0] for r in rows})
    ok = (code == 0 and photons >= 1e6 and hits and len(diameters) == 5
          and max(spread.values()) < 0.1 and biased)
    kk = [r[2] for r in filtered if r[1] == "kk"]
    hk = [r[2] for r in filtered if r[1] == "hk"]
    criterion(6, ok, f"tau_kk {min(kk):.3f}-{max(kk):.3f} ns, tau_hk {min(hk):.3f}-{max(hk):.3f} ns "
              f"over {len(diameters)} diameters; spreads kk {spread['kk']:.3f} hk {spread['hk']:.3f}; "
              f"min photons {photons}; single-exp {mono.tau1:.3f} vs biexp {bi.tau1:.3f} ns")
    assert ok


# --- 7 ------------------------------------------------------------------------------


def test_detector_model_properties(criterion):
    kk = EmissionMix(((1.0, 2.8),))
    totals = [simulate_stream(kk, DetectorModel(dead_time=d), duration=0.05, seed=3,
                              photons_per_pulse=0.5).total for d in (0.0, 10.0, 25.0, 50.0, 100.0)]
    monotone = all(b <= a for a, b in zip(totals, totals[1:]))
    duration = 100.0
    dark = simulate_stream(kk, DetectorModel(efficiency=0.0), duration=duration, seed=4).total
    n = 100.0 * duration
    dark_ok = abs(dark - n) <= 3 * math.sqrt(n)
    fwhm = peak_fwhm(simulate_stream(EmissionMix(((1.0, 1e-3),)), DetectorModel(), duration=0.5,
                                     seed=5))
    fwhm_ok = abs(fwhm / 170.0 - 1) <= 0.1
    ok = monotone and dark_ok and fwhm_ok
    criterion(7, ok, f"counts vs dead time {[int(t) for t in totals]}; dark {dark:.0f} vs {n:.0f} "
              f"+/- {3 * math.sqrt(n):.0f}; IRF FWHM {fwhm:.1f} ps")
    assert ok


# --- 8 ------------------------------------------------------------------------------


def test_scan_contrast(criterion):
    scene = make_scene()
    img = render_scan(scene, BeamSpec(), default_collection_curve(), seed=0)
    idx = {k: i for i, (k, _) in enumerate(scene.legend)}
    means = {k: img.region_mean(i) for k, i in idx.items()}
    sel_p, sel_b = img.regions == idx["pillar"], img.regions == idx["bulk"]
    r = means["pillar"] / means["bulk"]
    injected = img.region_mean(idx["pillar"], "expected") / img.region_mean(idx["bulk"], "expected")
    err = r * math.sqrt(img.expected[sel_p].sum() / sel_p.sum() ** 2 / means["pillar"] ** 2
                        + img.expected[sel_b].sum() / sel_b.sum() ** 2 / means["bulk"] ** 2)
    ordered = means["pillar"] > means["bulk"] > means["etched"]
    ok = ordered and abs(r - injected) <= 2 * err
    criterion(8, ok, "mean counts " + ", ".join(f"{k} {v:.0f}" for k, v in means.items())
              + f"; pillar/bulk {r:.4f} vs injected {injected:.4f} +/- {err:.4f}")
    assert ok
