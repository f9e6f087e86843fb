import subprocess
import sys

import numpy as np
import pytest

from pillarsim.farfield import read_collection_csv
from pillarsim.harness.cache import RunCache, content_key
from pillarsim.harness.cli import run
from pillarsim.harness.config import ConfigError, RunConfig
from pillarsim.harness.workflows import structure_specs
from pillarsim.nvmodel import read_curve_csv
from pillarsim.scansim import read_image_csv
from pillarsim.spectra import read_report_csv, read_spectrum_csv
from pillarsim.tcspc import read_histogram_csv, read_lifetime_csv

TINY_GRID = """
[grid]
cell_size = 100
lateral_span = 1600
substrate_margin = 400
air_margin = 600
pml_cells = 6
[structure]
diameters = 400
[source]
decay = 1e-3
"""


def write_config(folder, body, name="run.ini"):
    path = folder / name
    path.write_text("[run]\nout = out\ncache_dir = cache\n" + body)
    return path


# --- configuration ------------------------------------------------------------------


def test_defaults_cover_every_section():
    cfg = RunConfig.defaults()
    assert cfg["objective"]["numerical_aperture"] == 0.85
    assert cfg["detector"]["dead_time"] == 50.0
    assert cfg["tcspc"]["tau2"] == 0.54
    assert cfg["scan"]["beam_fwhm"] == 1.2


@pytest.mark.parametrize("text", ["[grid]\ncell = 20\n", "[gird]\ncell_size = 20\n",
                                  "[catalog]\nkk.colour = red\n", "[catalog]\nzz.lifetime = 1\n",
                                  "[grid]\ncell_size = fine\n", "[tcspc]\nfix_tau2 = maybe\n"])
def test_unknown_or_malformed_keys_rejected(text):
    with pytest.raises(ConfigError):
        RunConfig.from_string(text)


def test_paths_resolve_against_config_file(tmp_path):
    sub = tmp_path / "cfg"
    sub.mkdir()
    cfg = RunConfig.load(write_config(sub, "[fit]\nspectrum_file = data/s.csv\n"))
    assert cfg["run"]["out"] == sub / "out"
    assert cfg["fit"]["spectrum_file"] == sub / "data" / "s.csv"


def test_catalog_overrides_reach_sites():
    cfg = RunConfig.from_string("[catalog]\nkk.lifetime = 3.1\nline1173.class = axial\n")
    by = {s.label: s for s in cfg.sites}
    assert by["kk"].lifetime == 3.1
    assert by["line1173"].site_class == "axial"


def test_default_sweep_is_twenty_solver_runs():
    bulk, pillars = structure_specs(RunConfig.defaults())
    assert bulk.kind == "bulk" and len(pillars) == 9
    assert 2 * (1 + len(pillars)) == 20


def test_config_errors_exit_with_one(tmp_path, capsys):
    bad = write_config(tmp_path, "[grid]\nbogus = 1\n")
    assert run(["scan", "--config", str(bad)]) == 1
    assert "bogus" in capsys.readouterr().err
    assert run(["scan", "--config", str(tmp_path / "missing.ini")]) == 1
    assert run(["scan", "--config", str(write_config(tmp_path, "")), "--threads", "0"]) == 1


def test_content_key_and_cache(tmp_path):
    assert content_key({"a": 1, "b": [1, 2]}) == content_key({"b": [1, 2], "a": 1})
    assert content_key({"a": 1}) != content_key({"a": 2})
    cache = RunCache(tmp_path)
    k = content_key("x")
    assert cache.get(k) is None and k not in cache
    cache.put(k, {"v": 1.5})
    assert cache.get(k) == {"v": 1.5} and k in cache


# --- collection sweep ---------------------------------------------------------------


@pytest.fixture(scope="module")
def sweep(tmp_path_factory):
    folder = tmp_path_factory.mktemp("sweep")
    cfg = write_config(folder, TINY_GRID)
    assert run(["collection-sweep", "--config", str(cfg)]) == 0
    return folder, cfg


def test_sweep_outputs_round_trip(sweep):
    folder, _ = sweep
    rows = read_collection_csv(folder / "out" / "collection.csv")
    assert [(r[0], r[1]) for r in rows] == [("bulk", "horizontal"), (400.0, "horizontal"),
                                            ("bulk", "vertical"), (400.0, "vertical")]
    assert all(0 < r[2] < 1 for r in rows)
    curve = read_curve_csv(folder / "out" / "collection_curve.csv")
    assert curve.values[400.0] == (rows[3][2], rows[1][2])
    assert (folder / "out" / "collection.png").stat().st_size > 0


def test_resume_reuses_cached_runs(sweep):
    folder, cfg = sweep
    before = (folder / "out" / "collection.csv").read_bytes()
    assert run(["collection-sweep", "--config", str(cfg), "--resume"]) == 0
    runs = (folder / "out" / "runs.csv").read_text().splitlines()[1:]
    assert runs and all(line.split(",")[4] == "True" for line in runs)
    assert (folder / "out" / "collection.csv").read_bytes() == before


def test_zero_aperture_collects_nothing(sweep, tmp_path):
    folder, _ = sweep
    cfg = write_config(tmp_path, TINY_GRID + "[objective]\nnumerical_aperture = 0.0\n")
    cfg.write_text(cfg.read_text().replace("cache_dir = cache", f"cache_dir = {folder / 'cache'}"))
    assert run(["collection-sweep", "--config", str(cfg), "--resume"]) == 0
    assert all(r[2] == 0.0 for r in read_collection_csv(tmp_path / "out" / "collection.csv"))


def test_undecayed_runs_exit_with_two(tmp_path, capsys):
    cfg = write_config(tmp_path, TINY_GRID.replace("[source]", "[source]\nmax_steps = 40"))
    assert run(["collection-sweep", "--config", str(cfg)]) == 2
    assert "step cap" in capsys.readouterr().err


# --- spectra ------------------------------------------------------------------------


@pytest.fixture(scope="module")
def fig4_run(tmp_path_factory):
    folder = tmp_path_factory.mktemp("fig4")
    cfg = write_config(folder, "[spectra]\ndiameters = 400 800 1100\n")
    assert run(["fig4", "--config", str(cfg)]) == 0
    return folder, cfg


def test_fig4_basal_ratios_exceed_axial(fig4_run):
    folder, _ = fig4_run
    reports = read_report_csv(folder / "out" / "fig4_ratios.csv")
    assert [r.diameter for r in reports] == [400.0, 800.0, 1100.0]
    for rep in reports:
        basal = [rep.row(lb).ratio for lb in ("line1173", "kh", "hk")]
        axial = [rep.row(lb).ratio for lb in ("hh", "kk")]
        assert min(basal) > max(axial)


def test_fig4_is_deterministic(fig4_run):
    folder, cfg = fig4_run
    before = (folder / "out" / "fig4_ratios.csv").read_bytes()
    assert run(["fig4", "--config", str(cfg)]) == 0
    assert (folder / "out" / "fig4_ratios.csv").read_bytes() == before


def test_identical_spectra_give_unit_ratios(fig4_run, tmp_path):
    folder, _ = fig4_run
    bulk = folder / "out" / "spectra" / "bulk.csv"
    cfg = write_config(tmp_path, f"[spectra]\nbulk_file = {bulk}\npillar_files = 600:{bulk}\n")
    assert run(["fig5", "--config", str(cfg)]) == 0
    (rep,) = read_report_csv(tmp_path / "out" / "fig5_widths.csv")
    assert all(r.ratio == 1.0 and r.width_ratio == 1.0 and r.shift_nm == 0.0 for r in rep.rows)


def test_missing_bulk_reference_rejected(fig4_run, tmp_path):
    folder, _ = fig4_run
    pillar = folder / "out" / "spectra" / "pillar_800.csv"
    cfg = write_config(tmp_path, f"[spectra]\npillar_files = 800:{pillar}\n")
    assert run(["fig4", "--config", str(cfg)]) == 1


def test_synth_and_fit_spectrum_commands(tmp_path):
    cfg = write_config(tmp_path, "[spectra]\ndiameters = 800\n")
    assert run(["synth-spectrum", "--config", str(cfg), "--seed", "4"]) == 0
    spec = tmp_path / "out" / "spectra" / "pillar_800.csv"
    assert read_spectrum_csv(spec).wavelength[0] == pytest.approx(1150.0)
    assert run(["fit-spectrum", "--config", str(cfg), "--input", str(spec)]) == 0
    assert (tmp_path / "out" / "pillar_800_fit.csv").exists()
    assert run(["fit-spectrum", "--config", str(cfg)]) == 1


# --- lifetimes ----------------------------------------------------------------------


def fig6_rows(folder, seed):
    cfg = write_config(folder, "[tcspc]\ndiameters = 600 800\n")
    assert run(["fig6", "--config", str(cfg), "--seed", str(seed)]) == 0
    return read_lifetime_csv(folder / "out" / "fig6_lifetimes.csv")


@pytest.fixture(scope="module")
def fig6_pair(tmp_path_factory):
    return (fig6_rows(tmp_path_factory.mktemp("s0"), 0),
            fig6_rows(tmp_path_factory.mktemp("s1"), 1))


def test_fig6_recovers_filtered_lifetimes(fig6_pair):
    rows, _ = fig6_pair
    assert {(r[0], r[1]) for r in rows} == {(d, b) for d in (600.0, 800.0) for b in ("kk", "hk", "all")}
    for d, band, tau, err, *_ in rows:
        if band in ("kk", "hk"):
            assert tau == pytest.approx(2.8 if band == "kk" else 2.2, abs=0.1)
            assert err > 0


def test_fig6_seed_change_moves_values_within_errors(fig6_pair):
    a, b = fig6_pair
    assert a != b
    for ra, rb in zip(a, b):
        assert (ra[0], ra[1]) == (rb[0], rb[1])
        assert abs(ra[2] - rb[2]) <= 3 * np.hypot(ra[3], rb[3])


def test_fig6_zero_duration_rejected(tmp_path):
    cfg = write_config(tmp_path, "[tcspc]\nduration = 0\n")
    assert run(["fig6", "--config", str(cfg)]) == 1


def test_fit_lifetime_command(tmp_path):
    cfg = write_config(tmp_path, "[tcspc]\ndiameters = 800\nduration = 0.5\n")
    assert run(["fig6", "--config", str(cfg)]) == 0
    hist = tmp_path / "out" / "histograms" / "d800_kk.csv"
    assert read_histogram_csv(hist).total > 0
    assert run(["fit-lifetime", "--config", str(cfg), "--input", str(hist)]) == 0
    lines = (tmp_path / "out" / "d800_kk_lifetime.csv").read_text().splitlines()
    assert lines[0] == "parameter,value,error" and len(lines) == 7


# --- scan ---------------------------------------------------------------------------


def test_scan_outputs(tmp_path):
    cfg = write_config(tmp_path, "[scan]\nwidth = 12\nheight = 6\nbulk_width = 4\n")
    assert run(["scan", "--config", str(cfg)]) == 0
    out = tmp_path / "out"
    counts = read_image_csv(out / "scan_counts.csv")
    assert counts.shape == (30, 60)
    regions = (out / "scan_regions.csv").read_text().splitlines()
    assert regions[0] == "region,points,mean_counts,mean_expected"
    means = {r.split(",")[0]: float(r.split(",")[2]) for r in regions[1:]}
    assert means["pillar_800"] > means["bulk"] > means["etched"]
    from PIL import Image

    assert Image.open(out / "scan.png").size == (60, 30)
    first = (out / "scan_counts.csv").read_bytes()
    assert run(["scan", "--config", str(cfg)]) == 0
    assert (out / "scan_counts.csv").read_bytes() == first


def test_module_entry_point(tmp_path):
    bad = write_config(tmp_path, "[nope]\n")
    proc = subprocess.run([sys.executable, "-m", "pillarsim", "scan", "--config", str(bad)],
                          capture_output=True, text=True)
    assert proc.returncode == 1
    assert "unknown section" in proc.stderr
