import numpy as np
import pytest

from pillarsim.scansim import (
    BULK,
    BeamSpec,
    SceneMap,
    expected_scan,
    make_scene,
    pillar_centers,
    read_image_csv,
    region_efficiency,
    render_scan,
    to_gray8,
    write_image_csv,
)
from pillarsim.spectra import default_collection_curve
from pillarsim.tcspc import DetectorModel

CURVE = default_collection_curve()


def ratio_with_error(img, num, den):
    """Ratio of region means and its Poisson error from the expected counts."""
    sel_n, sel_d = img.regions == num, img.regions == den
    mn, md = img.counts[sel_n].mean(), img.counts[sel_d].mean()
    vn = img.expected[sel_n].sum() / sel_n.sum() ** 2
    vd = img.expected[sel_d].sum() / sel_d.sum() ** 2
    r = mn / md
    return r, r * np.sqrt(vn / mn**2 + vd / md**2)


@pytest.fixture(scope="module")
def default_scan():
    scene = make_scene()
    return scene, render_scan(scene, BeamSpec(), CURVE, seed=3)


def test_scene_regions_cover_and_are_disjoint():
    scene = make_scene(width=20.0, height=10.0, bulk_width=5.0)
    assert [k for k, _ in scene.legend] == ["bulk", "etched", "pillar"]
    counts = np.bincount(scene.regions.ravel(), minlength=3)
    assert counts.sum() == scene.regions.size and np.all(counts > 0)
    centers = pillar_centers(20.0, 10.0, 5.0, 5.0)
    assert len(centers) == 6
    assert all(scene.legend[scene.region_at(x, y)][0] == "pillar" for x, y in centers)
    assert scene.legend[scene.region_at(1.0, 1.0)] == BULK


def test_scene_and_beam_validation():
    with pytest.raises(ValueError, match="pitch"):
        make_scene(pillar_diameter=6000.0, pitch=5.0)
    with pytest.raises(ValueError):
        SceneMap(np.zeros((4, 4), int) + 3, (BULK,))
    with pytest.raises(ValueError):
        BeamSpec(fwhm=0.0)
    with pytest.raises(ValueError):
        BeamSpec(fwhm=1.0, step=1.5)


def test_etched_region_collects_nothing():
    assert region_efficiency(CURVE, ("etched", None)) == 0.0
    assert region_efficiency(CURVE, ("pillar", 800.0)) > region_efficiency(CURVE, BULK) > 0


def test_all_etched_scene_is_dark_counts_only():
    scene = make_scene(width=6.0, height=4.0, pillar_diameter=None, bulk_width=0.0)
    det = DetectorModel(dark_rate=500.0)
    img = render_scan(scene, BeamSpec(), CURVE, dwell=20.0, det=det, seed=1)
    assert np.allclose(img.expected, 500.0 * 20e-3)
    assert img.counts.mean() == pytest.approx(10.0, abs=3 * np.sqrt(10.0 / img.counts.size))


def test_narrow_beam_on_bulk_gives_uniform_image():
    scene = make_scene(width=4.0, height=4.0, bulk_width=4.0, pixel=0.02)
    _, _, mean = expected_scan(scene, BeamSpec(fwhm=0.05, step=0.05), CURVE)
    inner = mean[3:-3, 3:-3]
    assert np.ptp(inner) <= 1e-9 * inner.mean()


def test_narrow_beam_recovers_curve_enhancement():
    scene = make_scene(width=10.0, height=5.0, bulk_width=5.0)
    beam = BeamSpec(fwhm=0.05, step=0.05)
    x, y, mean = expected_scan(scene, beam, CURVE, det=DetectorModel(dark_rate=0.0))
    X, Y = np.meshgrid(x, y)
    near = np.zeros(X.shape, bool)
    for cx, cy in pillar_centers(10.0, 5.0, 5.0, 5.0):
        near |= (X - cx) ** 2 + (Y - cy) ** 2 <= 0.25**2
    deep_bulk = (X > 1.0) & (X < 4.0) & (Y > 1.0) & (Y < 4.0)
    target = region_efficiency(CURVE, ("pillar", 800.0)) / region_efficiency(CURVE, BULK)
    assert mean[near].mean() / mean[deep_bulk].mean() == pytest.approx(target, rel=1e-6)


def test_region_ordering_pillar_bulk_etched(default_scan):
    scene, img = default_scan
    means = {k: img.region_mean(i) for i, (k, _) in enumerate(scene.legend)}
    assert means["pillar"] > means["bulk"] > means["etched"]


def test_pillar_to_bulk_ratio_matches_forward_model(default_scan):
    _, img = default_scan
    r, err = ratio_with_error(img, 2, 0)
    expected = img.region_mean(2, "expected") / img.region_mean(0, "expected")
    assert abs(r - expected) <= 2 * err


def test_mean_scales_linearly_with_dwell():
    scene = make_scene(width=10.0, height=6.0, bulk_width=4.0)
    det = DetectorModel()
    ref = None
    for dwell in (5.0, 10.0, 40.0):
        img = render_scan(scene, BeamSpec(), CURVE, dwell=dwell, det=det, seed=8)
        dark = det.dark_rate * dwell * 1e-3
        signal = (img.expected - dark) / dwell
        ref = signal if ref is None else ref
        np.testing.assert_allclose(signal, ref, rtol=1e-12)
        n = img.counts.size
        assert abs(img.counts.mean() - img.expected.mean()) <= 3 * np.sqrt(img.expected.sum()) / n


def test_seeded_scan_is_deterministic():
    scene = make_scene(width=6.0, height=4.0, bulk_width=3.0)
    a = render_scan(scene, BeamSpec(), CURVE, seed=5)
    b = render_scan(scene, BeamSpec(), CURVE, seed=5)
    c = render_scan(scene, BeamSpec(), CURVE, seed=6)
    assert np.array_equal(a.counts, b.counts)
    assert not np.array_equal(a.counts, c.counts)


def test_image_csv_round_trip_and_gray8(tmp_path, default_scan):
    _, img = default_scan
    path = tmp_path / "img.csv"
    write_image_csv(path, img.counts)
    np.testing.assert_array_equal(read_image_csv(path), img.counts)
    write_image_csv(path, img.expected)
    np.testing.assert_array_equal(read_image_csv(path), img.expected)
    g = to_gray8(img.counts)
    assert g.dtype == np.uint8 and g.min() == 0 and g.max() == 255
    assert not to_gray8(np.ones((3, 3))).any()
