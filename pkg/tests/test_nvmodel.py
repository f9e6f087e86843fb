import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pillarsim.nvmodel import (
    DEFAULT_CATALOG,
    CollectionCurve,
    NVSite,
    catalog,
    dipole_vectors,
    mix_collection,
    nearest_site,
    read_catalog_csv,
    read_curve_csv,
    site_by_label,
    site_collection_band,
    site_dipole_pair,
    write_catalog_csv,
    write_curve_csv,
)

BULK = CollectionCurve({"bulk": (0.0063, 0.037)})
effs = st.floats(0.0, 1.0)
betas = st.floats(0.0, 90.0)
BASAL = site_by_label(DEFAULT_CATALOG, "hk")
AXIAL = site_by_label(DEFAULT_CATALOG, "kk")


@settings(max_examples=1000)
@given(effs, effs, betas)
def test_mixing_endpoints_bounds_and_complement(c0, c90, beta):
    curve = CollectionCurve({500: (c0, c90)})
    assert mix_collection(curve, 500, 0.0) == pytest.approx(c0, abs=1e-12)
    assert mix_collection(curve, 500, 90.0) == pytest.approx(c90, abs=1e-12)
    c = mix_collection(curve, 500, beta)
    assert min(c0, c90) - 1e-12 <= c <= max(c0, c90) + 1e-12
    assert c + mix_collection(curve, 500, 90.0 - beta) == pytest.approx(c0 + c90, abs=1e-12)


def test_mixing_with_bulk_values():
    assert mix_collection(BULK, "bulk", 90.0) == pytest.approx(0.037, abs=1e-15)
    assert mix_collection(BULK, "bulk", 0.0) == pytest.approx(0.0063, abs=1e-15)
    assert mix_collection(BULK, "bulk", 45.0) == pytest.approx(0.02165, abs=1e-12)


def test_missing_diameter_rejected_unless_interpolating():
    curve = CollectionCurve({400: (0.1, 0.2), 600: (0.3, 0.4)})
    with pytest.raises(KeyError):
        mix_collection(curve, 500, 30.0)
    assert curve.endpoints(500, interpolate=True) == pytest.approx((0.2, 0.3))
    with pytest.raises(KeyError):
        curve.endpoints(700, interpolate=True)
    with pytest.raises(ValueError):
        mix_collection(curve, 400, 91.0)


def test_curve_values_must_be_fractions():
    with pytest.raises(ValueError):
        CollectionCurve({"bulk": (0.1, 1.2)})


@given(st.floats(0.0, 179.999))
def test_axial_pair_is_horizontal(phi):
    assert site_dipole_pair(AXIAL, phi) == pytest.approx((90.0, 90.0))


@given(st.floats(0.0, 179.999))
def test_basal_pair_is_orthogonal_and_spans_19_to_90(phi):
    d1, d2 = dipole_vectors(BASAL, phi)
    axis = np.array([math.sin(math.radians(71)), 0, math.cos(math.radians(71))])
    assert d1 @ d2 == pytest.approx(0.0, abs=1e-12)
    assert d1 @ axis == pytest.approx(0.0, abs=1e-12)
    assert d2 @ axis == pytest.approx(0.0, abs=1e-12)
    b1, b2 = site_dipole_pair(BASAL, phi)
    assert 19.0 - 1e-9 <= min(b1, b2) and max(b1, b2) <= 90.0


def test_basal_extreme_beta_is_19_degrees():
    assert site_dipole_pair(BASAL, 0.0)[0] == pytest.approx(19.0, abs=1e-9)
    with pytest.raises(ValueError):
        site_dipole_pair(BASAL, 180.0)


def test_axial_band_collapses_to_horizontal_value():
    band = site_collection_band(BULK, "bulk", AXIAL)
    assert band.low == band.high == pytest.approx(0.037)
    assert band.pair_average == pytest.approx(0.037)


def test_basal_band_edges_match_scalar_formula():
    band = site_collection_band(BULK, "bulk", BASAL)
    c19 = 0.0063 * math.cos(math.radians(19)) ** 2 + 0.037 * math.sin(math.radians(19)) ** 2
    assert band.low == pytest.approx(c19, rel=1e-12)
    assert band.high == pytest.approx(0.037, rel=1e-12)
    # cos^2 b1 + cos^2 b2 = sin^2(71 deg) for any azimuth
    s2 = math.sin(math.radians(71)) ** 2
    assert band.pair_average == pytest.approx(0.037 + (0.0063 - 0.037) * s2 / 2, rel=1e-12)


@given(effs, effs, st.sampled_from(DEFAULT_CATALOG))
def test_band_inside_endpoint_range(c0, c90, site):
    curve = CollectionCurve({700: (c0, c90)})
    band = site_collection_band(curve, 700, site)
    lo, hi = min(c0, c90) - 1e-12, max(c0, c90) + 1e-12
    assert lo <= band.low <= band.high <= hi
    assert band.low - 1e-12 <= band.pair_average <= band.high + 1e-12


def test_catalog_classes_and_overrides():
    labels = {s.label: s for s in catalog()}
    assert {k: (s.zpl_wavelength, s.site_class) for k, s in labels.items()} == {
        "line1173": (1173.0, "basal"), "kh": (1176.0, "basal"), "hh": (1179.0, "axial"),
        "kk": (1222.0, "axial"), "hk": (1242.0, "basal")}
    assert all(s.nv_axis_angle == (71.0 if s.site_class == "basal" else 0.0) for s in catalog())
    flipped = site_by_label(catalog({"line1173": {"site_class": "axial"}}), "line1173")
    assert flipped.nv_axis_angle == 0.0
    with pytest.raises(KeyError):
        catalog({"nope": {"lifetime": 1.0}})
    with pytest.raises(ValueError):
        NVSite("x", 1300.0, "axial")
    assert nearest_site(catalog(), 1241.0).label == "hk"
    with pytest.raises(ValueError):
        nearest_site(catalog(), 1200.0)


def test_catalog_csv_round_trip(tmp_path):
    path = tmp_path / "catalog.csv"
    write_catalog_csv(path, catalog())
    assert read_catalog_csv(path) == catalog()
    assert path.read_text().splitlines()[0] == "label,zpl_nm,class,axis_angle_deg"


def test_curve_csv_round_trip(tmp_path):
    curve = CollectionCurve({"bulk": (0.0029, 0.0334), 300: (0.01, 0.02), 1100: (0.1, 1 / 3)})
    path = tmp_path / "curve.csv"
    write_curve_csv(path, curve)
    assert read_curve_csv(path).values == curve.values
