import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import horizontal_dipole_cone_fraction, horizontal_dipole_pattern
from pillarsim.farfield import (
    CollectionResult,
    ObjectiveSpec,
    collected_from_profile,
    collection_efficiency,
    enhancement_curve,
    near_to_far,
    read_collection_csv,
    write_collection_csv,
)
from pillarsim.fdtd import DipoleSource, FluxPlane, GridSpec, Simulation, box_around, plane_from_nm
from pillarsim.geometry import StructureSpec

WL = 1300.0
DX = 25.0
N = 128


def periodic_plane(n=N):
    g = GridSpec(cell_size=DX, extents=(n, n, 20), pml_cells=5, periodic=(True, True, False))
    p = FluxPlane(2, 10, (0, 0), (n, n), [WL])
    p.attach(g)
    return p


def fill_plane_wave(p, mx, my, a_s, a_p):
    """Upgoing vacuum plane wave on the lattice's periodic wavevector ``(mx, my)``."""
    n = p.eu.shape[1]
    k0 = 2 * np.pi / WL
    kx, ky = 2 * np.pi * mx / (n * DX), 2 * np.pi * my / (n * DX)
    kz = np.sqrt(k0**2 - kx**2 - ky**2)
    khat = np.array([kx, ky, kz]) / k0
    s = np.cross([0, 0, 1.0], khat)
    s = np.array([0, 1.0, 0]) if np.linalg.norm(s) < 1e-12 else s / np.linalg.norm(s)
    pe = np.cross(s, khat)
    e = a_s * s + a_p * pe
    h = np.cross(khat, e)
    idx = np.arange(n) * DX

    def wave(xoff, yoff):
        X, Y = np.meshgrid(idx + xoff, idx + yoff, indexing="ij")
        return np.exp(1j * (kx * X + ky * Y))

    # (E_x, H_y) share (u+1/2, v); (E_y, H_x) share (u, v+1/2)
    p.eu[0], p.hv[0] = e[0] * wave(DX / 2, 0), h[1] * wave(DX / 2, 0)
    p.ev[0], p.hu[0] = e[1] * wave(0, DX / 2), h[0] * wave(0, DX / 2)
    return kx, ky


def test_normal_plane_wave_lands_in_central_bin():
    p = periodic_plane()
    fill_plane_wave(p, 0, 0, 0.0, 1.0)
    sp = near_to_far(p, min_points=N)
    assert sp.power[0, 0] == pytest.approx(p.flux(), rel=1e-12)
    rest = sp.power.copy()
    rest[0, 0] = 0
    assert np.abs(rest).max() < 1e-12 * sp.power[0, 0]


@given(st.integers(-2, 2), st.integers(-2, 2), st.complex_numbers(max_magnitude=3),
       st.complex_numbers(max_magnitude=3))
def test_plane_wave_power_matches_plane_flux(mx, my, a_s, a_p):
    # |m|^2 <= 5 on 128 cells of 25 nm keeps sin(theta) <= 0.91
    if mx * mx + my * my > 5 or abs(a_s) + abs(a_p) < 1e-3:
        return
    p = periodic_plane()
    fill_plane_wave(p, mx, my, a_s, a_p)
    flux = p.flux()
    assert flux > 0
    exact = near_to_far(p, min_points=N)
    i, j = mx % N, my % N
    assert exact.power[i, j] == pytest.approx(flux, rel=1e-9)
    assert exact.total() == pytest.approx(flux, rel=1e-9)


def test_poynting_bins_sum_to_plane_flux(rng):
    p = periodic_plane(48)
    for a in ("eu", "ev", "hu", "hv"):
        getattr(p, a)[0] = rng.normal(size=(48, 48)) + 1j * rng.normal(size=(48, 48))
    sp = near_to_far(p, method="poynting", min_points=64)
    assert sp.total(propagating_only=False) == pytest.approx(p.flux(), rel=1e-10)
    assert sp.plane_flux == p.flux()


@pytest.fixture(scope="module")
def vacuum_dipole():
    """x dipole in vacuum with a 2.5 um monitor two cells above it."""
    n, pml = 100, 10
    half = (n // 2 + pml) * DX
    g = GridSpec(cell_size=DX, extents=(n + 1 + 2 * pml, n + 1 + 2 * pml, 61), pml_cells=pml,
                 origin=(-half, -half, -30 * DX))
    box = box_around(g.nearest_node((0, 0, 0)), 3, [WL])
    plane = plane_from_nm(g, 2, 2 * DX, [WL])
    sim = Simulation(g, None, [DipoleSource((0.0, 0.0, 0.0), (1.0, 0.0, 0.0))], [box, plane])
    assert sim.run_until_decayed().decayed
    return near_to_far(plane), box.flux()


def test_vacuum_dipole_pattern_matches_closed_form(vacuum_dipole):
    sp, total = vacuum_dipole
    theta, phi, radiance = sp.radiance()
    ref = 3 / (8 * np.pi) * total * horizontal_dipole_pattern(theta, phi)
    cone = theta <= np.radians(60)
    rms = np.sqrt(np.mean((radiance[cone] / ref[cone] - 1) ** 2))
    assert rms < 0.05


def test_vacuum_dipole_cone_fraction(vacuum_dipole):
    sp, total = vacuum_dipole
    eff = collection_efficiency(sp, ObjectiveSpec(0.85), total).efficiency
    assert eff == pytest.approx(horizontal_dipole_cone_fraction(0.85), abs=0.01)


def test_numerical_aperture_zero_collects_nothing(vacuum_dipole):
    sp, total = vacuum_dipole
    assert collection_efficiency(sp, ObjectiveSpec(0.0), total).efficiency == 0.0


@given(st.lists(st.floats(0.0, 0.99), min_size=2, max_size=6))
def test_collection_monotone_in_aperture(vacuum_dipole, nas):
    sp, total = vacuum_dipole
    s, cum = sp.cone_profile()
    effs = [collection_efficiency(sp, ObjectiveSpec(na), total).efficiency for na in sorted(nas)]
    assert all(0 <= e <= 1 for e in effs)
    assert np.all(np.diff(effs) >= 0)
    for na in nas:
        assert collected_from_profile(s, cum, na) == pytest.approx(sp.within(na), rel=1e-9, abs=1e-30)


def test_plane_inside_dielectric_rejected():
    g = GridSpec(cell_size=DX, extents=(30, 30, 30), pml_cells=6)
    eps = tuple(np.full(g.extents, 6.76) for _ in range(3))
    plane = plane_from_nm(g, 2, 15 * DX, [WL])
    Simulation(g, eps, [], [plane])
    with pytest.raises(ValueError, match="dielectric"):
        near_to_far(plane)


def test_downward_or_unattached_plane_rejected():
    with pytest.raises(ValueError):
        near_to_far(FluxPlane(2, 5, (0, 0), (8, 8), [WL]))
    p = FluxPlane(2, 5, (0, 0), (8, 8), [WL], normal=-1)
    with pytest.raises(ValueError):
        near_to_far(p)


def test_objective_and_power_validation(vacuum_dipole):
    sp, _ = vacuum_dipole
    with pytest.raises(ValueError):
        ObjectiveSpec(1.0)
    with pytest.raises(ValueError):
        collection_efficiency(sp, ObjectiveSpec(), 0.0)


def test_enhancement_curve():
    bulk = CollectionResult(StructureSpec("bulk"), "horizontal", 0.03, 1.0)
    same = CollectionResult(StructureSpec("pillar", 500.0), "horizontal", 0.03, 1.0)
    bigger = CollectionResult(StructureSpec("pillar", 800.0), "horizontal", 0.24, 1.0)
    assert enhancement_curve([same, bigger], bulk) == pytest.approx({500.0: 1.0, 800.0: 8.0})
    vert = CollectionResult(StructureSpec("pillar", 500.0), "vertical", 0.03, 1.0)
    with pytest.raises(ValueError, match="orientation"):
        enhancement_curve([vert], bulk)


def test_collection_csv_round_trip(tmp_path):
    rows = [("bulk", "horizontal", 0.0337, 1.0), (300.0, "vertical", 0.0123456789, 4.2)]
    path = tmp_path / "collection.csv"
    write_collection_csv(path, rows)
    assert read_collection_csv(path) == rows
    assert path.read_text().splitlines()[0] == "diameter_nm,orientation,efficiency,enhancement"
