"""3D FDTD solver: lattice state, dipole sources and the leapfrog driver."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .grid import COMPONENT_OFFSETS, COMPONENTS, GridSpec

log = logging.getLogger(__name__)


class InstabilityError(RuntimeError):
    """Raised when a non-finite field value appears."""


@dataclass
class FieldLattice:
    """Staggered E/H field state plus the current step counter."""

    ex: np.ndarray
    ey: np.ndarray
    ez: np.ndarray
    hx: np.ndarray
    hy: np.ndarray
    hz: np.ndarray
    step: int = 0

    @classmethod
    def zeros(cls, grid: GridSpec) -> "FieldLattice":
        return cls(*(np.zeros(grid.extents, grid.dtype) for _ in range(6)))

    def as_dict(self) -> dict:
        return {c: getattr(self, c) for c in COMPONENTS}

    def all_finite(self) -> bool:
        return all(np.isfinite(getattr(self, c)).all() for c in COMPONENTS)


@dataclass(frozen=True)
class DipoleSource:
    """Soft electric-dipole current with a Gaussian-modulated sine pulse.

    ``pulse_bandwidth`` is the standard deviation of the pulse's amplitude
    spectrum as a fraction of the centre frequency.  The envelope peaks at
    ``delay * tau`` after t=0 where ``tau = 1 / (pulse_bandwidth * w0)``; the
    sine is odd about the peak, so the injected current has no DC part and
    leaves no static charge behind.
    """

    position: tuple
    orientation: tuple = (1.0, 0.0, 0.0)
    center_wavelength: float = 1300.0
    pulse_bandwidth: float = 0.15
    amplitude: float = 1.0
    delay: float = 4.5

    def __post_init__(self):
        o = np.asarray(self.orientation, float)
        if o.shape != (3,) or abs(np.linalg.norm(o) - 1.0) > 1e-9:
            raise ValueError("dipole orientation must be a unit 3-vector")
        if not self.pulse_bandwidth > 0:
            raise ValueError("pulse_bandwidth must be positive")

    def timing(self, grid: GridSpec):
        """Return ``(w0, tau, t0)`` in normalized time units."""
        w0 = 2 * np.pi * grid.cell_size / self.center_wavelength
        tau = 1.0 / (self.pulse_bandwidth * w0)
        # centre on a half step so the sampled current stays odd about t0
        t0 = (np.floor(self.delay * tau / grid.dt) + 0.5) * grid.dt
        return w0, tau, t0

    def end_time(self, grid: GridSpec) -> float:
        return 2 * self.timing(grid)[2]

    def waveform(self, t, grid: GridSpec):
        w0, tau, t0 = self.timing(grid)
        t = np.asarray(t, float)
        g = self.amplitude * np.exp(-0.5 * ((t - t0) / tau) ** 2) * np.sin(w0 * (t - t0))
        return np.where(t <= 2 * t0, g, 0.0)

    def taps(self, grid: GridSpec):
        """Grid taps ``(component, index, weight)`` for this dipole.

        The dipole is snapped to the nearest node and each Cartesian part is
        split equally over the two E edges meeting at that node, which keeps
        the source centred on the node for every orientation.
        """
        node = grid.nearest_node(self.position)
        out = []
        for a, comp in enumerate(("ex", "ey", "ez")):
            w = float(self.orientation[a])
            if w == 0.0:
                continue
            for shift in (-1, 0):
                idx = list(node)
                idx[a] += shift
                out.append((comp, tuple(idx), 0.5 * w))
        return out


@dataclass
class RunResult:
    steps: int
    decayed: bool
    capped: bool
    peak_energy: float
    final_energy: float
    energy_history: list = field(default_factory=list)

    @property
    def warning(self) -> str | None:
        if self.capped:
            return "step cap reached before the field energy decayed (long-lived resonance)"
        return None


class Simulation:
    """FDTD run over a sampled permittivity distribution.

    Parameters
    ----------
    grid : GridSpec
    eps : tuple of ndarray, optional
        Relative permittivity sampled at the Ex, Ey and Ez positions; vacuum
        when omitted.
    sources : list of DipoleSource
    monitors : list
        Objects with ``attach``, ``accumulate_e`` and ``accumulate_h``
        (see :mod:`pillarsim.fdtd.monitors`).
    """

    def __init__(self, grid: GridSpec, eps=None, sources=(), monitors=()):
        self.grid = grid
        dtype = grid.dtype
        if eps is None:
            eps = tuple(np.ones(grid.extents) for _ in range(3))
        eps = tuple(np.asarray(e, float) for e in eps)
        for e in eps:
            if e.shape != grid.extents:
                raise ValueError("permittivity arrays must match the grid extents")
            if not np.all(e >= 1.0):
                raise ValueError("relative permittivity must be >= 1")
        self.eps = eps
        s = grid.courant_factor
        self._s = dtype(s)
        self._c = tuple((s / e).astype(dtype) for e in eps)
        self.lattice = FieldLattice.zeros(grid)
        self.sources = list(sources)
        for src in self.sources:
            if not grid.inside_interior(src.position):
                raise ValueError("dipole must sit strictly inside the PML-free region")
        self._taps = [(c, idx, w, src) for src in self.sources for c, idx, w in src.taps(grid)]
        self.monitors = list(monitors)
        for m in self.monitors:
            m.attach(grid, eps)
        self._pml = [grid.cpml_profile(a) for a in range(3)]
        self._psi = self._alloc_psi()
        self._args_h = self._pml_args("h")
        self._args_e = self._pml_args("e")
        lo, hi = grid.interior_box()
        self._energy_lo = np.array(lo, np.int64)
        self._energy_hi = np.array([h + 1 for h in hi], np.int64)

    def _alloc_psi(self):
        """CPML state: per-axis row maps, coefficients and psi arrays."""
        g, dtype = self.grid, self.grid.dtype
        out = []
        for a in range(3):
            nlo, hi, be, ae, bh, ah = self._pml[a]
            n = g.extents[a]
            rows = nlo + n - hi
            rowmap = np.full(n, -1, np.int64)
            rowmap[:nlo] = np.arange(nlo)
            rowmap[hi:] = np.arange(nlo, rows)
            shape = list(g.extents)
            shape[a] = rows
            psi = [np.zeros(shape, dtype) for _ in range(4)]
            out.append(dict(nlo=nlo, hi=hi, rowmap=rowmap, e=(be, ae), h=(bh, ah), psi=psi))
        return out

    def _pml_args(self, kind):
        px, py, pz = self._psi
        k0, k1 = (0, 1) if kind == "e" else (2, 3)
        return (px["rowmap"], *px[kind], px["psi"][k0], px["psi"][k1],
                py["rowmap"], *py[kind], py["psi"][k0], py["psi"][k1],
                pz["nlo"], pz["hi"], *pz[kind], pz["psi"][k0], pz["psi"][k1])

    @property
    def time(self) -> float:
        """Time of the current E field (normalized units)."""
        return self.lattice.step * self.grid.dt

    def source_end_time(self) -> float:
        return max((s.end_time(self.grid) for s in self.sources), default=0.0)

    def step(self):
        """Advance one leapfrog step (H to n+1/2, then E to n+1)."""
        g, L = self.grid, self.lattice
        ex, ey, ez, hx, hy, hz = L.ex, L.ey, L.ez, L.hx, L.hy, L.hz
        cx, cy, cz = self._c
        s = self._s
        px, py, pz = g.periodic
        dt = g.dt
        n = L.step

        kernels.update_h(ex, ey, ez, hx, hy, hz, s, px, py, pz, *self._args_h)
        th = (n + 0.5) * dt
        fields = L.as_dict()
        for m in self.monitors:
            m.accumulate_h(fields, th, dt)

        kernels.update_e(ex, ey, ez, hx, hy, hz, cx, cy, cz, px, py, pz, *self._args_e)
        for comp, idx, w, src in self._taps:
            j = src.waveform(th, g)
            if j != 0.0:
                arr = fields[comp]
                coef = self._c["xyz".index(comp[1])][idx]
                arr[idx] -= arr.dtype.type(coef * w * j)
        L.step = n + 1
        te = (n + 1) * dt
        for m in self.monitors:
            m.accumulate_e(fields, te, dt)

    def energy(self) -> float:
        """Electromagnetic energy (arbitrary units) in the PML-free region."""
        L = self.lattice
        return kernels.field_energy(L.ex, L.ey, L.ez, L.hx, L.hy, L.hz, *self._c,
                                    float(self.grid.courant_factor),
                                    self._energy_lo, self._energy_hi)

    def check_finite(self, energy=None):
        if energy is None:
            energy = self.energy()
        if np.isfinite(energy) and self.lattice.all_finite():
            return
        for c in COMPONENTS:
            arr = getattr(self.lattice, c)
            bad = np.argwhere(~np.isfinite(arr))
            if len(bad):
                raise InstabilityError(
                    f"non-finite {c} at index {tuple(bad[0])} after step {self.lattice.step}; "
                    f"check the Courant factor ({self.grid.courant_factor})")
        raise InstabilityError(f"non-finite field energy after step {self.lattice.step}")

    def run(self, steps: int):
        for _ in range(int(steps)):
            self.step()

    def run_until_decayed(self, decay: float = 1e-5, max_steps: int = 20000,
                          check_every: int = 20) -> RunResult:
        """Step until the interior energy drops below ``decay`` times its peak.

        The criterion is only tested once every source has switched off.  When
        ``max_steps`` is reached first the result carries ``capped=True``.
        """
        g = self.grid
        t_end = self.source_end_time()
        peak = 0.0
        history = []
        energy = 0.0
        while self.lattice.step < max_steps:
            self.step()
            if self.lattice.step % check_every:
                continue
            energy = self.energy()
            if not np.isfinite(energy):
                self.check_finite(energy)
            history.append((self.lattice.step, energy))
            peak = max(peak, energy)
            if self.time > t_end and peak > 0 and energy < decay * peak:
                return RunResult(self.lattice.step, True, False, peak, energy, history)
        if self.lattice.step % check_every:
            energy = self.energy()
            self.check_finite(energy)
            peak = max(peak, energy)
        decayed = peak > 0 and energy < decay * peak and self.time > t_end
        result = RunResult(self.lattice.step, decayed, not decayed, peak, energy, history)
        if result.capped:
            log.warning("run stopped at the %d-step cap: %s", max_steps, result.warning)
        return result

    def sample_positions(self, component: str):
        """Physical coordinates (nm) of every sample of ``component``."""
        off = COMPONENT_OFFSETS[component]
        return [self.grid.coords(a, off[a]) for a in range(3)]


def dump_plane(lattice: FieldLattice, component: str, axis: int, index: int, path) -> None:
    """Write one field component on a node plane as a flat binary file.

    Layout: five little-endian int64 values ``(component id, axis, index, n1,
    n2)`` followed by ``n1 * n2`` little-endian float64 values in C order,
    where ``component id`` indexes ``("ex", "ey", "ez", "hx", "hy", "hz")``.
    """
    arr = np.take(getattr(lattice, component), index, axis=axis).astype("<f8")
    header = np.array([COMPONENTS.index(component), axis, index, *arr.shape], "<i8")
    with open(path, "wb") as fh:
        fh.write(header.tobytes())
        fh.write(np.ascontiguousarray(arr).tobytes())


def load_plane(path):
    """Inverse of :func:`dump_plane`; returns ``(component, axis, index, array)``."""
    raw = open(path, "rb").read()
    header = np.frombuffer(raw[:40], "<i8")
    comp, axis, index, n1, n2 = (int(x) for x in header)
    arr = np.frombuffer(raw[40:], "<f8").reshape(n1, n2)
    return COMPONENTS[comp], axis, index, arr
