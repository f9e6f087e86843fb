"""Running-DFT monitors on axis-aligned planes and closed boxes.

A plane monitor normal to axis ``a`` stores the two tangential E components
sampled on the node plane and the two tangential H components averaged over
the half-planes on either side, so each E/H pair used in the Poynting product
sits at the same point.  With ``(u, v) = (a+1, a+2) mod 3`` the normal flux is
``S_a = E_u H_v* - E_v H_u*``; ``E_u``/``H_v`` share the points ``(u+1/2, v)``
and ``E_v``/``H_u`` share ``(u, v+1/2)``.

Phasors use ``F(w) = sum_n f(t_n) exp(+i w t_n) dt`` with each field sampled
at its own leapfrog time.
"""

from __future__ import annotations

import numpy as np

from .grid import GridSpec

_E = ("ex", "ey", "ez")
_H = ("hx", "hy", "hz")


class FluxPlane:
    """DFT monitor on one rectangular, node-aligned plane.

    Parameters
    ----------
    axis : int
        Normal axis.
    index : int
        Node index of the plane along ``axis``.
    lo, hi : tuple of int
        Node ranges ``[lo, hi]`` along the two tangential axes ``(u, v)``.
    wavelengths : sequence of float
        Vacuum wavelengths in nm.
    normal : {+1, -1}
        Orientation of the surface normal.
    weighting : {"uniform", "trapezoid"}
        ``uniform`` uses the half-open sample block ``[lo, hi)`` along both
        axes (FFT-friendly, exact Parseval); ``trapezoid`` tiles the closed
        rectangle exactly, giving half weight to samples on its rim, and is
        what closed boxes use.
    """

    def __init__(self, axis, index, lo, hi, wavelengths, normal=1, weighting="uniform", name=None):
        if axis not in (0, 1, 2):
            raise ValueError("axis must be 0, 1 or 2")
        if normal not in (1, -1):
            raise ValueError("normal must be +1 or -1")
        if weighting not in ("uniform", "trapezoid"):
            raise ValueError("unknown weighting")
        self.axis = axis
        self.index = int(index)
        self.lo = tuple(int(x) for x in lo)
        self.hi = tuple(int(x) for x in hi)
        if self.hi[0] <= self.lo[0] or self.hi[1] <= self.lo[1]:
            raise ValueError("empty monitor plane")
        self.wavelengths = np.atleast_1d(np.asarray(wavelengths, float))
        self.normal = normal
        self.weighting = weighting
        self.name = name
        self.u = (axis + 1) % 3
        self.v = (axis + 2) % 3
        self.cell_size = None
        self.omegas = None
        self.max_eps = None
        self.min_eps = None
        nw = len(self.wavelengths)
        su, sv = self._shapes()
        self.eu = np.zeros((nw, *su), complex)
        self.hv = np.zeros((nw, *su), complex)
        self.ev = np.zeros((nw, *sv), complex)
        self.hu = np.zeros((nw, *sv), complex)

    # sample blocks -----------------------------------------------------------

    def _ranges(self):
        (u0, v0), (u1, v1) = self.lo, self.hi
        if self.weighting == "uniform":
            ru = rv = (slice(u0, u1), slice(v0, v1))
        else:
            ru = (slice(u0, u1), slice(v0, v1 + 1))  # E_u at u+1/2, closed in v
            rv = (slice(u0, u1 + 1), slice(v0, v1))
        return ru, rv

    def _shapes(self):
        ru, rv = self._ranges()
        return ((ru[0].stop - ru[0].start, ru[1].stop - ru[1].start),
                (rv[0].stop - rv[0].start, rv[1].stop - rv[1].start))

    def weights(self):
        """Quadrature weights for the (E_u, H_v) and (E_v, H_u) sample blocks."""
        su, sv = self._shapes()
        wu, wv = np.ones(su), np.ones(sv)
        if self.weighting == "trapezoid":
            wu[:, [0, -1]] *= 0.5
            wv[[0, -1], :] *= 0.5
        return wu, wv

    def _index(self, rng, offset=0):
        idx = [None, None, None]
        idx[self.axis] = self.index + offset
        idx[self.u], idx[self.v] = rng
        return tuple(idx)

    def _take(self, arr, rng, offset=0):
        """Slice a field array on the plane, returned in ``(u, v)`` order."""
        out = arr[self._index(rng, offset)]
        return out.T if self.u > self.v else out

    # registration / accumulation -------------------------------------------

    def attach(self, grid: GridSpec, eps_arrays=None):
        n = grid.extents
        if not 1 <= self.index < n[self.axis]:
            raise ValueError("monitor plane must not touch the low domain wall")
        # uniform blocks are half-open, so hi may equal the extent
        top = 0 if self.weighting == "uniform" else 1
        for k, ax in enumerate((self.u, self.v)):
            if self.lo[k] < 0 or self.hi[k] + top > n[ax]:
                raise ValueError("monitor plane extends outside the grid")
        self.cell_size = grid.cell_size
        # angular frequency in normalized units (c = 1, lengths in cells)
        self.omegas = 2 * np.pi * grid.cell_size / self.wavelengths
        if eps_arrays is not None:
            ru, rv = self._ranges()
            vals = [self._take(eps_arrays[self.u], ru), self._take(eps_arrays[self.v], rv)]
            self.max_eps = float(max(v.max() for v in vals))
            self.min_eps = float(min(v.min() for v in vals))

    def accumulate_e(self, fields, t, dt):
        ru, rv = self._ranges()
        ph = (np.exp(1j * self.omegas * t) * dt)[:, None, None]
        self.eu += ph * self._take(fields[_E[self.u]], ru)
        self.ev += ph * self._take(fields[_E[self.v]], rv)

    def accumulate_h(self, fields, t, dt):
        ru, rv = self._ranges()
        ph = (np.exp(1j * self.omegas * t) * dt)[:, None, None]
        hv, hu = fields[_H[self.v]], fields[_H[self.u]]
        self.hv += ph * (0.5 * (self._take(hv, ru, -1).astype(float) + self._take(hv, ru)))
        self.hu += ph * (0.5 * (self._take(hu, rv, -1).astype(float) + self._take(hu, rv)))

    def reset(self):
        for arr in (self.eu, self.ev, self.hu, self.hv):
            arr[...] = 0

    def flux(self, wavelength_index: int = 0) -> float:
        return poynting_flux(self, wavelength_index)


def poynting_flux(monitor, wavelength_index: int = 0) -> float:
    """Time-averaged power ``1/2 Re(E x H*) . n`` through a monitor surface.

    Works for a :class:`FluxPlane` or a :class:`FluxBox` (outward normal).
    The result is in arbitrary but consistent units.
    """
    if isinstance(monitor, FluxBox):
        return sum(poynting_flux(p, wavelength_index) for p in monitor.planes)
    w = wavelength_index
    wu, wv = monitor.weights()
    s = np.sum(wu * monitor.eu[w] * np.conj(monitor.hv[w])) \
        - np.sum(wv * monitor.ev[w] * np.conj(monitor.hu[w]))
    area = (monitor.cell_size or 1.0) ** 2
    return float(0.5 * monitor.normal * np.real(s) * area)


class FluxBox:
    """Closed box of six trapezoid-weighted planes with outward normals.

    ``lo``/``hi`` are the node indices of opposite corners.
    """

    def __init__(self, lo, hi, wavelengths, name=None):
        lo = tuple(int(x) for x in lo)
        hi = tuple(int(x) for x in hi)
        if any(h - l < 2 for l, h in zip(lo, hi)):
            raise ValueError("box must span at least two cells per axis")
        self.lo, self.hi, self.name = lo, hi, name
        self.planes = []
        for a in range(3):
            u, v = (a + 1) % 3, (a + 2) % 3
            for idx, sign in ((lo[a], -1), (hi[a], 1)):
                self.planes.append(FluxPlane(a, idx, (lo[u], lo[v]), (hi[u], hi[v]),
                                             wavelengths, normal=sign, weighting="trapezoid"))

    @property
    def wavelengths(self):
        return self.planes[0].wavelengths

    def attach(self, grid, eps_arrays=None):
        for p in self.planes:
            p.attach(grid, eps_arrays)

    def accumulate_e(self, fields, t, dt):
        for p in self.planes:
            p.accumulate_e(fields, t, dt)

    def accumulate_h(self, fields, t, dt):
        for p in self.planes:
            p.accumulate_h(fields, t, dt)

    def reset(self):
        for p in self.planes:
            p.reset()

    def flux(self, wavelength_index: int = 0) -> float:
        return poynting_flux(self, wavelength_index)


def plane_from_nm(grid: GridSpec, axis: int, position: float, wavelengths,
                  extent=None, normal=1, name=None) -> FluxPlane:
    """Uniform-weight plane at physical ``position`` (nm) along ``axis``.

    ``extent`` gives ``((u_min, u_max), (v_min, v_max))`` in nm and defaults to
    the PML-free cross-section.  Every coordinate must fall on a node plane.
    """
    u, v = (axis + 1) % 3, (axis + 2) % 3
    if not grid.is_aligned(position, axis):
        raise ValueError("monitor plane is not cell-aligned")
    index = int(round((position - grid.origin[axis]) / grid.cell_size))
    if extent is None:
        lo = (grid.interior(u)[0], grid.interior(v)[0])
        hi = (grid.interior(u)[1], grid.interior(v)[1])
    else:
        lo, hi = [], []
        for (a, b), ax in zip(extent, (u, v)):
            if not (grid.is_aligned(a, ax) and grid.is_aligned(b, ax)):
                raise ValueError("monitor plane is not cell-aligned")
            lo.append(int(round((a - grid.origin[ax]) / grid.cell_size)))
            hi.append(int(round((b - grid.origin[ax]) / grid.cell_size)))
    return FluxPlane(axis, index, lo, hi, wavelengths, normal=normal, name=name)


def box_around(node, half_size: int, wavelengths, name=None) -> FluxBox:
    """Cube of ``2 * half_size`` cells centred on a node."""
    node = np.asarray(node, int)
    return FluxBox(node - half_size, node + half_size, wavelengths, name=name)
