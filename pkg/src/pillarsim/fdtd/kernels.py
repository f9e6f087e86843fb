"""Numba kernels for the Yee leapfrog update with CPML.

All quantities are in normalized units: lengths in cells, ``c = eps0 = mu0 = 1``
and the time step equals the Courant factor ``S``.  Field arrays share the
shape ``(nx, ny, nz)``; a component's ``[i, j, k]`` entry sits at the usual
staggered position (``Ex`` at ``(i+1/2, j, k)``, ``Hx`` at ``(i, j+1/2, k+1/2)``
and so on).  Neighbours outside the array are zero unless the axis is periodic.

Materials enter through per-component coefficient arrays ``c = S / eps_r``
sampled at each E component's own position.  A lookup-table variant with
``uint8`` material ids was tried and defeats loop vectorization.

The CPML auxiliary fields (kappa = 1) are advanced inside the main row loop
so that each row is read from memory once.  ``rowx[i]``/``rowy[j]`` give the
psi row for PML indices and -1 elsewhere.  Along z the slabs are the ranges
``[0, nloz)`` and ``[hiz, nz)``, stored in psi columns ``[0, nloz)`` and
``[nloz, nloz + nz - hiz)``.

Each phase (all-E, then all-H) writes disjoint cells, so ``prange`` over the
first axis gives bit-identical results for any thread count.
"""

import numpy as np
from numba import njit, prange


@njit(parallel=True, cache=True)
def update_h(ex, ey, ez, hx, hy, hz, s, px, py, pz,
             rowx, bx, ax, psi_hyx, psi_hzx,
             rowy, by, ay, psi_hxy, psi_hzy,
             nloz, hiz, bz, az, psi_hxz, psi_hyz):
    nx, ny, nz = ex.shape
    zero = np.zeros(nz, ex.dtype)
    for i in prange(nx):
        ip = i + 1
        if ip == nx:
            ip = 0 if px else -1
        mx = rowx[i]
        for j in range(ny):
            jp = j + 1
            if jp == ny:
                jp = 0 if py else -1
            my = rowy[j]
            exr = ex[i, j]
            eyr = ey[i, j]
            ezr = ez[i, j]
            ex_jp = ex[i, jp] if jp >= 0 else zero
            ez_jp = ez[i, jp] if jp >= 0 else zero
            ey_ip = ey[ip, j] if ip >= 0 else zero
            ez_ip = ez[ip, j] if ip >= 0 else zero
            hxr = hx[i, j]
            hyr = hy[i, j]
            hzr = hz[i, j]
            for k in range(nz - 1):
                hxr[k] -= s * ((ez_jp[k] - ezr[k]) - (eyr[k + 1] - eyr[k]))
                hyr[k] -= s * ((exr[k + 1] - exr[k]) - (ez_ip[k] - ezr[k]))
                hzr[k] -= s * ((ey_ip[k] - eyr[k]) - (ex_jp[k] - exr[k]))
            k = nz - 1
            ey_kp = eyr[0] if pz else zero[0]
            ex_kp = exr[0] if pz else zero[0]
            hxr[k] -= s * ((ez_jp[k] - ezr[k]) - (ey_kp - eyr[k]))
            hyr[k] -= s * ((ex_kp - exr[k]) - (ez_ip[k] - ezr[k]))
            hzr[k] -= s * ((ey_ip[k] - eyr[k]) - (ex_jp[k] - exr[k]))

            if mx >= 0:
                b = bx[mx]
                a = ax[mx]
                p1r = psi_hyx[mx, j]
                p2r = psi_hzx[mx, j]
                for k in range(nz):
                    p1 = b * p1r[k] + a * (ez_ip[k] - ezr[k])
                    p2 = b * p2r[k] + a * (ey_ip[k] - eyr[k])
                    p1r[k] = p1
                    p2r[k] = p2
                    hyr[k] += s * p1
                    hzr[k] -= s * p2
            if my >= 0:
                b = by[my]
                a = ay[my]
                p1r = psi_hxy[i, my]
                p2r = psi_hzy[i, my]
                for k in range(nz):
                    p1 = b * p1r[k] + a * (ez_jp[k] - ezr[k])
                    p2 = b * p2r[k] + a * (ex_jp[k] - exr[k])
                    p1r[k] = p1
                    p2r[k] = p2
                    hxr[k] -= s * p1
                    hzr[k] += s * p2
            p1r = psi_hxz[i, j]
            p2r = psi_hyz[i, j]
            for r in range(2):
                k0 = 0 if r == 0 else hiz
                k1 = nloz if r == 0 else nz
                off = 0 if r == 0 else nloz - hiz
                for k in range(k0, k1):
                    m = k + off
                    if k + 1 < nz:
                        dey = eyr[k + 1] - eyr[k]
                        dex = exr[k + 1] - exr[k]
                    else:
                        dey = -eyr[k]
                        dex = -exr[k]
                    p1 = bz[m] * p1r[m] + az[m] * dey
                    p2 = bz[m] * p2r[m] + az[m] * dex
                    p1r[m] = p1
                    p2r[m] = p2
                    hxr[k] += s * p1
                    hyr[k] -= s * p2


@njit(parallel=True, cache=True)
def update_e(ex, ey, ez, hx, hy, hz, cx, cy, cz, px, py, pz,
             rowx, bx, ax, psi_eyx, psi_ezx,
             rowy, by, ay, psi_exy, psi_ezy,
             nloz, hiz, bz, az, psi_exz, psi_eyz):
    nx, ny, nz = ex.shape
    zero = np.zeros(nz, hx.dtype)
    for i in prange(nx):
        im = i - 1
        if im < 0:
            im = nx - 1 if px else -1
        mx = rowx[i]
        for j in range(ny):
            jm = j - 1
            if jm < 0:
                jm = ny - 1 if py else -1
            my = rowy[j]
            hxr = hx[i, j]
            hyr = hy[i, j]
            hzr = hz[i, j]
            hx_jm = hx[i, jm] if jm >= 0 else zero
            hz_jm = hz[i, jm] if jm >= 0 else zero
            hy_im = hy[im, j] if im >= 0 else zero
            hz_im = hz[im, j] if im >= 0 else zero
            exr = ex[i, j]
            eyr = ey[i, j]
            ezr = ez[i, j]
            cxr = cx[i, j]
            cyr = cy[i, j]
            czr = cz[i, j]
            hy_km = hyr[nz - 1] if pz else zero[0]
            hx_km = hxr[nz - 1] if pz else zero[0]
            exr[0] += cxr[0] * ((hzr[0] - hz_jm[0]) - (hyr[0] - hy_km))
            eyr[0] += cyr[0] * ((hxr[0] - hx_km) - (hzr[0] - hz_im[0]))
            ezr[0] += czr[0] * ((hyr[0] - hy_im[0]) - (hxr[0] - hx_jm[0]))
            for k in range(1, nz):
                exr[k] += cxr[k] * ((hzr[k] - hz_jm[k]) - (hyr[k] - hyr[k - 1]))
                eyr[k] += cyr[k] * ((hxr[k] - hxr[k - 1]) - (hzr[k] - hz_im[k]))
                ezr[k] += czr[k] * ((hyr[k] - hy_im[k]) - (hxr[k] - hx_jm[k]))

            if mx >= 0:
                b = bx[mx]
                a = ax[mx]
                p1r = psi_eyx[mx, j]
                p2r = psi_ezx[mx, j]
                for k in range(nz):
                    p1 = b * p1r[k] + a * (hzr[k] - hz_im[k])
                    p2 = b * p2r[k] + a * (hyr[k] - hy_im[k])
                    p1r[k] = p1
                    p2r[k] = p2
                    eyr[k] -= cyr[k] * p1
                    ezr[k] += czr[k] * p2
            if my >= 0:
                b = by[my]
                a = ay[my]
                p1r = psi_exy[i, my]
                p2r = psi_ezy[i, my]
                for k in range(nz):
                    p1 = b * p1r[k] + a * (hzr[k] - hz_jm[k])
                    p2 = b * p2r[k] + a * (hxr[k] - hx_jm[k])
                    p1r[k] = p1
                    p2r[k] = p2
                    exr[k] += cxr[k] * p1
                    ezr[k] -= czr[k] * p2
            p1r = psi_exz[i, j]
            p2r = psi_eyz[i, j]
            for r in range(2):
                k0 = 0 if r == 0 else hiz
                k1 = nloz if r == 0 else nz
                off = 0 if r == 0 else nloz - hiz
                for k in range(k0, k1):
                    m = k + off
                    if k > 0:
                        dhy = hyr[k] - hyr[k - 1]
                        dhx = hxr[k] - hxr[k - 1]
                    else:
                        dhy = hyr[k]
                        dhx = hxr[k]
                    p1 = bz[m] * p1r[m] + az[m] * dhy
                    p2 = bz[m] * p2r[m] + az[m] * dhx
                    p1r[m] = p1
                    p2r[m] = p2
                    exr[k] -= cxr[k] * p1
                    eyr[k] += cyr[k] * p2


@njit(parallel=True, cache=True)
def field_energy(ex, ey, ez, hx, hy, hz, cx, cy, cz, s, lo, hi):
    """Sum of eps*E^2 + H^2 over the box ``lo <= idx < hi`` (eps = s / c).

    Partial sums are formed per x-slab and added serially so the total does
    not depend on the thread count.
    """
    n = hi[0] - lo[0]
    partial = np.zeros(n)
    for ii in prange(n):
        i = lo[0] + ii
        acc = 0.0
        for j in range(lo[1], hi[1]):
            for k in range(lo[2], hi[2]):
                acc += (s / cx[i, j, k] * np.float64(ex[i, j, k]) ** 2
                        + s / cy[i, j, k] * np.float64(ey[i, j, k]) ** 2
                        + s / cz[i, j, k] * np.float64(ez[i, j, k]) ** 2
                        + np.float64(hx[i, j, k]) ** 2
                        + np.float64(hy[i, j, k]) ** 2
                        + np.float64(hz[i, j, k]) ** 2)
        partial[ii] = acc
    total = 0.0
    for ii in range(n):
        total += partial[ii]
    return total
