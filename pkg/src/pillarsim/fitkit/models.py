"""Lorentzian-sum and IRF-convolved multi-exponential models with Jacobians.

Parameter layouts
-----------------
Lorentzian sum : ``[A_1, x0_1, fwhm_1, A_2, x0_2, fwhm_2, ...]``
Biexponential decay : ``[A1, tau1, A2, tau2, baseline, t0]``
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import erfc, erfcx, ndtr

FWHM_TO_SIGMA = 1.0 / (2.0 * np.sqrt(2.0 * np.log(2.0)))
_SQRT2 = np.sqrt(2.0)


# --- Lorentzians ---------------------------------------------------------------


@dataclass(frozen=True)
class LorentzianPeak:
    """Area-normalized Lorentzian: ``(2A/(pi fwhm)) / (1 + 4 (x - x0)^2 / fwhm^2)``."""

    area: float
    center: float
    fwhm: float

    def __post_init__(self):
        if self.area < 0:
            raise ValueError("peak area must be non-negative")
        if not self.fwhm > 0:
            raise ValueError("peak width must be positive")


def lorentzian_sum(x, params) -> np.ndarray:
    x = np.asarray(x, float)
    p = np.asarray(params, float).reshape(-1, 3)
    out = np.zeros_like(x)
    for a, x0, g in p:
        u = 2.0 * (x - x0) / g
        out += (2.0 * a / (np.pi * g)) / (1.0 + u * u)
    return out


def lorentzian_sum_jacobian(x, params) -> np.ndarray:
    x = np.asarray(x, float)
    p = np.asarray(params, float).reshape(-1, 3)
    J = np.empty((x.size, p.size))
    for i, (a, x0, g) in enumerate(p):
        u = 2.0 * (x - x0) / g
        q = 1.0 / (1.0 + u * u)
        J[:, 3 * i] = 2.0 / (np.pi * g) * q
        J[:, 3 * i + 1] = 2.0 * a / (np.pi * g) * 4.0 * u / g * q * q
        J[:, 3 * i + 2] = 2.0 * a / (np.pi * g * g) * (u * u - 1.0) * q * q
    return J


def eval_lorentzian_sum(peaks, x) -> np.ndarray:
    """Sum of :class:`LorentzianPeak` curves on ``x``."""
    peaks = list(peaks)
    if not peaks:
        return np.zeros_like(np.asarray(x, float))
    return lorentzian_sum(x, [v for pk in peaks for v in (pk.area, pk.center, pk.fwhm)])


# --- decays ----------------------------------------------------------------------


@dataclass(frozen=True)
class DecayModel:
    """``A1 exp(-(t-t0)/tau1) + A2 exp(-(t-t0)/tau2) + b`` for ``t >= t0``.

    Times in ns, amplitudes and baseline in counts per bin.
    """

    a1: float
    tau1: float
    a2: float = 0.0
    tau2: float = 0.54
    baseline: float = 0.0
    t0: float = 0.0

    def __post_init__(self):
        if not (self.tau1 > 0 and self.tau2 > 0):
            raise ValueError("lifetimes must be positive")
        if self.a1 < 0 or self.a2 < 0 or self.baseline < 0:
            raise ValueError("amplitudes and baseline must be non-negative")

    def as_params(self) -> np.ndarray:
        return np.array([self.a1, self.tau1, self.a2, self.tau2, self.baseline, self.t0])

    @classmethod
    def from_params(cls, p) -> "DecayModel":
        return cls(*(float(v) for v in p))


def _gauss(x, s):
    return np.exp(-0.5 * (x / s) ** 2) / (s * np.sqrt(2 * np.pi))


def _emg(x, tau, s):
    """Unit step exponential ``H(x) exp(-x/tau)`` convolved with a Gaussian of std ``s``."""
    z = (s / tau - x / s) / _SQRT2
    out = np.empty_like(x)
    pos = z > 0
    # erfcx form avoids overflow of exp() times underflow of erfc() on the rise
    out[pos] = 0.5 * np.exp(-0.5 * (x[pos] / s) ** 2) * erfcx(z[pos])
    xn = x[~pos]
    out[~pos] = 0.5 * np.exp(0.5 * (s / tau) ** 2 - xn / tau) * erfc(z[~pos])
    return out


def decay_curve(t, params, irf_sigma: float = 0.0) -> np.ndarray:
    t = np.asarray(t, float)
    a1, tau1, a2, tau2, b, t0 = np.asarray(params, float)
    x = t - t0
    if irf_sigma > 0:
        return a1 * _emg(x, tau1, irf_sigma) + a2 * _emg(x, tau2, irf_sigma) + b * ndtr(x / irf_sigma)
    on = x >= 0
    xs = np.where(on, x, 0.0)
    return np.where(on, a1 * np.exp(-xs / tau1) + a2 * np.exp(-xs / tau2) + b, 0.0)


def decay_jacobian(t, params, irf_sigma: float = 0.0) -> np.ndarray:
    t = np.asarray(t, float)
    a1, tau1, a2, tau2, b, t0 = np.asarray(params, float)
    x = t - t0
    J = np.zeros((t.size, 6))
    if irf_sigma > 0:
        s = irf_sigma
        phi = _gauss(x, s)
        for k, (a, tau) in enumerate(((a1, tau1), (a2, tau2))):
            g = _emg(x, tau, s)
            dgdx = phi - g / tau
            J[:, 2 * k] = g
            J[:, 2 * k + 1] = a * (x * g + s * s * dgdx) / tau**2
            J[:, 5] -= a * dgdx
        J[:, 4] = ndtr(x / s)
        J[:, 5] -= b * phi
        return J
    on = x >= 0
    xs = np.where(on, x, 0.0)
    for k, (a, tau) in enumerate(((a1, tau1), (a2, tau2))):
        g = np.where(on, np.exp(-xs / tau), 0.0)
        J[:, 2 * k] = g
        J[:, 2 * k + 1] = a * xs * g / tau**2
        J[:, 5] += a * g / tau
    J[:, 4] = on.astype(float)
    return J


def eval_decay(model: DecayModel, t, irf_fwhm: float = 0.0) -> np.ndarray:
    """Evaluate a decay on ``t`` (ns); ``irf_fwhm`` in ps (Gaussian IRF)."""
    if irf_fwhm < 0:
        raise ValueError("irf_fwhm must be non-negative")
    t = np.asarray(t, float)
    if t.size > 2 and not np.allclose(np.diff(t), t[1] - t[0], rtol=1e-9, atol=1e-12):
        raise ValueError("time grid must be uniform")
    return decay_curve(t, model.as_params(), irf_fwhm * 1e-3 * FWHM_TO_SIGMA)
