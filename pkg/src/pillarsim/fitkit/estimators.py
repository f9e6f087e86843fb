"""scikit-learn style wrappers around :func:`lm_fit` for the two model families."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from .lm import FitProblem, lm_fit
from .models import (FWHM_TO_SIGMA, decay_curve, decay_jacobian, lorentzian_sum,
                     lorentzian_sum_jacobian)


class FitConvergenceError(RuntimeError):
    """Raised when a fit does not converge; ``result`` holds the last iterate."""

    def __init__(self, message, result):
        super().__init__(message)
        self.result = result


def poisson_sigma(y) -> np.ndarray:
    """Counting-statistics uncertainty ``sqrt(max(y, 1))``."""
    return np.sqrt(np.maximum(np.asarray(y, float), 1.0))


def check_xy(X, y=None):
    """Validate a single-feature design matrix (or 1D grid) and targets."""
    x = np.asarray(X, float)
    if x.ndim == 2:
        if x.shape[1] != 1:
            raise ValueError(f"expected one feature column, got {x.shape[1]}")
        x = x[:, 0]
    if x.ndim != 1 or x.size == 0:
        raise ValueError("X must be a non-empty 1D grid or an (n, 1) array")
    if not np.all(np.isfinite(x)):
        raise ValueError("X contains non-finite values")
    if y is None:
        return x
    y = np.asarray(y, float).ravel()
    if y.shape != x.shape:
        raise ValueError("X and y lengths differ")
    if not np.all(np.isfinite(y)):
        raise ValueError("y contains non-finite values")
    return x, y


def _with_offset(model, jac):
    def f(x, p):
        return model(x, p[:-1]) + p[-1]

    def j(x, p):
        return np.column_stack([jac(x, p[:-1]), np.ones_like(x)])

    return f, j


class _LMRegressor(RegressorMixin, BaseEstimator):
    def _solve(self, problem):
        res = lm_fit(problem, max_iter=self.max_iter, xtol=self.xtol)
        self.result_ = res
        self.params_ = res.params
        self.covariance_ = res.covariance
        self.converged_ = res.converged
        self.n_iter_ = res.iterations
        if not res.converged and self.require_convergence:
            raise FitConvergenceError(f"fit did not converge: {res.message}", res)
        return self

    def _sigma(self, y, sigma):
        if sigma is not None:
            return np.asarray(sigma, float)
        if self.weighting == "poisson":
            return poisson_sigma(y)
        if self.weighting == "uniform":
            return np.ones_like(y)
        raise ValueError("weighting must be 'poisson' or 'uniform'")


class LorentzianSumRegressor(_LMRegressor):
    """Fit a sum of area-normalized Lorentzians.

    Parameters
    ----------
    init_peaks : array_like, shape (n_peaks, 3)
        Start ``(area, center, fwhm)`` per peak.
    lower, upper : array_like, same shape, optional
        Bounds; areas default to ``>= 0`` and widths to ``> 0``.
    weighting : {"poisson", "uniform"}
    baseline : float or None
        Start value of a constant offset fitted alongside the peaks (bounded
        below by 0); ``None`` fits the peaks alone.
    """

    def __init__(self, init_peaks=None, lower=None, upper=None, weighting="poisson",
                 baseline=None, max_iter=200, xtol=1e-8, require_convergence=True):
        self.init_peaks = init_peaks
        self.baseline = baseline
        self.lower = lower
        self.upper = upper
        self.weighting = weighting
        self.max_iter = max_iter
        self.xtol = xtol
        self.require_convergence = require_convergence

    def fit(self, X, y, sigma=None):
        x, y = check_xy(X, y)
        if self.init_peaks is None:
            raise ValueError("init_peaks is required")
        p0 = np.asarray(self.init_peaks, float).reshape(-1, 3)
        lo = np.tile([0.0, -np.inf, 1e-9], (len(p0), 1)) if self.lower is None else np.asarray(self.lower, float)
        hi = np.full_like(p0, np.inf) if self.upper is None else np.asarray(self.upper, float)
        p0, lo, hi = p0.ravel(), lo.ravel(), hi.ravel()
        model, jac = lorentzian_sum, lorentzian_sum_jacobian
        if self.baseline is not None:
            p0 = np.r_[p0, self.baseline]
            lo, hi = np.r_[lo, 0.0], np.r_[hi, np.inf]
            model, jac = _with_offset(model, jac)
        problem = FitProblem(model, jac, x, y, p0, self._sigma(y, sigma), lo, hi)
        return self._solve(problem)

    @property
    def peaks_(self):
        check_is_fitted(self, "params_")
        n = self.params_.size - (self.params_.size % 3)
        return self.params_[:n].reshape(-1, 3)

    @property
    def baseline_(self):
        check_is_fitted(self, "params_")
        return float(self.params_[-1]) if self.params_.size % 3 else 0.0

    def predict(self, X):
        check_is_fitted(self, "params_")
        return lorentzian_sum(check_xy(X), self.peaks_.ravel()) + self.baseline_


class DecayRegressor(_LMRegressor):
    """Fit ``A1 e^{-t/tau1} + A2 e^{-t/tau2} + b`` with optional Gaussian IRF.

    Parameters
    ----------
    init : array_like
        Start ``[A1, tau1, A2, tau2, baseline, t0]`` (ns, counts per bin).
    fixed : array_like of bool, optional
        Parameters held at their start values.
    irf_fwhm : float
        IRF width in ps; 0 fits the bare exponentials.
    window : (float, float), optional
        Only samples with ``window[0] <= t <= window[1]`` (ns) enter the fit.
    """

    def __init__(self, init=None, fixed=None, lower=None, upper=None, irf_fwhm=0.0,
                 window=None, weighting="poisson", max_iter=200, xtol=1e-8,
                 require_convergence=True):
        self.init = init
        self.fixed = fixed
        self.lower = lower
        self.upper = upper
        self.irf_fwhm = irf_fwhm
        self.window = window
        self.weighting = weighting
        self.max_iter = max_iter
        self.xtol = xtol
        self.require_convergence = require_convergence

    @property
    def _irf_sigma(self):
        return self.irf_fwhm * 1e-3 * FWHM_TO_SIGMA

    def fit(self, X, y, sigma=None):
        t, y = check_xy(X, y)
        if self.init is None:
            raise ValueError("init is required")
        sigma = self._sigma(y, sigma)
        if self.window is not None:
            keep = (t >= self.window[0]) & (t <= self.window[1])
            t, y, sigma = t[keep], y[keep], sigma[keep]
        s = self._irf_sigma
        lo = [0, 1e-6, 0, 1e-6, 0, -np.inf] if self.lower is None else self.lower
        hi = [np.inf] * 6 if self.upper is None else self.upper
        problem = FitProblem(lambda tt, p: decay_curve(tt, p, s),
                             lambda tt, p: decay_jacobian(tt, p, s),
                             t, y, self.init, sigma, lo, hi, self.fixed)
        return self._solve(problem)

    def predict(self, X):
        check_is_fitted(self, "params_")
        return decay_curve(check_xy(X), self.params_, self._irf_sigma)
