"""Bounded Levenberg-Marquardt fitting and the Lorentzian / decay model families."""

from .estimators import (DecayRegressor, FitConvergenceError, LorentzianSumRegressor,
                         check_xy, poisson_sigma)
from .lm import FitProblem, FitResult, lm_fit
from .models import (FWHM_TO_SIGMA, DecayModel, LorentzianPeak, decay_curve, decay_jacobian,
                     eval_decay, eval_lorentzian_sum, lorentzian_sum, lorentzian_sum_jacobian)

__all__ = [
    "DecayModel", "DecayRegressor", "FWHM_TO_SIGMA", "FitConvergenceError", "FitProblem",
    "FitResult", "LorentzianPeak", "LorentzianSumRegressor", "check_xy", "decay_curve",
    "decay_jacobian", "eval_decay", "eval_lorentzian_sum", "lm_fit", "lorentzian_sum",
    "lorentzian_sum_jacobian", "poisson_sigma",
]
