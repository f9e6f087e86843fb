"""Levenberg-Marquardt least squares with box bounds and fixed parameters.

The damped normal equations use Marquardt's diagonal scaling.  Trial points
are projected onto the bounds; a step is accepted only if the weighted sum of
squares decreases, so chi-square is non-increasing over accepted iterations.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class FitProblem:
    """Weighted least-squares problem ``min sum(((y - f(x, p)) / sigma)^2)``.

    Parameters
    ----------
    model : callable
        ``model(x, p) -> y_model``.
    jacobian : callable
        ``jacobian(x, p) -> (len(x), len(p))`` array of ``d model / d p``.
    x, y, sigma : array_like
    p0, lower, upper : array_like
        Start point and bounds (``-inf``/``inf`` for none).
    fixed : array_like of bool, optional
        Parameters held at their start value.
    """

    model: callable
    jacobian: callable
    x: np.ndarray
    y: np.ndarray
    p0: np.ndarray
    sigma: np.ndarray | None = None
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None
    fixed: np.ndarray | None = None

    def __post_init__(self):
        self.x = np.asarray(self.x, float)
        self.y = np.asarray(self.y, float)
        self.p0 = np.asarray(self.p0, float).copy()
        n = self.p0.size
        self.sigma = np.ones_like(self.y) if self.sigma is None else np.asarray(self.sigma, float)
        self.lower = np.full(n, -np.inf) if self.lower is None else np.asarray(self.lower, float)
        self.upper = np.full(n, np.inf) if self.upper is None else np.asarray(self.upper, float)
        self.fixed = np.zeros(n, bool) if self.fixed is None else np.asarray(self.fixed, bool)
        if not (self.lower.size == self.upper.size == self.fixed.size == n):
            raise ValueError("bounds and fixed mask must match the parameter vector")
        if self.sigma.shape != self.y.shape:
            raise ValueError("sigma must match y")
        if not np.all(self.sigma > 0):
            raise ValueError("sigma must be positive")
        if not (np.all(np.isfinite(self.y)) and np.all(np.isfinite(self.x))):
            raise ValueError("data must be finite")
        if np.any(self.lower > self.upper):
            raise ValueError("lower bound exceeds upper bound")
        if np.any(self.p0 < self.lower) or np.any(self.p0 > self.upper):
            raise ValueError("initial parameters violate the bounds")
        if self.y.size < np.count_nonzero(~self.fixed):
            raise ValueError("fewer data points than free parameters")


@dataclass
class FitResult:
    params: np.ndarray
    covariance: np.ndarray
    chi2: float
    reduced_chi2: float
    converged: bool
    iterations: int
    message: str
    chi2_history: list = field(default_factory=list)

    @property
    def errors(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.covariance), 0.0, None))


def _chi2(problem, p):
    r = (problem.y - problem.model(problem.x, p)) / problem.sigma
    return r, float(r @ r)


def lm_fit(problem: FitProblem, max_iter: int = 200, xtol: float = 1e-8,
           lam0: float = 1e-3, lam_up: float = 10.0, lam_down: float = 10.0) -> FitResult:
    """Run Levenberg-Marquardt from ``problem.p0``.

    Converges when an iteration's relative parameter change falls below
    ``xtol``.  Singular normal equations or non-finite model values stop the
    fit with ``converged=False``.  The covariance is ``(J^T W J)^-1`` on the
    free parameters (absolute ``sigma``); fixed parameters get zero rows.
    """
    p = problem.p0.copy()
    free = ~problem.fixed
    r, chi2 = _chi2(problem, p)
    if not np.isfinite(chi2):
        return _result(problem, p, chi2, False, 0, "model is not finite at the start point", [chi2])
    history = [chi2]
    lam = 0.0  # first try a pure Gauss-Newton step
    converged = False
    message = "iteration limit reached"
    it = 0
    while it < max_iter:
        it += 1
        Jf = problem.jacobian(problem.x, p) / problem.sigma[:, None]
        move = _movable(problem, p, Jf.T @ r, Jf)
        if move is None:
            message = "singular normal equations: a free parameter has no effect on the model"
            break
        if not move.any():
            converged = True
            message = "all free parameters held at their bounds"
            break
        J = Jf[:, move]
        g = J.T @ r
        A = J.T @ J
        d = np.diag(A).copy()
        if not np.all(np.isfinite(A)):
            message = "singular normal equations: non-finite Jacobian"
            break
        accepted = small = False
        while True:
            try:
                step = np.linalg.solve(A + lam * np.diag(d), g)
            except np.linalg.LinAlgError:
                step = None
            if step is None or not np.all(np.isfinite(step)):
                message = "singular normal equations"
                break
            trial = p.copy()
            trial[move] = np.clip(p[move] + step, problem.lower[move], problem.upper[move])
            r_t, chi2_t = _chi2(problem, trial)
            dp = trial - p
            small = np.all(np.abs(dp) <= xtol * (np.abs(p) + xtol))
            if np.isfinite(chi2_t) and chi2_t <= chi2:
                accepted = True
                lam = lam / lam_down if lam > lam0 else 0.0
                p, r, chi2 = trial, r_t, chi2_t
                history.append(chi2)
                break
            if small:
                break
            lam = max(lam * lam_up, lam0)
            if lam > 1e16:
                break
        if message.startswith("singular"):
            break
        if small:
            converged = True
            message = "relative parameter change below tolerance"
            break
        if not accepted and lam > 1e16:
            message = "damping diverged without reducing chi-square"
            break
    return _result(problem, p, chi2, converged, it, message, history)


def _movable(problem, p, g, J):
    """Free parameters the next step may change, or None if the problem is singular.

    A parameter on a bound whose gradient points outward is held.  A
    parameter with no effect is held too when some parameter sits on a
    bound (e.g. a lifetime whose amplitude sits at zero); otherwise the
    normal equations are singular.
    """
    free = ~problem.fixed
    pinned = free & (((p <= problem.lower) & (g < 0)) | ((p >= problem.upper) & (g > 0)))
    at_bound = free & ((p <= problem.lower) | (p >= problem.upper))
    dead = free & ~pinned & ~np.any(J != 0, axis=0)
    if dead.any() and not at_bound.any():
        return None
    return free & ~pinned & ~dead


def _result(problem, p, chi2, converged, it, message, history):
    free = ~problem.fixed
    n_free = int(free.sum())
    cov = np.zeros((p.size, p.size))
    try:
        Jall = problem.jacobian(problem.x, p) / problem.sigma[:, None]
        dead = free & ~np.any(Jall != 0, axis=0)
        cov[dead, dead] = np.nan
        free = free & ~dead
        J = Jall[:, free]
        sub = np.linalg.inv(J.T @ J)
        sub = 0.5 * (sub + sub.T)
        cov[np.ix_(free, free)] = sub
    except np.linalg.LinAlgError:
        cov[np.ix_(free, free)] = np.nan
        if converged:
            converged = False
            message = "singular covariance at the solution"
    dof = max(problem.y.size - n_free, 1)
    return FitResult(p, cov, chi2, chi2 / dof, converged, it, message, history)
