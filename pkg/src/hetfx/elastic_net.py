"""Penalized least squares via cyclic coordinate descent.

The objective is used exactly as stated, with no 1/(2n) normalization:

    L(l1, l2, theta) = ||y - a - X theta||^2 + l2 ||theta||^2 + l1 ||theta||_1

with an unpenalized intercept ``a``. The coordinate update therefore
soft-thresholds at l1/2. When ``debias`` is set the returned slopes are the
argmin rescaled by (1 + l2); the raw argmin is kept alongside.

Covariates are assumed pre-scaled to [0, 1] upstream; no internal
standardization is applied, so penalty magnitudes are directly comparable
across fits.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceWarning

TOL = 1e-7
MAX_SWEEPS = 10_000


@dataclass
class ElasticNetModel:
    coef: np.ndarray  # reported slopes (debiased when requested)
    raw_coef: np.ndarray  # coordinate-descent fixed point
    intercept: float
    lam1: float
    lam2: float
    debias: bool
    n_sweeps: int
    max_delta: float  # final max absolute coordinate update
    converged: bool

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.intercept + np.asarray(X, float) @ self.coef


def objective_value(X, y, intercept, coef, lam1, lam2) -> float:
    """The penalized criterion evaluated at (intercept, coef)."""
    r = np.asarray(y, float) - intercept - np.asarray(X, float) @ coef
    return float(r @ r + lam2 * coef @ coef + lam1 * np.abs(coef).sum())


def _cd_solve(G, b, diag, lam1, lam2, tol, max_sweeps):
    """Cyclic coordinate descent on the centered problem, active-set style."""
    p = len(b)
    theta = np.zeros(p)
    Gt = np.zeros(p)  # G @ theta, updated incrementally
    half = 0.5 * lam1
    denom = diag + lam2
    sweeps = 0
    dmax = np.inf

    def sweep(idx):
        delta_max = 0.0
        for j in idx:
            g = b[j] - Gt[j] + diag[j] * theta[j]
            if g > half:
                t = (g - half) / denom[j]
            elif g < -half:
                t = (g + half) / denom[j]
            else:
                t = 0.0
            d = t - theta[j]
            if d != 0.0:
                theta[j] = t
                Gt[:] += G[:, j] * d
                ad = abs(d)
                if ad > delta_max:
                    delta_max = ad
        return delta_max

    full = range(p)
    while sweeps < max_sweeps:
        dmax = sweep(full)
        sweeps += 1
        if dmax < tol:
            break
        active = np.flatnonzero(theta)
        while sweeps < max_sweeps:
            dmax = sweep(active)
            sweeps += 1
            if dmax < tol:
                break
        else:
            break
        # a full sweep re-checks coordinates shrunk to zero
    return theta, sweeps, dmax


def fit_elastic_net(X: np.ndarray, y: np.ndarray, lam1: float, lam2: float,
                    debias: bool = True, tol: float = TOL,
                    max_sweeps: int = MAX_SWEEPS) -> ElasticNetModel:
    """Minimize the penalized criterion; intercept never penalized."""
    X = np.atleast_2d(np.asarray(X, float))
    y = np.asarray(y, float)
    if not (np.isfinite(X).all() and np.isfinite(y).all()):
        raise ValueError("non-finite values in X or y")
    if lam1 < 0 or lam2 < 0:
        raise ValueError("penalties must be non-negative")
    if X.shape[0] != len(y):
        raise ValueError("X and y must be row-aligned")

    xm = X.mean(axis=0)
    ym = float(y.mean())
    Xc = X - xm
    G = Xc.T @ Xc
    b = Xc.T @ (y - ym)
    diag = np.diag(G).copy()
    # constant columns have zero curvature; pin their coefficients at zero
    dead = diag + lam2 <= 0.0
    if dead.any():
        diag = np.where(dead, 1.0, diag)
        b = np.where(dead, 0.0, b)

    theta, sweeps, dmax = _cd_solve(G, b, diag, lam1, lam2, tol, max_sweeps)
    converged = dmax < tol
    if not converged:
        warnings.warn(
            f"coordinate descent stopped after {sweeps} sweeps "
            f"(last update {dmax:.2e} >= tol {tol:.0e})",
            ConvergenceWarning,
        )
    coef = theta * (1.0 + lam2) if debias else theta.copy()
    intercept = ym - float(xm @ coef)
    return ElasticNetModel(
        coef=coef, raw_coef=theta, intercept=intercept,
        lam1=lam1, lam2=lam2, debias=debias,
        n_sweeps=sweeps, max_delta=float(dmax), converged=converged,
    )


@dataclass
class TuningPlan:
    """Repeated k-fold cross-validation over a (l1, l2) candidate grid.

    With ``grid=None`` a random grid of ``grid_size`` pairs is drawn, each
    penalty log-uniform on [lambda_min, lambda_max].
    """

    k_folds: int = 2
    repeats: int = 2
    grid: list[tuple[float, float]] | None = None
    grid_size: int = 20
    lambda_min: float = 1e-4
    lambda_max: float = 10.0
    seed: int = 0

    def candidates(self, rng) -> list[tuple[float, float]]:
        if self.grid is not None:
            return [(float(a), float(b)) for a, b in self.grid]
        lo, hi = np.log(self.lambda_min), np.log(self.lambda_max)
        draw = np.exp(rng.uniform(lo, hi, size=(self.grid_size, 2)))
        return [(float(a), float(b)) for a, b in draw]


def tune_elastic_net(X: np.ndarray, y: np.ndarray, plan: TuningPlan,
                     debias: bool = True) -> tuple[float, float, ElasticNetModel]:
    """Pick the candidate with the lowest mean out-of-fold squared error.

    Deterministic given ``plan.seed``; the winner is refit on all rows.
    """
    X = np.atleast_2d(np.asarray(X, float))
    y = np.asarray(y, float)
    n = len(y)
    if n < 2 * plan.k_folds:
        raise ValueError(f"need n >= 2k = {2 * plan.k_folds}, got {n}")
    rng = np.random.default_rng(plan.seed)
    cands = plan.candidates(rng)

    folds = []
    for _ in range(plan.repeats):
        perm = rng.permutation(n)
        for part in np.array_split(perm, plan.k_folds):
            folds.append(part)

    scores = np.zeros((len(cands), len(folds)))
    for fi, test_idx in enumerate(folds):
        mask = np.ones(n, dtype=bool)
        mask[test_idx] = False
        ytr = y[mask]
        if np.all(ytr == ytr[0]):
            warnings.warn(f"fold {fi} has a constant training outcome; "
                          "candidate evaluations on it are skipped")
            scores[:, fi] = np.nan
            continue
        Xtr, Xte, yte = X[mask], X[test_idx], y[test_idx]
        for ci, (l1, l2) in enumerate(cands):
            m = fit_elastic_net(Xtr, ytr, l1, l2, debias=debias)
            r = yte - m.predict(Xte)
            scores[ci, fi] = float(r @ r) / len(test_idx)

    if np.isnan(scores).all():
        raise ValueError("every fold was degenerate (constant outcome)")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        mean_mse = np.nanmean(scores, axis=1)
    best = int(np.argmin(mean_mse))
    l1, l2 = cands[best]
    return l1, l2, fit_elastic_net(X, y, l1, l2, debias=debias)
