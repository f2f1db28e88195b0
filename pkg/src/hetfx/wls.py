"""Weighted least squares with fixed effects and sandwich variance estimators.

The solver supports two interchangeable fixed-effect paths: explicit dummy
expansion (drop-first) and weighted within-demeaning (absorption). By the
Frisch-Waugh-Lovell theorem both yield identical non-strata coefficients,
residuals, and sandwich covariances for the retained block, provided the
degrees-of-freedom scalars count absorbed levels as estimated parameters.

Finite-sample scalars, applied to the meat:
    HC1: N / (N - K)
    CR1: G / (G - 1) * (N - 1) / (N - K)
with K the total parameter count including absorbed fixed-effect levels.
Inference uses the normal reference distribution throughout.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg as sla
from scipy import stats

from .errors import RankDeficiencyError

ABSORB_THRESHOLD = 50
RANK_RTOL = 1e-10


@dataclass
class DesignSpec:
    """Regressor matrix plus everything needed to fit and do inference.

    ``X`` holds the named, non-intercept regressors; the intercept and strata
    fixed effects are added by the solver. Weights default to 1.
    """

    X: np.ndarray
    names: list[str]
    add_intercept: bool = True
    strata: np.ndarray | None = None
    weights: np.ndarray | None = None
    variance: str = "HC1"  # or "CR1"
    cluster_ids: np.ndarray | None = None
    alpha: float = 0.05
    fe_mode: str = "auto"  # auto | dummies | absorb

    def __post_init__(self):
        self.X = np.atleast_2d(np.asarray(self.X, dtype=float))
        if self.X.shape[1] != len(self.names):
            raise ValueError("names must match X columns")
        if self.weights is not None:
            self.weights = np.asarray(self.weights, dtype=float)
            if np.any(self.weights <= 0):
                raise ValueError("weights must be strictly positive")
        if self.variance not in ("HC1", "CR1"):
            raise ValueError(f"unknown variance estimator {self.variance!r}")
        if self.variance == "CR1" and self.cluster_ids is None:
            raise ValueError("CR1 requires cluster_ids")
        if self.fe_mode not in ("auto", "dummies", "absorb"):
            raise ValueError(f"unknown fe_mode {self.fe_mode!r}")


@dataclass
class WlsFit:
    """Fitted WLS regression with sandwich inference.

    ``params`` is aligned with ``names``; in absorb mode the intercept and
    strata effects are not part of the reported vector (they are recoverable
    from ``fe_effects``).
    """

    names: list[str]
    params: np.ndarray
    cov: np.ndarray
    se: np.ndarray
    tstat: np.ndarray
    pvalue: np.ndarray
    ci_lower: np.ndarray
    ci_upper: np.ndarray
    alpha: float
    residuals: np.ndarray
    fitted: np.ndarray
    r2: float
    adj_r2: float
    n_obs: int
    n_params: int  # includes intercept and (absorbed) fixed-effect levels
    variance: str
    n_clusters: int | None = None
    has_intercept: bool = True
    absorbed: bool = False
    fe_effects: dict = field(default_factory=dict)

    def coef(self, name: str) -> float:
        return float(self.params[self.names.index(name)])

    def row(self, name: str) -> dict:
        i = self.names.index(name)
        return {
            "estimate": float(self.params[i]),
            "se": float(self.se[i]),
            "t": float(self.tstat[i]),
            "p": float(self.pvalue[i]),
            "ci_lower": float(self.ci_lower[i]),
            "ci_upper": float(self.ci_upper[i]),
        }


def _check_rank(A: np.ndarray) -> None:
    # pivoted QR; relative tolerance on the diagonal of R
    _, r, _ = sla.qr(A, mode="economic", pivoting=True)
    d = np.abs(np.diag(r))
    if d.size == 0 or d[0] == 0.0 or d[-1] < RANK_RTOL * d[0]:
        raise RankDeficiencyError(
            f"design matrix is rank deficient ({A.shape[1]} columns)"
        )


def _strata_dummies(labels: np.ndarray) -> tuple[np.ndarray, list[str]]:
    levels, idx = np.unique(labels, return_inverse=True)
    D = np.zeros((len(labels), len(levels) - 1))
    for k in range(1, len(levels)):  # drop-first
        D[idx == k, k - 1] = 1.0
    names = [f"strata[{lv}]" for lv in levels[1:]]
    return D, names


def _weighted_group_demean(v: np.ndarray, idx: np.ndarray, w: np.ndarray,
                           n_groups: int) -> tuple[np.ndarray, np.ndarray]:
    wsum = np.bincount(idx, weights=w, minlength=n_groups)
    means = np.bincount(idx, weights=w * v, minlength=n_groups) / wsum
    return v - means[idx], means


def fit_wls(y: np.ndarray, design: DesignSpec) -> WlsFit:
    """Fit min_b sum_i w_i (y_i - x_i'b)^2 with the requested sandwich.

    Strata fixed effects with more than ``ABSORB_THRESHOLD`` levels are
    absorbed by weighted within-demeaning, otherwise expanded as drop-first
    dummies; ``design.fe_mode`` overrides.
    """
    y = np.asarray(y, dtype=float)
    n = len(y)
    w = design.weights if design.weights is not None else np.ones(n)
    X = design.X
    names = list(design.names)

    absorbed = False
    fe_effects: dict = {}
    has_intercept = design.add_intercept

    if design.strata is not None:
        levels, idx = np.unique(design.strata, return_inverse=True)
        s = len(levels)
        mode = design.fe_mode
        if mode == "auto":
            mode = "absorb" if s > ABSORB_THRESHOLD else "dummies"
        if mode == "absorb":
            Xd = np.empty_like(X)
            for j in range(X.shape[1]):
                Xd[:, j], _ = _weighted_group_demean(X[:, j], idx, w, s)
            yd, ymeans = _weighted_group_demean(y, idx, w, s)
            n_absorbed = s
            absorbed = True
            has_intercept = False  # absorbed into the fixed effects
            Xfit, yfit = Xd, yd
        else:
            D, dnames = _strata_dummies(design.strata)
            cols = [X, D]
            names = names + dnames
            if design.add_intercept:
                cols = [np.ones((n, 1))] + cols
                names = ["const"] + names
            Xfit, yfit = np.column_stack(cols), y
            n_absorbed = 0
    else:
        if design.add_intercept:
            Xfit = np.column_stack([np.ones((n, 1)), X])
            names = ["const"] + names
        else:
            Xfit = X
        yfit = y
        n_absorbed = 0

    k = Xfit.shape[1]
    n_params = k + n_absorbed
    if n <= n_params:
        raise ValueError(f"n_obs={n} must exceed parameter count {n_params}")
    _check_rank(np.sqrt(w)[:, None] * Xfit)

    XtW = Xfit.T * w
    XtWX = XtW @ Xfit
    beta = np.linalg.solve(XtWX, XtW @ yfit)
    bread = np.linalg.inv(XtWX)

    if absorbed:
        # recover group effects so fitted values live in original y units
        alpha_g = ymeans.copy()
        for j in range(X.shape[1]):
            _, xm = _weighted_group_demean(X[:, j], idx, w, s)
            alpha_g -= xm * beta[j]
        fitted = X @ beta + alpha_g[idx]
        fe_effects = {lv: float(a) for lv, a in zip(levels, alpha_g)}
    else:
        fitted = Xfit @ beta
    resid = y - fitted

    scores = Xfit * (w * resid)[:, None]
    n_clusters = None
    if design.variance == "CR1":
        glabels, gidx = np.unique(design.cluster_ids, return_inverse=True)
        G = len(glabels)
        if G < 2:
            raise ValueError("cluster-robust variance needs >= 2 clusters")
        gs = np.zeros((G, k))
        np.add.at(gs, gidx, scores)
        meat = gs.T @ gs
        scale = G / (G - 1) * (n - 1) / (n - n_params)
        n_clusters = G
    else:
        meat = scores.T @ scores
        scale = n / (n - n_params)
    cov = scale * bread @ meat @ bread

    se = np.sqrt(np.maximum(np.diag(cov), 0.0))
    tstat = np.zeros(k)
    nz = se > 0
    tstat[nz] = beta[nz] / se[nz]
    exact = ~nz & (beta != 0.0)  # zero variance, nonzero estimate
    tstat[exact] = np.sign(beta[exact]) * np.inf
    pvalue = 2.0 * stats.norm.sf(np.abs(tstat))
    z = stats.norm.ppf(1.0 - design.alpha / 2.0)
    ci_lower = beta - z * se
    ci_upper = beta + z * se

    wmean = np.sum(w * y) / np.sum(w)
    centered = has_intercept or absorbed or design.strata is not None
    tss = np.sum(w * (y - wmean) ** 2) if centered else np.sum(w * y**2)
    rss = np.sum(w * resid**2)
    r2 = 1.0 - rss / tss if tss > 0 else np.nan
    k_slopes = n_params - 1
    if centered and n - k_slopes - 1 > 0 and np.isfinite(r2):
        adj = 1.0 - (1.0 - r2) * (n - 1) / (n - k_slopes - 1)
    else:
        adj = np.nan

    return WlsFit(
        names=names,
        params=beta,
        cov=cov,
        se=se,
        tstat=tstat,
        pvalue=pvalue,
        ci_lower=ci_lower,
        ci_upper=ci_upper,
        alpha=design.alpha,
        residuals=resid,
        fitted=fitted,
        r2=float(r2),
        adj_r2=float(adj),
        n_obs=n,
        n_params=n_params,
        variance=design.variance,
        n_clusters=n_clusters,
        has_intercept=has_intercept,
        absorbed=absorbed,
        fe_effects=fe_effects,
    )


def linear_combination_test(fit: WlsFit, weights: np.ndarray) -> dict:
    """Inference on c'b using the fit's sandwich covariance."""
    c = np.asarray(weights, dtype=float)
    if c.shape != fit.params.shape:
        raise ValueError("contrast length must match coefficient count")
    est = float(c @ fit.params)
    se = float(np.sqrt(max(c @ fit.cov @ c, 0.0)))
    if se > 0:
        t = est / se
    else:  # zero-variance contrast: exact-fit convention
        t = 0.0 if est == 0.0 else np.sign(est) * np.inf
    p = float(2.0 * stats.norm.sf(abs(t)))
    z = stats.norm.ppf(1.0 - fit.alpha / 2.0)
    return {
        "estimate": est,
        "se": se,
        "t": t,
        "p": p,
        "ci_lower": est - z * se,
        "ci_upper": est + z * se,
    }


def adjusted_r_squared(fit: WlsFit) -> float:
    """1 - (1 - R^2)(n - 1)/(n - k - 1), k = non-intercept regressor count."""
    if not (fit.has_intercept or fit.absorbed):
        raise ValueError("adjusted R^2 requires an intercept")
    k = fit.n_params - 1
    if fit.n_obs <= k + 1:
        raise ValueError("adjusted R^2 undefined: n <= k + 1")
    return 1.0 - (1.0 - fit.r2) * (fit.n_obs - 1) / (fit.n_obs - k - 1)
