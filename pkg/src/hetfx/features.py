"""Per-split estimation of the treatment-effect features.

All regressions run on the main half of a split. The average effect and the
heterogeneity loading come from one weighted regression of the outcome on
the centered treatment indicator and its interaction with the centered
effect proxy, with the proxies themselves (and strata fixed effects) as
precision nuisances; the weights are the inverse variance of the treatment
indicator. Group average effects replace the interaction with one centered
treatment term per proxy-quantile group. Classification rows are plain
two-dummy regressions whose coefficients equal subgroup means.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import linalg as sla

from .dataset import Dataset, PropensityModel
from .errors import EstimationError
from .proxies import GroupAssignment, ProxyPair
from .wls import DesignSpec, WlsFit, fit_wls, linear_combination_test

DEGENERATE_VAR = 1e-12


@dataclass
class BlpEstimate:
    """Average effect and heterogeneity loading for one split."""

    ate: dict  # estimate / se / t / p / ci_lower / ci_upper
    het: dict | None  # None when the effect proxy is (near) constant
    nuisance: dict
    degenerate: bool
    n_obs: int


@dataclass
class GatesEstimate:
    groups: list[dict]  # one row per group, ascending
    contrast: dict  # most minus least affected group
    n_obs: int


@dataclass
class ClanRow:
    covariate: str
    correlation: float  # corr(covariate, effect proxy) on the main half
    most: dict  # mean among the most affected (top group)
    least: dict  # mean among the least affected (bottom group)
    diff: dict


@dataclass
class ClanEstimate:
    rows: list[ClanRow]


def _full_rank(M: np.ndarray, tol: float = 1e-10) -> bool:
    _, r, _ = sla.qr(M, mode="economic", pivoting=True)
    d = np.abs(np.diag(r))
    return d.size > 0 and d[0] > 0 and d[-1] >= tol * d[0]


def _nuisance_columns(d_main: Dataset, proxies: ProxyPair):
    """Proxy nuisance columns that actually extend the regressor span.

    Shrunk learners routinely emit proxies that are constant or exact
    linear combinations of each other (e.g. all slopes at zero in one arm);
    such columns are precision nuisances only, so redundant ones are
    dropped rather than letting the fit go rank deficient.
    """
    base = [np.ones(d_main.n_obs)]
    if d_main.strata_id is not None:
        for lv in np.unique(d_main.strata_id)[1:]:
            base.append((d_main.strata_id == lv).astype(float))
    cols, names = [], []
    for nm, v in (("baseline_proxy", proxies.baseline),
                  ("effect_proxy", proxies.effect)):
        if np.var(v) < DEGENERATE_VAR:
            continue
        if _full_rank(np.column_stack(base + cols + [v])):
            cols.append(v)
            names.append(nm)
    return cols, names


def estimate_blp(d_main: Dataset, proxies: ProxyPair,
                 propensity: PropensityModel, variance: str = "HC1",
                 alpha: float = 0.05) -> BlpEstimate:
    """Weighted regression yielding the average effect and the loading on
    the centered effect proxy.

    A constant effect proxy cannot identify the loading; the interaction is
    dropped and the estimate flagged degenerate, while the average effect is
    still reported.
    """
    p = propensity.prob(d_main)
    w = propensity.weights(d_main)
    treat_c = d_main.treatment - p
    degenerate = bool(np.var(proxies.effect) < DEGENERATE_VAR)

    cols, names = _nuisance_columns(d_main, proxies)
    cols.append(treat_c)
    names.append("treatment_centered")
    if not degenerate:
        cols.append(treat_c * (proxies.effect - proxies.effect_mean))
        names.append("treat_x_effect")

    fit = fit_wls(d_main.outcome, DesignSpec(
        X=np.column_stack(cols), names=names, strata=d_main.strata_id,
        weights=w, variance=variance, cluster_ids=d_main.cluster_id,
        alpha=alpha,
    ))
    nuis = {nm: fit.coef(nm) for nm in ("baseline_proxy", "effect_proxy")
            if nm in fit.names}
    if fit.has_intercept:
        nuis["const"] = fit.coef("const")
    return BlpEstimate(
        ate=fit.row("treatment_centered"),
        het=None if degenerate else fit.row("treat_x_effect"),
        nuisance=nuis,
        degenerate=degenerate,
        n_obs=fit.n_obs,
    )


def estimate_gates(d_main: Dataset, proxies: ProxyPair,
                   groups: GroupAssignment, propensity: PropensityModel,
                   variance: str = "HC1", alpha: float = 0.05) -> GatesEstimate:
    """Weighted regression with one centered-treatment term per proxy group."""
    p = propensity.prob(d_main)
    w = propensity.weights(d_main)
    treat_c = d_main.treatment - p

    cols, names = _nuisance_columns(d_main, proxies)
    for k in range(1, groups.k_groups + 1):
        ind = (groups.labels == k).astype(float)
        if ind.sum() == 0:
            raise EstimationError(f"group {k} is empty")
        cols.append(treat_c * ind)
        names.append(f"group_effect[{k}]")

    fit = fit_wls(d_main.outcome, DesignSpec(
        X=np.column_stack(cols), names=names, strata=d_main.strata_id,
        weights=w, variance=variance, cluster_ids=d_main.cluster_id,
        alpha=alpha,
    ))
    rows = [fit.row(f"group_effect[{k}]") for k in range(1, groups.k_groups + 1)]
    c = np.zeros(len(fit.params))
    c[fit.names.index(f"group_effect[{groups.k_groups}]")] = 1.0
    c[fit.names.index("group_effect[1]")] = -1.0
    return GatesEstimate(groups=rows, contrast=linear_combination_test(fit, c),
                         n_obs=fit.n_obs)


def clan_correlations(d_main: Dataset, proxies: ProxyPair) -> dict[str, float]:
    """|corr| ranking inputs: corr of each covariate with the effect proxy.

    Missingness-indicator columns are excluded; a zero-variance covariate
    gets correlation 0 so it is never selected.
    """
    s = proxies.effect
    s_sd = s.std()
    out = {}
    for j, nm in enumerate(d_main.covariate_names):
        if nm in d_main.missing_indicators:
            continue
        z = d_main.covariates[:, j]
        z_sd = z.std()
        if z_sd < 1e-15 or s_sd < 1e-15:
            out[nm] = 0.0
        else:
            out[nm] = float(np.mean((z - z.mean()) * (s - s.mean())) / (z_sd * s_sd))
    return out


def select_clan_covariates(correlations: dict[str, float], k: int = 5) -> list[str]:
    """Top-k covariates by |corr|, ties broken by name order."""
    ranked = sorted(correlations, key=lambda nm: (-abs(correlations[nm]), nm))
    return ranked[:k]


def estimate_clan(d_main: Dataset, proxies: ProxyPair, groups: GroupAssignment,
                  covariates: list[str] | None = None, top_k: int = 5,
                  variance: str = "HC1", alpha: float = 0.05) -> ClanEstimate:
    """Subgroup means of covariates for the most and least affected groups.

    Each covariate is regressed, without intercept and over the union of the
    top and bottom groups only, on the two group dummies; the coefficients
    are exactly the subgroup means. ``covariates=None`` applies the top-k
    |corr| selection rule.
    """
    corr = clan_correlations(d_main, proxies)
    if covariates is None:
        covariates = select_clan_covariates(corr, top_k)
    lo, hi = 1, groups.k_groups
    sel = (groups.labels == lo) | (groups.labels == hi)
    d_lo = (groups.labels[sel] == lo).astype(float)
    d_hi = (groups.labels[sel] == hi).astype(float)
    clusters = None if d_main.cluster_id is None else d_main.cluster_id[sel]

    rows = []
    for nm in covariates:
        z = d_main.column(nm)[sel]
        fit = fit_wls(z, DesignSpec(
            X=np.column_stack([d_lo, d_hi]),
            names=["least_affected", "most_affected"],
            add_intercept=False, variance=variance, cluster_ids=clusters,
            alpha=alpha,
        ))
        c = np.zeros(len(fit.params))
        c[fit.names.index("most_affected")] = 1.0
        c[fit.names.index("least_affected")] = -1.0
        rows.append(ClanRow(
            covariate=nm,
            correlation=corr.get(nm, np.nan),
            most=fit.row("most_affected"),
            least=fit.row("least_affected"),
            diff=linear_combination_test(fit, c),
        ))
    return ClanEstimate(rows=rows)


def baseline_interaction_model(d: Dataset, covariate: str,
                               variance: str = "HC1",
                               alpha: float = 0.05) -> WlsFit:
    """Single-covariate comparison model: y on (1, d, x, d*x), robust SEs."""
    x = d.column(covariate)
    if np.var(x) < DEGENERATE_VAR:
        raise EstimationError(
            f"covariate {covariate!r} is constant; the interaction slope "
            "is undefined"
        )
    t = d.treatment.astype(float)
    return fit_wls(d.outcome, DesignSpec(
        X=np.column_stack([t, x, t * x]),
        names=["treatment", covariate, f"treatment_x_{covariate}"],
        variance=variance, cluster_ids=d.cluster_id, alpha=alpha,
    ))


@dataclass
class RSquaredSplit:
    aggregate: float
    household: float
    all_covariates: float


def _independent_columns(M: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    if M.shape[1] == 0:
        return np.array([], dtype=int)
    _, r, piv = sla.qr(M, mode="economic", pivoting=True)
    d = np.abs(np.diag(r))
    rank = int(np.sum(d > tol * d[0])) if d[0] > 0 else 0
    return np.sort(piv[:rank])


def _adj_r2_membership(y: np.ndarray, blocks: list[np.ndarray]) -> float:
    n = len(y)
    M = np.column_stack([np.ones(n)] + blocks)
    keep = _independent_columns(M)
    if 0 not in keep:  # never drop the intercept
        keep = np.concatenate([[0], keep[keep != 0]])
    if len(keep) < M.shape[1]:
        warnings.warn(f"dropped {M.shape[1] - len(keep)} collinear columns")
    M = M[:, keep]
    k = M.shape[1] - 1
    if n <= k + 1:
        raise EstimationError("too few rows for adjusted R^2")
    beta, *_ = np.linalg.lstsq(M, y, rcond=None)
    resid = y - M @ beta
    tss = np.sum((y - y.mean()) ** 2)
    r2 = 1.0 - resid @ resid / tss if tss > 0 else np.nan
    return float(1.0 - (1.0 - r2) * (n - 1) / (n - k - 1))


def hh_vs_agg_r2(d_main: Dataset, groups: GroupAssignment,
                 household: list[str], aggregate: list[str]) -> RSquaredSplit:
    """Adjusted R^2 of most-affected membership on three covariate sets.

    Restricted to the union of the top and bottom groups; the outcome is the
    top-group dummy. The aggregate design is strata dummies plus the columns
    tagged aggregate; collinear columns are dropped with a warning.
    """
    overlap = set(household) & set(aggregate)
    if overlap:
        raise ValueError(f"covariate sets overlap: {sorted(overlap)}")
    lo, hi = 1, groups.k_groups
    sel = (groups.labels == lo) | (groups.labels == hi)
    y = (groups.labels[sel] == hi).astype(float)

    def cols(names):
        if not names:
            return np.empty((int(sel.sum()), 0))
        return np.column_stack([d_main.column(nm)[sel] for nm in names])

    strata_block = []
    if d_main.strata_id is not None:
        lab = d_main.strata_id[sel]
        levels = np.unique(lab)
        strata_block = [np.column_stack(
            [(lab == lv).astype(float) for lv in levels[1:]]
        )] if len(levels) > 1 else []

    agg_blocks = strata_block + [cols(aggregate)]
    return RSquaredSplit(
        aggregate=_adj_r2_membership(y, agg_blocks),
        household=_adj_r2_membership(y, [cols(household)]),
        all_covariates=_adj_r2_membership(y, agg_blocks + [cols(household)]),
    )


def orthogonality_diagnostics(d_main: Dataset, proxies: ProxyPair,
                              propensity: PropensityModel) -> dict[str, float]:
    """Weighted alignment of the centered treatment with the nuisance columns.

    Returns the weighted mean of (d - p) and its weighted covariance with
    each proxy column and stratum indicator; on a design where every
    covariate row appears once per arm these are zero to float precision.
    """
    p = propensity.prob(d_main)
    w = propensity.weights(d_main)
    tc = d_main.treatment - p
    wsum = w.sum()

    def wcov(col):
        cbar = np.sum(w * col) / wsum
        return float(np.sum(w * tc * (col - cbar)) / wsum)

    out = {"const": float(np.sum(w * tc) / wsum)}
    out["baseline_proxy"] = wcov(proxies.baseline)
    out["effect_proxy"] = wcov(proxies.effect)
    if d_main.strata_id is not None:
        for lv in np.unique(d_main.strata_id):
            out[f"strata[{lv}]"] = wcov((d_main.strata_id == lv).astype(float))
    return out
