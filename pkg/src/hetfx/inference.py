"""Orchestrate repeated sample splits and aggregate their estimates.

Every estimate inherits randomness from the half-split, so each is computed
on many splits and summarized by medians: the point estimate and the two
confidence bounds are componentwise medians, and the reported p-value is
twice the median split p-value, clipped at 1. Per-split intervals are built
at level 1-alpha and the aggregated band is reported at the uniform level
1-2*alpha.

Splits run as independent tasks (serially or in a process pool); results
are reduced in split order, so output is identical at any parallelism.
"""

from __future__ import annotations

import concurrent.futures as cf
import pickle
import warnings
from dataclasses import dataclass, field

import numpy as np

from .config import AnalysisConfig, build_learners
from .dataset import Dataset, estimate_propensity
from .errors import EstimationError
from .features import estimate_blp, estimate_clan, estimate_gates, hh_vs_agg_r2
from .proxies import assign_groups, build_proxies, make_split
from .seeding import derive_rng


def lambda_blp(het_loading: float | None, effect_values: np.ndarray) -> float:
    """Proxy-quality score for the linear feature: loading^2 x Var(proxy).

    Uses the population-style variance (divisor n); a degenerate loading
    scores 0. Ordinal use only.
    """
    if het_loading is None or not np.isfinite(het_loading):
        return 0.0
    return float(het_loading**2 * np.var(np.asarray(effect_values, float)))


def lambda_gates(group_effects) -> float:
    """Proxy-quality score for the grouped feature: mean squared effect."""
    g = np.asarray(group_effects, float)
    return float(np.mean(g**2))


def select_learner(scores: dict[str, float]) -> str | None:
    """Learner with the strictly largest score; exact tie means no winner."""
    if len(scores) < 2:
        raise ValueError("selection needs at least two learners")
    best = max(scores.values())
    winners = [nm for nm, v in scores.items() if v == best]
    return winners[0] if len(winners) == 1 else None


@dataclass
class AggregatedEstimate:
    """Median point, median bounds, doubled-median p across splits."""

    point: float
    lower: float
    upper: float
    p_adj: float
    alpha: float
    n_splits: int

    @property
    def level_uniform(self) -> float:
        return 1.0 - 2.0 * self.alpha


def aggregate_splits(values, alpha: float = 0.05) -> AggregatedEstimate:
    """values: iterable of (point, lower, upper, p) tuples, one per split."""
    arr = np.asarray(list(values), dtype=float)
    if arr.size == 0:
        raise ValueError("nothing to aggregate")
    point, lower, upper, p = (np.median(arr[:, j]) for j in range(4))
    return AggregatedEstimate(
        point=float(point), lower=float(lower), upper=float(upper),
        p_adj=float(min(1.0, 2.0 * p)), alpha=alpha, n_splits=arr.shape[0],
    )


@dataclass
class SplitResult:
    split_index: int
    learner: str
    blp: object
    gates: object
    clan: object | None
    lambda_blp: float
    lambda_gates: float
    r2_split: object | None = None  # household vs aggregate decomposition


@dataclass
class ClanAggregate:
    covariate: str
    median_abs_corr: float
    most: AggregatedEstimate
    least: AggregatedEstimate
    diff: AggregatedEstimate


@dataclass
class LearnerAggregate:
    learner: str
    ate: AggregatedEstimate
    het: AggregatedEstimate | None
    n_het_degenerate: int
    gates: list[AggregatedEstimate]
    gates_contrast: AggregatedEstimate
    lambda_blp: float
    lambda_gates: float
    heterogeneity_detected: bool
    clan: list[ClanAggregate] | None
    n_failed: int
    failures: list = field(default_factory=list)
    hh_vs_agg: tuple[float, float, float] | None = None  # (agg, hh, all) medians


@dataclass
class AnalysisResult:
    outcome: str
    learners: dict[str, LearnerAggregate]
    selection: dict[str, str | None] | None  # per criterion, None on tie
    n_splits: int
    alpha: float


# worker context for process pools; populated once per worker via the
# initializer so the dataset is not re-pickled for every task
_CTX: dict = {}


def _init_worker(d, config, learners, propensity, clan_covariates):
    _CTX.update(d=d, config=config, learners=learners,
                propensity=propensity, clan_covariates=clan_covariates)


def _run_split(s: int):
    d = _CTX["d"]
    cfg = _CTX["config"]
    propensity = _CTX["propensity"]
    clan_covariates = _CTX["clan_covariates"]
    split = make_split(d, s, cfg.master_seed)
    d_main = d.take(split.main_idx)
    results, errors = {}, {}
    for lr in _CTX["learners"]:
        try:
            proxies = build_proxies(d, split, lr, cfg.master_seed)
            groups = assign_groups(
                proxies, cfg.k_groups,
                derive_rng(cfg.master_seed, s, "jitter", lr.name),
            )
            blp = estimate_blp(d_main, proxies, propensity,
                               cfg.variance, cfg.alpha)
            gates = estimate_gates(d_main, proxies, groups, propensity,
                                   cfg.variance, cfg.alpha)
            clan = None
            if clan_covariates is not None:
                clan = estimate_clan(d_main, proxies, groups,
                                     covariates=clan_covariates,
                                     variance=cfg.variance, alpha=cfg.alpha)
            r2_split = None
            if cfg.aggregate_covariates:
                household = [nm for nm in d.covariate_names
                             if nm not in cfg.aggregate_covariates]
                try:
                    r2_split = hh_vs_agg_r2(d_main, groups, household,
                                            list(cfg.aggregate_covariates))
                except Exception:
                    r2_split = None  # too few rows or fully collinear
            results[lr.name] = SplitResult(
                split_index=s,
                learner=lr.name,
                blp=blp,
                gates=gates,
                clan=clan,
                lambda_blp=lambda_blp(
                    None if blp.het is None else blp.het["estimate"],
                    proxies.effect,
                ),
                lambda_gates=lambda_gates([g["estimate"] for g in gates.groups]),
                r2_split=r2_split,
            )
        except Exception as e:  # recorded and judged against the threshold
            errors[lr.name] = f"{type(e).__name__}: {e}"
    return s, results, errors


def _row(d: dict) -> tuple:
    return (d["estimate"], d["ci_lower"], d["ci_upper"], d["p"])


def _aggregate_learner(name: str, splits: list[SplitResult],
                       failures: list, cfg: AnalysisConfig) -> LearnerAggregate:
    a = cfg.alpha
    ate = aggregate_splits([_row(r.blp.ate) for r in splits], a)
    het_rows = [_row(r.blp.het) for r in splits if r.blp.het is not None]
    n_degen = sum(1 for r in splits if r.blp.het is None)
    het = aggregate_splits(het_rows, a) if het_rows else None

    k = cfg.k_groups
    gates = [aggregate_splits([_row(r.gates.groups[i]) for r in splits], a)
             for i in range(k)]
    contrast = aggregate_splits([_row(r.gates.contrast) for r in splits], a)

    lam = float(np.median([r.lambda_blp for r in splits]))
    lam_g = float(np.median([r.lambda_gates for r in splits]))

    detected = bool(
        (het is not None and het.p_adj <= 2 * a)
        or contrast.p_adj <= 2 * a
    )

    clan = None
    if splits[0].clan is not None:
        by_cov: dict[str, list] = {}
        for r in splits:
            for row in r.clan.rows:
                by_cov.setdefault(row.covariate, []).append(row)
        med_corr = {nm: float(np.median([abs(x.correlation) for x in rows]))
                    for nm, rows in by_cov.items()}
        top = sorted(med_corr, key=lambda nm: (-med_corr[nm], nm))
        clan = [
            ClanAggregate(
                covariate=nm,
                median_abs_corr=med_corr[nm],
                most=aggregate_splits([_row(x.most) for x in by_cov[nm]], a),
                least=aggregate_splits([_row(x.least) for x in by_cov[nm]], a),
                diff=aggregate_splits([_row(x.diff) for x in by_cov[nm]], a),
            )
            for nm in top[: cfg.clan_top_k]
        ]

    r2s = [r.r2_split for r in splits if r.r2_split is not None]
    hh_vs_agg = None
    if r2s:
        hh_vs_agg = (
            float(np.median([x.aggregate for x in r2s])),
            float(np.median([x.household for x in r2s])),
            float(np.median([x.all_covariates for x in r2s])),
        )

    return LearnerAggregate(
        learner=name, ate=ate, het=het, n_het_degenerate=n_degen,
        gates=gates, gates_contrast=contrast,
        lambda_blp=lam, lambda_gates=lam_g,
        heterogeneity_detected=detected, clan=clan,
        n_failed=len(failures), failures=failures,
        hh_vs_agg=hh_vs_agg,
    )


def run_analysis(d: Dataset, config: AnalysisConfig,
                 learners: list | None = None) -> AnalysisResult:
    """Run the full split pipeline and aggregate per learner.

    ``learners`` overrides the config-built learners (used with stubs in
    tests). Deterministic given ``config.master_seed``; a learner whose
    failed-split share exceeds ``config.max_failure_rate`` aborts the run.
    """
    config.validate()
    d.assert_prepared()
    if learners is None:
        learners = build_learners(config)
    if not learners:
        raise ValueError("need at least one learner")
    propensity = estimate_propensity(d, config.propensity_mode)
    clan_covariates = None
    if config.clan != "off":
        clan_covariates = [nm for nm in d.covariate_names
                           if nm not in d.missing_indicators]

    S = config.n_splits
    init_args = (d, config, learners, propensity, clan_covariates)
    workers = min(config.effective_parallelism(), S)
    if workers > 1:
        try:
            pickle.dumps(learners)
        except Exception:
            warnings.warn("learners are not picklable; running splits "
                          "serially (results are identical either way)")
            workers = 1
    if workers > 1:
        with cf.ProcessPoolExecutor(
            max_workers=workers,
            initializer=_init_worker, initargs=init_args,
        ) as ex:
            raw = list(ex.map(_run_split, range(S)))
    else:
        _init_worker(*init_args)
        raw = [_run_split(s) for s in range(S)]
    raw.sort(key=lambda t: t[0])

    per_learner: dict[str, list[SplitResult]] = {lr.name: [] for lr in learners}
    fails: dict[str, list] = {lr.name: [] for lr in learners}
    for s, results, errors in raw:
        for nm, res in results.items():
            per_learner[nm].append(res)
        for nm, msg in errors.items():
            fails[nm].append((s, msg))

    for nm in per_learner:
        if len(fails[nm]) > config.max_failure_rate * S:
            raise EstimationError(
                f"{nm}: {len(fails[nm])} of {S} splits failed "
                f"(threshold {config.max_failure_rate:.0%}); "
                f"first: {fails[nm][0]}"
            )
        if not per_learner[nm]:
            raise EstimationError(f"{nm}: no split succeeded")

    aggregates = {
        nm: _aggregate_learner(nm, per_learner[nm], fails[nm], config)
        for nm in per_learner
    }
    selection = None
    if len(aggregates) >= 2:
        selection = {
            "blp": select_learner(
                {nm: a.lambda_blp for nm, a in aggregates.items()}),
            "gates": select_learner(
                {nm: a.lambda_gates for nm, a in aggregates.items()}),
        }
    return AnalysisResult(
        outcome=d.outcome_name, learners=aggregates, selection=selection,
        n_splits=S, alpha=config.alpha,
    )
