"""One split of the proxy pipeline: stratified half-split, per-arm learner
fits on the auxiliary half, proxy predictions on the main half, and
quantile group assignment.

The two proxies per main-sample row are the control-arm prediction
(baseline proxy, outcome units) and the treated-minus-control prediction
difference (effect proxy). Nothing from the main half ever enters a
learner fit; scaling is fit on the auxiliary half only.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .dataset import Dataset, ScalingMap
from .elastic_net import TuningPlan, fit_elastic_net, tune_elastic_net
from .errors import EstimationError, OverlapError
from .forest import fit_forest
from .seeding import derive_rng


@dataclass
class SplitAssignment:
    split_index: int
    seed: int
    main_idx: np.ndarray
    aux_idx: np.ndarray


@dataclass
class ProxyPair:
    """Per-main-row baseline and effect predictions, in outcome units."""

    baseline: np.ndarray
    effect: np.ndarray
    effect_mean: float
    learner: str
    split_index: int


@dataclass
class GroupAssignment:
    """Quantile groups of the effect proxy; label k increases with the proxy."""

    labels: np.ndarray  # values in 1..k_groups, aligned with main rows
    cuts: np.ndarray  # k_groups - 1 boundary values of the effect proxy
    k_groups: int


def make_split(d: Dataset, s: int, master_seed: int) -> SplitAssignment:
    """Half-split the rows, balanced within every stratum x arm cell.

    Cell leftovers (odd cells) alternate between main and auxiliary starting
    from main on even split indices, so per-stratum sizes and treated counts
    differ by at most one and no row is systematically excluded.
    """
    rng = derive_rng(master_seed, s, "split")
    strata = d.strata_id if d.strata_id is not None else np.zeros(d.n_obs, int)
    main, aux = [], []
    leftover = 0
    small_cells = 0
    for st in np.unique(strata):
        for arm in (0, 1):
            cell = np.flatnonzero((strata == st) & (d.treatment == arm))
            if len(cell) == 0:
                continue
            if len(cell) < 2:
                small_cells += 1
            perm = rng.permutation(cell)
            half = len(cell) // 2
            main.append(perm[:half])
            aux.append(perm[half: 2 * half])
            if len(cell) % 2 == 1:
                extra = perm[-1:]
                if (s + leftover) % 2 == 0:
                    main.append(extra)
                else:
                    aux.append(extra)
                leftover += 1
    if small_cells:
        warnings.warn(
            f"split {s}: {small_cells} stratum x arm cell(s) with a single "
            "row were assigned whole to one half"
        )
    return SplitAssignment(
        split_index=s,
        seed=master_seed,
        main_idx=np.sort(np.concatenate(main)),
        aux_idx=np.sort(np.concatenate(aux)),
    )


def build_proxies(d: Dataset, split: SplitAssignment, learner,
                  master_seed: int) -> ProxyPair:
    """Fit the learner per auxiliary arm and predict on the main half.

    When the learner opts into scaling, covariates and outcome are min-max
    scaled with ranges fit on the auxiliary half alone (main covariates are
    clamped into [0, 1]); predictions are mapped back to outcome units.
    """
    aux, mainr = split.aux_idx, split.main_idx
    d_aux_t = d.treatment[aux]
    if d_aux_t.sum() == 0 or d_aux_t.sum() == len(aux):
        raise OverlapError(
            f"split {split.split_index}: auxiliary sample has an empty arm"
        )

    Za, ya = d.covariates[aux], d.outcome[aux]
    Zm = d.covariates[mainr]
    if learner.scale_inputs:
        smap = ScalingMap.fit(Za, d.covariate_names, ya)
        Za = smap.transform_covariates(Za, d.covariate_names)
        ya = smap.transform_outcome(ya)
        Zm = smap.transform_covariates(Zm, d.covariate_names, clamp=True)
    else:
        smap = None

    preds = {}
    for arm in (0, 1):
        sel = d_aux_t == arm
        rng = derive_rng(master_seed, split.split_index, "learner",
                         learner.name, arm)
        try:
            model = learner.fit(Za[sel], ya[sel], rng, arm)
        except Exception as e:
            raise EstimationError(
                f"split {split.split_index}: {learner.name} failed on "
                f"arm {arm}: {e}"
            ) from e
        p = np.asarray(model.predict(Zm), float)
        preds[arm] = smap.invert_outcome(p) if smap is not None else p

    baseline = preds[0]
    effect = preds[1] - preds[0]
    if not (np.isfinite(baseline).all() and np.isfinite(effect).all()):
        raise EstimationError(
            f"split {split.split_index}: non-finite proxy predictions "
            f"from {learner.name}"
        )
    return ProxyPair(
        baseline=baseline,
        effect=effect,
        effect_mean=float(effect.mean()),
        learner=learner.name,
        split_index=split.split_index,
    )


def assign_groups(p: ProxyPair, k_groups: int = 4,
                  jitter_rng=None) -> GroupAssignment:
    """Rank rows by the effect proxy and cut into near-equal groups.

    A deterministic jitter of magnitude 1e-9 x range breaks ties without
    reordering distinct values; when the proxy is constant the jitter alone
    induces an (arbitrary but reproducible) ordering.
    """
    s = p.effect
    n = len(s)
    if n < k_groups:
        raise ValueError(f"need at least {k_groups} rows, got {n}")
    rng = (jitter_rng if isinstance(jitter_rng, np.random.Generator)
           else np.random.default_rng(jitter_rng))
    rng_span = float(s.max() - s.min())
    scale = 1e-9 * (rng_span if rng_span > 0 else 1.0)
    jittered = s + scale * rng.random(n)
    order = np.argsort(jittered, kind="stable")

    labels = np.empty(n, dtype=int)
    base, rem = divmod(n, k_groups)
    sizes = [base + 1 if k < rem else base for k in range(k_groups)]
    cuts = []
    pos = 0
    s_ord = s[order]
    for k, size in enumerate(sizes):
        labels[order[pos: pos + size]] = k + 1
        pos += size
        if k < k_groups - 1:
            cuts.append(0.5 * (s_ord[pos - 1] + s_ord[pos]))
    return GroupAssignment(labels=labels, cuts=np.array(cuts),
                           k_groups=k_groups)


# ---------------------------------------------------------------------------
# built-in learners


@dataclass
class ElasticNetLearner:
    """Penalized linear learner with randomized cross-validated tuning.

    With ``penalties`` set, tuning is skipped and the pair is used directly.
    """

    grid_size: int = 20
    k_folds: int = 2
    repeats: int = 2
    lambda_min: float = 1e-4
    lambda_max: float = 10.0
    penalties: tuple[float, float] | None = None
    debias: bool = True
    name: str = field(default="elastic-net")
    scale_inputs: bool = field(default=True)

    def fit(self, X, y, rng, arm):
        if self.penalties is not None:
            l1, l2 = self.penalties
            return fit_elastic_net(X, y, l1, l2, debias=self.debias)
        plan = TuningPlan(
            k_folds=self.k_folds, repeats=self.repeats,
            grid_size=self.grid_size, lambda_min=self.lambda_min,
            lambda_max=self.lambda_max,
            seed=int(rng.integers(0, 2**31 - 1)),
        )
        _, _, model = tune_elastic_net(X, y, plan, debias=self.debias)
        return model


@dataclass
class RandomForestLearner:
    """Bagged regression trees; ``mtry=None`` means max(1, p // 3)."""

    n_trees: int = 1000
    mtry: int | None = None
    min_leaf: int = 5
    max_depth: int | None = None
    bootstrap: bool = True
    name: str = field(default="random-forest")
    scale_inputs: bool = field(default=True)

    def fit(self, X, y, rng, arm):
        return fit_forest(
            X, y, n_trees=self.n_trees, mtry=self.mtry,
            min_leaf=self.min_leaf, max_depth=self.max_depth,
            bootstrap=self.bootstrap, seed=int(rng.integers(0, 2**31 - 1)),
        )
