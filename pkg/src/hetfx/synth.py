"""Synthetic trial generators, brute-force oracles, and stub learners.

Everything here exists to verify the estimation pipeline against ground
truth: the generators return the per-row true effect alongside the data,
the oracles recompute regressions and tree splits by literal enumeration,
and the stub learners replace the ML step with known functions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import Dataset

# quartile -> effect level for the "step4" CATE; the shuffled order makes the
# effect uncorrelated with the driving covariate's linear term, so linear
# learners cannot recover it while partition-based learners can
STEP4_LEVELS = (2.0, 4.0, 1.0, 3.0)


@dataclass
class DgpSpec:
    """Configuration of a synthetic randomized trial.

    Covariates are iid Uniform(0,1). Treatment is assigned by permutation
    (within strata when present) at rate ``propensity``, independently of the
    potential outcomes. Outcomes follow
    ``y = baseline(Z) + d * cate(Z) + cluster_effect + noise``.
    """

    n: int
    p: int
    propensity: float = 0.5
    baseline: str = "linear"  # linear | step | constant
    cate: str = "constant"  # constant | linear | step4
    cate_value: float = 0.0  # the constant effect
    cate_weights: tuple[float, ...] | None = None  # linear effect loadings
    noise_sd: float = 1.0
    noise: str = "gaussian"  # gaussian | student_t
    t_df: float = 3.0
    n_clusters: int = 0
    cluster_sd: float = 0.0
    n_strata: int = 0
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.propensity < 1.0:
            raise ValueError("propensity must be in (0, 1)")
        if self.baseline not in ("linear", "step", "constant"):
            raise ValueError(f"unknown baseline {self.baseline!r}")
        if self.cate not in ("constant", "linear", "step4"):
            raise ValueError(f"unknown cate {self.cate!r}")


def _baseline_values(spec: DgpSpec, Z: np.ndarray) -> np.ndarray:
    if spec.baseline == "constant":
        return np.zeros(len(Z))
    if spec.baseline == "step":
        return 2.0 * (Z[:, 0] > 0.5)
    w = 1.0 / np.arange(1, spec.p + 1)  # harmonic decay
    return Z @ w


def _cate_values(spec: DgpSpec, Z: np.ndarray) -> np.ndarray:
    if spec.cate == "constant":
        return np.full(len(Z), spec.cate_value)
    if spec.cate == "linear":
        if spec.cate_weights is None:
            return Z[:, 0].copy()
        w = np.zeros(spec.p)
        wv = np.asarray(spec.cate_weights, dtype=float)
        w[: len(wv)] = wv
        return Z @ w
    quart = np.minimum((Z[:, 0] * 4).astype(int), 3)
    return np.asarray(STEP4_LEVELS)[quart]


def _assign_treatment(rng, n: int, prop: float,
                      strata: np.ndarray | None) -> np.ndarray:
    d = np.zeros(n, dtype=int)
    groups = [np.arange(n)] if strata is None else [
        np.flatnonzero(strata == s) for s in np.unique(strata)
    ]
    for g in groups:
        k = int(round(prop * len(g)))
        k = min(max(k, 1), len(g) - 1) if len(g) >= 2 else k
        d[rng.permutation(g)[:k]] = 1
    return d


def generate(spec: DgpSpec) -> tuple[Dataset, np.ndarray, float]:
    """Draw a synthetic trial; returns (dataset, per-row true effect, true ATE).

    The returned ATE is the sample mean of the per-row effects.
    """
    rng = np.random.default_rng(spec.seed)
    Z = rng.random((spec.n, spec.p))
    strata = None
    if spec.n_strata > 0:
        strata = rng.integers(0, spec.n_strata, size=spec.n)
    d = _assign_treatment(rng, spec.n, spec.propensity, strata)

    s0 = _cate_values(spec, Z)
    b0 = _baseline_values(spec, Z)
    if spec.noise == "student_t":
        eps = rng.standard_t(spec.t_df, size=spec.n)
    else:
        eps = rng.standard_normal(spec.n)
    y = b0 + d * s0 + spec.noise_sd * eps

    cluster = None
    if spec.n_clusters > 0:
        cluster = rng.integers(0, spec.n_clusters, size=spec.n)
        if spec.cluster_sd > 0:
            y = y + spec.cluster_sd * rng.standard_normal(spec.n_clusters)[cluster]

    names = [f"x{j+1}" for j in range(spec.p)]
    ds = Dataset(
        outcome=y,
        treatment=d,
        covariates=Z,
        covariate_names=names,
        cluster_id=cluster,
        strata_id=strata,
    )
    return ds, s0, float(s0.mean())


# ---------------------------------------------------------------------------
# brute-force oracles


def oracle_wls(X: np.ndarray, y: np.ndarray, w: np.ndarray,
               cluster_ids: np.ndarray | None = None,
               variance: str = "HC1") -> tuple[np.ndarray, np.ndarray]:
    """Reference WLS: explicit normal-equation inversion, literal score sums.

    Intended for small test instances only; returns (beta, covariance).
    """
    X = np.asarray(X, float)
    y = np.asarray(y, float)
    w = np.asarray(w, float)
    n, k = X.shape
    XtWX = np.zeros((k, k))
    XtWy = np.zeros(k)
    for i in range(n):
        XtWX += w[i] * np.outer(X[i], X[i])
        XtWy += w[i] * y[i] * X[i]
    bread = np.linalg.inv(XtWX)
    beta = bread @ XtWy
    u = y - X @ beta
    if variance == "CR1":
        labels = np.unique(cluster_ids)
        G = len(labels)
        meat = np.zeros((k, k))
        for g in labels:
            sg = np.zeros(k)
            for i in np.flatnonzero(cluster_ids == g):
                sg += X[i] * w[i] * u[i]
            meat += np.outer(sg, sg)
        scale = G / (G - 1) * (n - 1) / (n - k)
    elif variance == "HC1":
        meat = np.zeros((k, k))
        for i in range(n):
            meat += (w[i] * u[i]) ** 2 * np.outer(X[i], X[i])
        scale = n / (n - k)
    else:
        raise ValueError(f"unknown variance estimator {variance!r}")
    return beta, scale * bread @ meat @ bread


def oracle_best_split(X: np.ndarray, y: np.ndarray,
                      min_leaf: int = 1) -> tuple[int, float, float] | None:
    """Exhaustive best split: every feature, every midpoint threshold.

    Ties (within the shared comparison slack) break toward the lower
    feature index, then the lower threshold. Returns
    (feature, threshold, children SSE) or None when no valid split exists.
    """
    from .forest import improves

    X = np.asarray(X, float)
    y = np.asarray(y, float)
    best = None
    for f in range(X.shape[1]):
        vals = np.unique(X[:, f])
        for lo, hi in zip(vals[:-1], vals[1:]):
            thr = 0.5 * (lo + hi)
            left = X[:, f] <= thr
            nl, nr = left.sum(), (~left).sum()
            if nl < min_leaf or nr < min_leaf:
                continue
            yl, yr = y[left], y[~left]
            sse = float(np.sum((yl - yl.mean()) ** 2)
                        + np.sum((yr - yr.mean()) ** 2))
            if best is None or improves(sse, best[2]):
                best = (f, thr, sse)
    return best


# ---------------------------------------------------------------------------
# stub learners (drop-in replacements for the ML step)


@dataclass
class _FnPredictor:
    fn: object

    def predict(self, X: np.ndarray) -> np.ndarray:
        return np.asarray(self.fn(np.asarray(X, float)), float)


@dataclass
class ArmMeanLearner:
    """Predicts the training-arm mean everywhere; exactly scale-equivariant."""

    name: str = "arm-mean"
    scale_inputs: bool = True

    def fit(self, X, y, rng, arm):
        m = float(np.mean(y))
        return _FnPredictor(lambda Xn, m=m: np.full(len(Xn), m))


@dataclass
class PerfectProxyLearner:
    """Returns the true baseline and effect functions, bypassing estimation.

    Works on raw covariates (``scale_inputs=False``); the fitted arm decides
    whether the effect function is added.
    """

    baseline_fn: object
    effect_fn: object
    name: str = "perfect-proxy"
    scale_inputs: bool = False

    def fit(self, X, y, rng, arm):
        b, s = self.baseline_fn, self.effect_fn
        if arm == 1:
            return _FnPredictor(lambda Xn: np.asarray(b(Xn)) + np.asarray(s(Xn)))
        return _FnPredictor(lambda Xn: np.asarray(b(Xn)))


@dataclass
class NoiseProxyLearner:
    """Produces an effect proxy unrelated to the truth.

    The treated-arm model adds a fixed pseudo-random function of the
    covariates, so the implied effect proxy varies but carries no signal.
    """

    amplitude: float = 1.0
    name: str = "noise-proxy"
    scale_inputs: bool = False

    def fit(self, X, y, rng, arm):
        w = rng.standard_normal(X.shape[1])
        m = float(np.mean(y))
        a = self.amplitude if arm == 1 else 0.0
        return _FnPredictor(
            lambda Xn, w=w, m=m, a=a: m + a * np.sin(12.9898 * (Xn @ w))
        )
