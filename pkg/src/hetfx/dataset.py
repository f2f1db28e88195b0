"""Role-tagged trial data: loading, validation, missingness, scaling.

A ``Dataset`` is immutable once constructed (arrays are frozen) so split
workers can read it concurrently. Preparation is a short explicit pipeline:

    load_csv -> dummify_missing -> rescale_unit_interval (where needed)

Missing covariate cells are handled by constant-fill plus a companion 0/1
indicator column; rows missing the outcome or the treatment are dropped at
load time because the estimands need both observed.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import pandas as pd

from .errors import ConfigError, DataValidationError, OverlapError

ROLES = ("outcome", "treatment", "covariate", "cluster", "strata", "ignore")


@dataclass
class Dataset:
    outcome: np.ndarray
    treatment: np.ndarray
    covariates: np.ndarray
    covariate_names: list[str]
    cluster_id: np.ndarray | None = None
    strata_id: np.ndarray | None = None
    missing_indicators: set[str] = field(default_factory=set)
    n_dropped: int = 0
    outcome_name: str = "y"

    def __post_init__(self):
        self.outcome = np.array(self.outcome, dtype=float)
        self.treatment = np.array(self.treatment)
        self.covariates = np.atleast_2d(np.array(self.covariates, dtype=float))
        n = len(self.outcome)
        if len(self.treatment) != n or self.covariates.shape[0] != n:
            raise DataValidationError("outcome, treatment, covariates must align")
        if self.covariates.shape[1] != len(self.covariate_names):
            raise DataValidationError("covariate_names must match matrix columns")
        vals = set(np.unique(self.treatment).tolist())
        if not vals <= {0, 1}:
            raise DataValidationError(
                f"treatment must be binary 0/1, found values {sorted(vals)}"
            )
        t = np.asarray(self.treatment, dtype=int)
        if t.sum() == 0 or t.sum() == n:
            raise OverlapError(
                "overlap violated: all units share one treatment arm "
                "(need 0 < P(D=1) < 1)"
            )
        self.treatment = t
        if self.strata_id is not None:
            self.strata_id = np.asarray(self.strata_id)
            for s in np.unique(self.strata_id):
                sel = self.strata_id == s
                if t[sel].sum() == 0 or t[sel].sum() == sel.sum():
                    raise DataValidationError(
                        f"overlap violated within stratum {s!r}: "
                        "every stratum needs at least one unit per arm"
                    )
        if self.cluster_id is not None:
            self.cluster_id = np.asarray(self.cluster_id)
        for a in (self.outcome, self.treatment, self.covariates):
            a.flags.writeable = False

    @property
    def n_obs(self) -> int:
        return len(self.outcome)

    def has_missing(self) -> bool:
        return bool(np.isnan(self.covariates).any())

    def assert_prepared(self) -> None:
        """Covariates must be gap-free before estimation."""
        if self.has_missing():
            raise DataValidationError(
                "covariates contain missing values; run dummify_missing first"
            )

    def column(self, name: str) -> np.ndarray:
        return self.covariates[:, self.covariate_names.index(name)]

    def take(self, rows: np.ndarray) -> "Dataset":
        """Row subset preserving all roles (re-validated on construction)."""
        return Dataset(
            outcome=self.outcome[rows],
            treatment=self.treatment[rows],
            covariates=self.covariates[rows],
            covariate_names=list(self.covariate_names),
            cluster_id=None if self.cluster_id is None else self.cluster_id[rows],
            strata_id=None if self.strata_id is None else self.strata_id[rows],
            missing_indicators=set(self.missing_indicators),
            outcome_name=self.outcome_name,
        )

    def with_outcome(self, y: np.ndarray) -> "Dataset":
        return replace(self, outcome=np.array(y, dtype=float))


@dataclass
class ScalingMap:
    """Per-column (min, max) pairs; constant columns map to 0."""

    covariate_ranges: dict[str, tuple[float, float]]
    outcome_range: tuple[float, float]

    @classmethod
    def fit(cls, covariates: np.ndarray, names: list[str],
            outcome: np.ndarray) -> "ScalingMap":
        ranges = {
            nm: (float(covariates[:, j].min()), float(covariates[:, j].max()))
            for j, nm in enumerate(names)
        }
        return cls(ranges, (float(outcome.min()), float(outcome.max())))

    @staticmethod
    def _fwd(x, lo, hi, clamp):
        if hi == lo:
            return np.zeros_like(x)
        z = (x - lo) / (hi - lo)
        return np.clip(z, 0.0, 1.0) if clamp else z

    @staticmethod
    def _inv(z, lo, hi):
        return np.full_like(z, lo) if hi == lo else z * (hi - lo) + lo

    def transform_covariates(self, Z: np.ndarray, names: list[str],
                             clamp: bool = False) -> np.ndarray:
        out = np.empty_like(np.asarray(Z, dtype=float))
        for j, nm in enumerate(names):
            lo, hi = self.covariate_ranges[nm]
            out[:, j] = self._fwd(Z[:, j], lo, hi, clamp)
        return out

    def invert_covariates(self, Z: np.ndarray, names: list[str]) -> np.ndarray:
        out = np.empty_like(np.asarray(Z, dtype=float))
        for j, nm in enumerate(names):
            lo, hi = self.covariate_ranges[nm]
            out[:, j] = self._inv(Z[:, j], lo, hi)
        return out

    def transform_outcome(self, y: np.ndarray) -> np.ndarray:
        return self._fwd(np.asarray(y, float), *self.outcome_range, False)

    def invert_outcome(self, y: np.ndarray) -> np.ndarray:
        return self._inv(np.asarray(y, float), *self.outcome_range)


@dataclass
class PropensityModel:
    """Treated-share propensity, global or per stratum."""

    p_hat: float
    mode: str = "global"  # global | per-stratum
    per_stratum: dict | None = None

    def prob(self, d: Dataset) -> np.ndarray:
        if self.mode == "global":
            return np.full(d.n_obs, self.p_hat)
        if d.strata_id is None:
            raise DataValidationError("per-stratum propensity needs strata_id")
        return np.array([self.per_stratum[s] for s in d.strata_id.tolist()])

    def weights(self, d: Dataset) -> np.ndarray:
        """Inverse variance of the treatment indicator, 1/(p(1-p))."""
        p = self.prob(d)
        return 1.0 / (p * (1.0 - p))


def parse_schema(schema: dict) -> dict[str, str]:
    """Validate a column -> role mapping; exactly one outcome and treatment."""
    bad = {c: r for c, r in schema.items() if r not in ROLES}
    if bad:
        raise ConfigError(f"unknown roles in schema: {bad}")
    for role, lo, hi in (("outcome", 1, 1), ("treatment", 1, 1),
                         ("cluster", 0, 1), ("strata", 0, 1)):
        k = sum(1 for r in schema.values() if r == role)
        if not lo <= k <= hi:
            raise ConfigError(f"schema must name between {lo} and {hi} "
                              f"{role} columns, found {k}")
    return dict(schema)


def load_csv(path, schema: dict[str, str]) -> Dataset:
    """Read a UTF-8 header CSV; empty cells are missing.

    Rows missing the outcome or treatment are dropped (count recorded on the
    dataset). Every CSV column must carry exactly one role in ``schema``.
    """
    schema = parse_schema(schema)
    try:
        df = pd.read_csv(path)
    except OSError as e:
        raise DataValidationError(f"cannot read {path}: {e}") from e
    missing_cols = [c for c in schema if c not in df.columns]
    if missing_cols:
        raise ConfigError(f"schema names absent columns: {missing_cols}")
    unassigned = [c for c in df.columns if c not in schema]
    if unassigned:
        raise ConfigError(f"columns without a role: {unassigned}")

    out_col = next(c for c, r in schema.items() if r == "outcome")
    trt_col = next(c for c, r in schema.items() if r == "treatment")
    cov_cols = [c for c in df.columns if schema[c] == "covariate"]
    clu_col = next((c for c, r in schema.items() if r == "cluster"), None)
    str_col = next((c for c, r in schema.items() if r == "strata"), None)

    trt = pd.to_numeric(df[trt_col], errors="coerce")
    bad_vals = set(trt.dropna().unique()) - {0, 1}
    if bad_vals or (df[trt_col].notna() & trt.isna()).any():
        raise DataValidationError(
            f"treatment column {trt_col!r} must contain only 0, 1, or empty"
        )
    keep = df[out_col].notna() & trt.notna()
    n_dropped = int((~keep).sum())
    df = df.loc[keep]
    trt = trt.loc[keep]

    for c in (clu_col, str_col):
        if c is not None and df[c].isna().any():
            raise DataValidationError(f"column {c!r} has missing labels")

    return Dataset(
        outcome=df[out_col].to_numpy(dtype=float),
        treatment=trt.to_numpy(dtype=int),
        covariates=df[cov_cols].to_numpy(dtype=float),
        covariate_names=cov_cols,
        cluster_id=None if clu_col is None else df[clu_col].to_numpy(),
        strata_id=None if str_col is None else df[str_col].to_numpy(),
        n_dropped=n_dropped,
        outcome_name=out_col,
    )


def dummify_missing(raw: Dataset) -> Dataset:
    """Constant-fill covariate gaps and add 0/1 was-missing indicators.

    Idempotent: gap-free input passes through unchanged.
    """
    Z = raw.covariates
    gapped = [j for j in range(Z.shape[1]) if np.isnan(Z[:, j]).any()]
    if not gapped:
        return raw
    Z = Z.copy()
    names = list(raw.covariate_names)
    indicators = set(raw.missing_indicators)
    extra = []
    for j in gapped:
        mask = np.isnan(Z[:, j])
        Z[mask, j] = 0.0
        ind_name = f"{names[j]}_missing"
        while ind_name in names or any(ind_name == nm for nm, _ in extra):
            ind_name += "_"
        extra.append((ind_name, mask.astype(float)))
        indicators.add(ind_name)
    for nm, col in extra:
        names.append(nm)
        Z = np.column_stack([Z, col])
    return replace(raw, covariates=Z, covariate_names=names,
                   missing_indicators=indicators)


def rescale_unit_interval(d: Dataset) -> tuple[Dataset, ScalingMap]:
    """Min-max scale every covariate and the outcome to [0, 1]."""
    m = ScalingMap.fit(d.covariates, d.covariate_names, d.outcome)
    scaled = replace(
        d,
        covariates=m.transform_covariates(d.covariates, d.covariate_names),
        outcome=m.transform_outcome(d.outcome),
    )
    return scaled, m


def estimate_propensity(d: Dataset, mode: str = "global") -> PropensityModel:
    """Treated share, globally or per stratum (randomized assignment)."""
    t = d.treatment
    if t.sum() == 0 or t.sum() == len(t):
        raise OverlapError("overlap violated: one treatment arm is empty")
    if mode == "global":
        return PropensityModel(p_hat=float(t.mean()), mode="global")
    if mode != "per-stratum":
        raise ConfigError(f"unknown propensity mode {mode!r}")
    if d.strata_id is None:
        raise DataValidationError("per-stratum propensity needs strata_id")
    per = {}
    for s in np.unique(d.strata_id):
        sel = d.strata_id == s
        k = int(t[sel].sum())
        if k == 0 or k == int(sel.sum()):
            raise OverlapError(f"overlap violated in stratum {s!r}")
        per[s] = k / int(sel.sum())
    return PropensityModel(p_hat=float(t.mean()), mode="per-stratum",
                           per_stratum=per)


def balance_table(d: Dataset, variance: str = "HC1",
                  alpha: float = 0.05) -> pd.DataFrame:
    """Covariate-on-treatment regressions with robust SEs, one row each."""
    from .wls import DesignSpec, fit_wls

    if variance == "CR1" and d.cluster_id is None:
        raise ConfigError("cluster-robust balance table needs a cluster column")
    control = d.treatment == 0
    rows = []
    D = d.treatment.astype(float)[:, None]
    for j, nm in enumerate(d.covariate_names):
        z = d.covariates[:, j]
        fit = fit_wls(z, DesignSpec(
            X=D, names=["treatment"], variance=variance,
            cluster_ids=d.cluster_id, alpha=alpha,
        ))
        r = fit.row("treatment")
        rows.append({
            "covariate": nm,
            "control_mean": float(z[control].mean()),
            "control_sd": float(z[control].std(ddof=1)),
            "coefficient": r["estimate"],
            "p_value": r["p"],
        })
    return pd.DataFrame(rows)
