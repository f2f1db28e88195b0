"""Run configuration: JSON round-trip, validation, learner construction.

The schema file maps every CSV column to a role; the analysis config points
at the dataset and schema, picks outcomes and learners, and fixes every
knob needed to reproduce a run bit for bit (master seed included).
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field, replace

from .errors import ConfigError

LEARNER_NAMES = ("elastic-net", "random-forest")
ML_ALIASES = {"en": "elastic-net", "rf": "random-forest",
              "elastic-net": "elastic-net", "random-forest": "random-forest"}


@dataclass
class AnalysisConfig:
    dataset: str | None = None
    schema: str | None = None
    outcomes: list[str] = field(default_factory=list)
    learners: list[str] = field(default_factory=lambda: list(LEARNER_NAMES))
    n_splits: int = 50
    alpha: float = 0.05
    variance: str = "HC1"  # HC1 | CR1
    propensity_mode: str = "global"  # global | per-stratum
    clan: str = "auto"  # auto | on | off
    clan_top_k: int = 5
    k_groups: int = 4
    master_seed: int = 0
    output_dir: str | None = None
    parallelism: int = 0  # 0 means all available cores
    max_failure_rate: float = 0.2
    aggregate_covariates: list[str] = field(default_factory=list)
    elastic_net: dict = field(default_factory=dict)
    random_forest: dict = field(default_factory=dict)

    def validate(self) -> None:
        if self.n_splits < 1:
            raise ConfigError("n_splits must be >= 1")
        if not 0.0 < self.alpha <= 0.25:
            raise ConfigError("alpha must be in (0, 0.25]")
        if self.variance not in ("HC1", "CR1"):
            raise ConfigError(f"unknown variance spec {self.variance!r}")
        if self.clan not in ("auto", "on", "off"):
            raise ConfigError(f"clan must be auto/on/off, got {self.clan!r}")
        if not self.learners:
            raise ConfigError("at least one learner is required")
        unknown = [l for l in self.learners if l not in LEARNER_NAMES]
        if unknown:
            raise ConfigError(f"unknown learners {unknown}; "
                              f"choose from {list(LEARNER_NAMES)}")
        if self.k_groups < 2:
            raise ConfigError("k_groups must be >= 2")
        if not 0.0 <= self.max_failure_rate < 1.0:
            raise ConfigError("max_failure_rate must be in [0, 1)")

    def effective_parallelism(self) -> int:
        return self.parallelism if self.parallelism > 0 else (os.cpu_count() or 1)

    def to_dict(self) -> dict:
        return asdict(self)

    def identity_dict(self) -> dict:
        """Everything that determines the results; execution knobs such as
        parallelism are excluded because outputs never depend on them."""
        d = asdict(self)
        d.pop("parallelism")
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "AnalysisConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_json(cls, path) -> "AnalysisConfig":
        try:
            with open(path, encoding="utf-8") as fh:
                data = json.load(fh)
        except OSError as e:
            raise ConfigError(f"cannot read config {path}: {e}") from e
        except json.JSONDecodeError as e:
            raise ConfigError(f"config {path} is not valid JSON: {e}") from e
        if not isinstance(data, dict):
            raise ConfigError("config root must be a JSON object")
        return cls.from_dict(data)

    def to_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    def with_overrides(self, **kw) -> "AnalysisConfig":
        kw = {k: v for k, v in kw.items() if v is not None}
        return replace(self, **kw)


@dataclass
class SchemaFile:
    """Column -> role map plus the optional aggregate-covariate tags."""

    columns: dict[str, str]
    aggregate_covariates: list[str] = field(default_factory=list)

    @classmethod
    def from_json(cls, path) -> "SchemaFile":
        try:
            with open(path, encoding="utf-8") as fh:
                data = json.load(fh)
        except OSError as e:
            raise ConfigError(f"cannot read schema {path}: {e}") from e
        except json.JSONDecodeError as e:
            raise ConfigError(f"schema {path} is not valid JSON: {e}") from e
        cols = data.get("columns")
        if not isinstance(cols, dict) or not cols:
            raise ConfigError("schema needs a non-empty 'columns' object")
        agg = data.get("aggregate_covariates", [])
        bad = [c for c in agg if cols.get(c) != "covariate"]
        if bad:
            raise ConfigError(
                f"aggregate_covariates must be covariate columns: {bad}")
        return cls(columns=dict(cols), aggregate_covariates=list(agg))

    def roles_for_outcome(self, outcome: str) -> dict[str, str]:
        """Role map for one analysis outcome; other outcome columns are
        ignored so they can never leak in as covariates."""
        if self.columns.get(outcome) != "outcome":
            raise ConfigError(
                f"{outcome!r} is not tagged as an outcome in the schema")
        roles = {}
        for c, r in self.columns.items():
            if r == "outcome":
                roles[c] = "outcome" if c == outcome else "ignore"
            else:
                roles[c] = r
        return roles

    @property
    def outcome_columns(self) -> list[str]:
        return [c for c, r in self.columns.items() if r == "outcome"]

    @property
    def cluster_column(self) -> str | None:
        return next((c for c, r in self.columns.items() if r == "cluster"), None)


def build_learners(config: AnalysisConfig) -> list:
    """Instantiate the configured learners with their option dictionaries."""
    from .proxies import ElasticNetLearner, RandomForestLearner

    out = []
    for nm in config.learners:
        if nm == "elastic-net":
            opts = dict(config.elastic_net)
            if "penalties" in opts and opts["penalties"] is not None:
                opts["penalties"] = tuple(opts["penalties"])
            out.append(ElasticNetLearner(**opts))
        elif nm == "random-forest":
            out.append(RandomForestLearner(**dict(config.random_forest)))
        else:
            raise ConfigError(f"unknown learner {nm!r}")
    return out
