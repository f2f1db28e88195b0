"""Command-line entry points: analyze, simulate, validate.

Exit codes: 0 ok, 2 configuration error, 3 data validation error,
4 estimation failure threshold exceeded. All validation happens before any
artifact is written, so a failed invocation leaves no partial output.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np
import pandas as pd

from .config import ML_ALIASES, AnalysisConfig, SchemaFile
from .dataset import balance_table, dummify_missing, estimate_propensity, load_csv
from .errors import ConfigError, DataValidationError, EstimationError, HetfxError
from .inference import run_analysis
from .reports import write_outcome_artifacts, write_run_outputs
from .synth import DgpSpec, generate

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_ESTIMATION = 4


def _resolve_outdir(args_out, config: AnalysisConfig) -> Path:
    out = args_out or config.output_dir or os.environ.get("HETFX_OUT")
    return Path(out) if out else Path("hetfx_out")


def _parse_ml(spec: str) -> list[str]:
    names = []
    for tok in spec.split(","):
        tok = tok.strip().lower()
        if tok not in ML_ALIASES:
            raise ConfigError(f"unknown learner {tok!r}; use en,rf")
        names.append(ML_ALIASES[tok])
    return names


def _load_run_inputs(config_path, overrides):
    """Config + schema + one prepared dataset per outcome, fully validated."""
    config = AnalysisConfig.from_json(config_path)
    config = config.with_overrides(**overrides)
    config.validate()
    if config.dataset is None or config.schema is None:
        raise ConfigError("config must set 'dataset' and 'schema' paths")
    if not config.outcomes:
        raise ConfigError("config must list at least one outcome")
    base = Path(config_path).parent
    schema = SchemaFile.from_json(_resolve(base, config.schema))
    for oc in config.outcomes:
        if oc not in schema.outcome_columns:
            raise ConfigError(
                f"outcome {oc!r} is not an outcome column in the schema")
    if config.variance == "CR1" and schema.cluster_column is None:
        raise ConfigError(
            "cluster-robust variance requested but the schema has no "
            "cluster column")
    if not config.aggregate_covariates:
        config = config.with_overrides(
            aggregate_covariates=list(schema.aggregate_covariates))
    datasets = {}
    for oc in config.outcomes:
        d = load_csv(_resolve(base, config.dataset),
                     schema.roles_for_outcome(oc))
        d = dummify_missing(d)
        d.assert_prepared()
        missing_agg = [c for c in config.aggregate_covariates
                       if c not in d.covariate_names]
        if missing_agg:
            raise ConfigError(
                f"aggregate_covariates not in the covariates: {missing_agg}")
        datasets[oc] = d
    return config, schema, datasets


def _resolve(base: Path, p) -> Path:
    p = Path(p)
    return p if p.is_absolute() else base / p


def cmd_analyze(args) -> int:
    overrides = {
        "n_splits": args.splits,
        "alpha": args.alpha,
        "learners": _parse_ml(args.ml) if args.ml else None,
        "master_seed": args.seed,
        "clan": args.clan,
    }
    config, _, datasets = _load_run_inputs(args.config, overrides)
    outdir = _resolve_outdir(args.out, config)

    results, balances = {}, {}
    for oc, d in datasets.items():
        results[oc] = run_analysis(d, config)
        balances[oc] = balance_table(d, config.variance, config.alpha)

    for oc, result in results.items():
        write_outcome_artifacts(outdir / oc, result, balances[oc], config)
    write_run_outputs(outdir, config, results, balances)
    print(f"wrote artifacts for {len(results)} outcome(s) to {outdir}")
    return EXIT_OK


def cmd_validate(args) -> int:
    config, _, datasets = _load_run_inputs(args.config, {})
    outdir = _resolve_outdir(args.out, config)
    for oc, d in datasets.items():
        prop = estimate_propensity(d, config.propensity_mode)
        bal = balance_table(d, config.variance, config.alpha)
        ocdir = outdir / oc
        ocdir.mkdir(parents=True, exist_ok=True)
        bal.to_csv(ocdir / "balance.csv", index=False)
        print(f"{oc}: n={d.n_obs} dropped={d.n_dropped} "
              f"treated_share={prop.p_hat:.4f} covariates={len(d.covariate_names)}")
    print(f"wrote balance tables to {outdir}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    try:
        with open(args.config, encoding="utf-8") as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot read simulation config: {e}") from e
    try:
        spec = DgpSpec(**raw)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"invalid simulation spec: {e}") from e
    d, s0, true_ate = generate(spec)

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    cols = {"y": d.outcome, "d": d.treatment}
    for j, nm in enumerate(d.covariate_names):
        cols[nm] = d.covariates[:, j]
    roles = {"y": "outcome", "d": "treatment"}
    roles.update({nm: "covariate" for nm in d.covariate_names})
    if d.cluster_id is not None:
        cols["cluster"] = d.cluster_id
        roles["cluster"] = "cluster"
    if d.strata_id is not None:
        cols["stratum"] = d.strata_id
        roles["stratum"] = "strata"
    pd.DataFrame(cols).to_csv(out, index=False)

    with open(f"{out}.truth.json", "w", encoding="utf-8") as fh:
        json.dump({"true_ate": true_ate, "s0": [float(v) for v in s0]}, fh)
        fh.write("\n")
    with open(f"{out}.schema.json", "w", encoding="utf-8") as fh:
        json.dump({"columns": roles}, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"wrote {spec.n} rows to {out} (+ truth/schema sidecars)")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="hetfx",
        description="Heterogeneous treatment effect analysis for randomized "
                    "trials with ML effect proxies.",
    )
    sub = p.add_subparsers(dest="command", required=True)

    a = sub.add_parser("analyze", help="run the full split-and-aggregate analysis")
    a.add_argument("--config", required=True)
    a.add_argument("--splits", type=int, default=None)
    a.add_argument("--alpha", type=float, default=None)
    a.add_argument("--ml", default=None, help="comma list: en,rf")
    a.add_argument("--seed", type=int, default=None)
    a.add_argument("--out", default=None)
    a.add_argument("--clan", choices=["on", "off", "auto"], default=None)
    a.set_defaults(func=cmd_analyze)

    s = sub.add_parser("simulate", help="generate a synthetic trial CSV")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_simulate)

    v = sub.add_parser("validate", help="balance and overlap diagnostics only")
    v.add_argument("--config", required=True)
    v.add_argument("--out", default=None)
    v.set_defaults(func=cmd_validate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except DataValidationError as e:
        print(f"data validation error: {e}", file=sys.stderr)
        return EXIT_DATA
    except EstimationError as e:
        print(f"estimation error: {e}", file=sys.stderr)
        return EXIT_ESTIMATION
    except HetfxError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
