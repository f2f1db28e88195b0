"""Render aggregated estimates as tables and write run artifacts.

Human-readable tables use ampersand-separated cells in the three-line shape
point / (lower,upper) / [p]; machine consumers get per-outcome CSV files
plus one results.json mirroring every table. Numeric cells are always
finite; an unidentified quantity is written as the literal ``degenerate``.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pandas as pd

DEGENERATE = "degenerate"

DISPLAY_NAMES = {"elastic-net": "Elastic Net", "random-forest": "Random Forest"}


def _display(name: str) -> str:
    return DISPLAY_NAMES.get(name, name)


def fmt(x, nd: int = 3) -> str:
    return f"{x:.{nd}f}"


def _cell(x) -> float | str:
    if x is None:
        return DEGENERATE
    x = float(x)
    return x if np.isfinite(x) else DEGENERATE


def _est_lines(est, nd: int = 3) -> tuple[str, str, str]:
    if est is None:
        return DEGENERATE, DEGENERATE, DEGENERATE
    return (
        fmt(est.point, nd),
        f"({fmt(est.lower, nd)},{fmt(est.upper, nd)})",
        f"[{fmt(est.p_adj, nd)}]",
    )


def render_blp_table(rows: list[tuple[str, object, object]]) -> str:
    """rows: (label, ate aggregate, het aggregate or None)."""
    out = [" & ATE & HET"]
    for label, ate, het in rows:
        a, h = _est_lines(ate), _est_lines(het)
        out.append(f"{label} & {a[0]} & {h[0]}")
        out.append(f" & {a[1]} & {h[1]}")
        out.append(f" & {a[2]} & {h[2]}")
    return "\n".join(out)


def render_gates_table(rows: list[tuple[str, object, object, object]]) -> str:
    """rows: (label, most-affected, least-affected, difference)."""
    out = [" & 25% most & 25% least & Difference"]
    for label, most, least, diff in rows:
        m, l, d = _est_lines(most), _est_lines(least), _est_lines(diff)
        out.append(f"{label} & {m[0]} & {l[0]} & {d[0]}")
        out.append(f" & {m[1]} & {l[1]} & {d[1]}")
        out.append(f" & {m[2]} & {l[2]} & {d[2]}")
    return "\n".join(out)


def render_clan_table(rows: list[tuple[str, object, object, object]]) -> str:
    """rows: (covariate, most, least, difference); intervals only."""
    out = [" & 25% most & 25% least & Difference"]
    for label, most, least, diff in rows:
        m, l, d = _est_lines(most), _est_lines(least), _est_lines(diff)
        out.append(f"{label} & {m[0]} & {l[0]} & {d[0]}")
        out.append(f" & {m[1]} & {l[1]} & {d[1]}")
    return "\n".join(out)


def render_learner_comparison(scores: dict[str, tuple[float, float]]) -> str:
    """scores: learner -> (blp score, gates score); winners get asterisks."""
    names = list(scores)
    best_blp = max(v[0] for v in scores.values())
    best_gates = max(v[1] for v in scores.values())
    blp_winners = [nm for nm in names if scores[nm][0] == best_blp]
    gates_winners = [nm for nm in names if scores[nm][1] == best_gates]
    out = [" & Best BLP & Best GATES"]
    for nm in names:
        b, g = scores[nm]
        bs = "*" if blp_winners == [nm] else ""
        gs = "*" if gates_winners == [nm] else ""
        out.append(f"{_display(nm)} & {fmt(b)}{bs} & {fmt(g)}{gs}")
    return "\n".join(out)


def render_hh_vs_agg(r2: tuple[float, float, float]) -> str:
    agg, hh, allc = r2
    return "\n".join([
        f"Aggregate level covariates & {fmt(agg, 2)}",
        f"Household level covariates & {fmt(hh, 2)}",
        f"All covariates & {fmt(allc, 2)}",
    ])


# ---------------------------------------------------------------------------
# artifact emission


def _agg_dict(est) -> dict | None:
    if est is None:
        return None
    return {
        "point": est.point, "lower": est.lower, "upper": est.upper,
        "p_adj": est.p_adj, "alpha": est.alpha,
        "level_uniform": est.level_uniform, "n_splits": est.n_splits,
    }


def _clan_visible(config, agg) -> bool:
    if agg.clan is None or config.clan == "off":
        return False
    return config.clan == "on" or agg.heterogeneity_detected


def learner_json(agg) -> dict:
    return {
        "ate": _agg_dict(agg.ate),
        "het": _agg_dict(agg.het),
        "n_het_degenerate": agg.n_het_degenerate,
        "gates": [_agg_dict(g) for g in agg.gates],
        "gates_contrast": _agg_dict(agg.gates_contrast),
        "lambda_blp": agg.lambda_blp,
        "lambda_gates": agg.lambda_gates,
        "heterogeneity_detected": agg.heterogeneity_detected,
        "clan": None if agg.clan is None else [
            {
                "covariate": c.covariate,
                "median_abs_corr": c.median_abs_corr,
                "most": _agg_dict(c.most),
                "least": _agg_dict(c.least),
                "diff": _agg_dict(c.diff),
            }
            for c in agg.clan
        ],
        "hh_vs_agg": None if agg.hh_vs_agg is None else {
            "aggregate": agg.hh_vs_agg[0],
            "household": agg.hh_vs_agg[1],
            "all": agg.hh_vs_agg[2],
        },
        "n_failed": agg.n_failed,
        "failed_splits": [list(f) for f in agg.failures],
    }


def write_outcome_artifacts(outdir: Path, result, balance: pd.DataFrame,
                            config) -> None:
    """Write the per-outcome CSV set and the rendered text tables."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    aggs = result.learners

    rows = []
    for nm, a in aggs.items():
        h = a.het
        rows.append({
            "learner": nm,
            "ate": _cell(a.ate.point), "ate_lower": _cell(a.ate.lower),
            "ate_upper": _cell(a.ate.upper), "ate_p": _cell(a.ate.p_adj),
            "het": _cell(None if h is None else h.point),
            "het_lower": _cell(None if h is None else h.lower),
            "het_upper": _cell(None if h is None else h.upper),
            "het_p": _cell(None if h is None else h.p_adj),
            "n_splits": a.ate.n_splits,
            "n_het_degenerate": a.n_het_degenerate,
            "n_failed": a.n_failed,
        })
    pd.DataFrame(rows).to_csv(outdir / "blp.csv", index=False)

    rows = []
    for nm, a in aggs.items():
        top, bot = a.gates[-1], a.gates[0]
        rows.append({
            "learner": nm,
            "most": _cell(top.point), "most_lower": _cell(top.lower),
            "most_upper": _cell(top.upper), "most_p": _cell(top.p_adj),
            "least": _cell(bot.point), "least_lower": _cell(bot.lower),
            "least_upper": _cell(bot.upper), "least_p": _cell(bot.p_adj),
            "diff": _cell(a.gates_contrast.point),
            "diff_lower": _cell(a.gates_contrast.lower),
            "diff_upper": _cell(a.gates_contrast.upper),
            "diff_p": _cell(a.gates_contrast.p_adj),
        })
    pd.DataFrame(rows).to_csv(outdir / "gates.csv", index=False)

    rows = []
    for nm, a in aggs.items():
        for k, g in enumerate(a.gates, start=1):
            rows.append({
                "learner": nm, "group": k,
                "estimate": _cell(g.point), "lower": _cell(g.lower),
                "upper": _cell(g.upper),
                "ate": _cell(a.ate.point), "ate_lower": _cell(a.ate.lower),
                "ate_upper": _cell(a.ate.upper),
            })
    pd.DataFrame(rows).to_csv(outdir / "gates_plot.csv", index=False)

    rows = []
    for nm, a in aggs.items():
        rows.append({
            "learner": nm,
            "lambda_blp": _cell(a.lambda_blp),
            "best_blp": "-",
            "lambda_gates": _cell(a.lambda_gates),
            "best_gates": "-",
        })
    if result.selection is not None:
        for r in rows:
            if r["learner"] == result.selection.get("blp"):
                r["best_blp"] = "*"
            if r["learner"] == result.selection.get("gates"):
                r["best_gates"] = "*"
    pd.DataFrame(rows).to_csv(outdir / "learner_comparison.csv", index=False)

    balance.to_csv(outdir / "balance.csv", index=False)

    clan_rows = []
    for nm, a in aggs.items():
        if not _clan_visible(config, a):
            continue
        for c in a.clan:
            clan_rows.append({
                "learner": nm, "covariate": c.covariate,
                "abs_corr": _cell(c.median_abs_corr),
                "most": _cell(c.most.point),
                "most_lower": _cell(c.most.lower),
                "most_upper": _cell(c.most.upper),
                "least": _cell(c.least.point),
                "least_lower": _cell(c.least.lower),
                "least_upper": _cell(c.least.upper),
                "diff": _cell(c.diff.point),
                "diff_lower": _cell(c.diff.lower),
                "diff_upper": _cell(c.diff.upper),
            })
    if clan_rows:
        pd.DataFrame(clan_rows).to_csv(outdir / "clan.csv", index=False)

    r2_rows = []
    for nm, a in aggs.items():
        if a.hh_vs_agg is None:
            continue
        for label, v in zip(("aggregate", "household", "all"), a.hh_vs_agg):
            r2_rows.append({"learner": nm, "covariate_set": label,
                            "adjusted_r2": _cell(v)})
    if r2_rows:
        pd.DataFrame(r2_rows).to_csv(outdir / "hh_vs_agg.csv", index=False)

    (outdir / "tables.txt").write_text(render_text_report(result, config),
                                       encoding="utf-8")


def render_text_report(result, config) -> str:
    """All tables for one outcome in the three-line cell shape."""
    parts = [f"== outcome: {result.outcome} =="]
    for nm, a in result.learners.items():
        parts.append(f"-- {_display(nm)}: linear feature --")
        parts.append(render_blp_table([(result.outcome, a.ate, a.het)]))
        parts.append(f"-- {_display(nm)}: group effects --")
        parts.append(render_gates_table(
            [(result.outcome, a.gates[-1], a.gates[0], a.gates_contrast)]))
        if _clan_visible(config, a):
            parts.append(f"-- {_display(nm)}: classification --")
            parts.append(render_clan_table(
                [(c.covariate, c.most, c.least, c.diff) for c in a.clan]))
        if a.hh_vs_agg is not None:
            parts.append(f"-- {_display(nm)}: membership R2 --")
            parts.append(render_hh_vs_agg(a.hh_vs_agg))
    if len(result.learners) > 1:
        parts.append("-- learner comparison --")
        parts.append(render_learner_comparison(
            {nm: (a.lambda_blp, a.lambda_gates)
             for nm, a in result.learners.items()}))
    return "\n".join(parts) + "\n"


def write_run_outputs(outdir: Path, config, results: dict,
                      balances: dict) -> None:
    """results/balances keyed by outcome; writes results.json + manifest."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    doc = {"config": config.identity_dict(), "outcomes": {}}
    for outcome, result in results.items():
        doc["outcomes"][outcome] = {
            "balance": balances[outcome].to_dict(orient="records"),
            "learners": {nm: learner_json(a)
                         for nm, a in result.learners.items()},
            "selection": result.selection,
            "n_splits": result.n_splits,
            "alpha": result.alpha,
        }
    with open(outdir / "results.json", "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True, allow_nan=False,
                  default=_json_fallback)
        fh.write("\n")

    manifest = {
        "config": config.identity_dict(),
        "master_seed": config.master_seed,
        "failed_splits": {
            outcome: {nm: a.n_failed for nm, a in result.learners.items()}
            for outcome, result in results.items()
        },
    }
    with open(outdir / "run_manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _json_fallback(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    raise TypeError(f"not JSON serializable: {type(x)}")
