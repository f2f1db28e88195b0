"""Monte Carlo coverage and size experiment at configurable scale.

Replays the two headline checks behind the acceptance suite: coverage of
the aggregated interval for the average effect on a linear-effect trial,
and the rejection rate for the heterogeneity loading under a zero-effect
trial (doubled-median p-values are expected to be conservative).

    python scripts/coverage_experiment.py --runs 50 --splits 25
"""

import argparse
import sys
import warnings

import numpy as np

from hetfx.config import AnalysisConfig
from hetfx.inference import run_analysis
from hetfx.proxies import ElasticNetLearner
from hetfx.synth import DgpSpec, generate


def run(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--runs", type=int, default=50)
    ap.add_argument("--splits", type=int, default=25)
    ap.add_argument("--n", type=int, default=1000)
    ap.add_argument("--alpha", type=float, default=0.05)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    warnings.filterwarnings("ignore")

    en = ElasticNetLearner(grid_size=6, k_folds=2, repeats=1)

    covered = 0
    widths = []
    for r in range(args.runs):
        d, _, true_ate = generate(DgpSpec(
            n=args.n, p=5, cate="linear", baseline="linear",
            noise_sd=1.0, seed=args.seed + r))
        cfg = AnalysisConfig(learners=["elastic-net"], n_splits=args.splits,
                             alpha=args.alpha, master_seed=r + 1, clan="off")
        a = run_analysis(d, cfg, learners=[en]).learners["elastic-net"]
        covered += a.ate.lower <= true_ate <= a.ate.upper
        widths.append(a.ate.upper - a.ate.lower)
    print(f"average-effect band (level {1 - 2*args.alpha:.0%}): "
          f"coverage {covered}/{args.runs}, "
          f"median width {np.median(widths):.3f}")

    rejections = 0
    for r in range(args.runs):
        d, _, _ = generate(DgpSpec(
            n=args.n, p=20, cate="constant", cate_value=0.0,
            baseline="constant", noise_sd=1.0, seed=10_000 + args.seed + r))
        cfg = AnalysisConfig(learners=["elastic-net"], n_splits=args.splits,
                             alpha=args.alpha, master_seed=r + 1, clan="off")
        a = run_analysis(d, cfg, learners=[en]).learners["elastic-net"]
        rejections += a.het is not None and a.het.p_adj <= args.alpha
    print(f"null heterogeneity rejections at {args.alpha}: "
          f"{rejections}/{args.runs}")
    return 0


if __name__ == "__main__":
    sys.exit(run())
