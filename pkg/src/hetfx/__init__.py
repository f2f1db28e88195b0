"""Heterogeneous treatment effect analysis for randomized trials.

ML learners fit on an auxiliary half-sample produce effect proxies that are
never treated as consistent estimates; orthogonalized weighted regressions
on the main half turn them into inference on the average effect, on group
average effects sorted by the proxy, and on the characteristics of the most
and least affected groups. Repeating over many random splits and taking
medians yields confidence statements that account for split uncertainty.
"""

from .config import AnalysisConfig, SchemaFile
from .dataset import (
    Dataset,
    PropensityModel,
    ScalingMap,
    balance_table,
    dummify_missing,
    estimate_propensity,
    load_csv,
    rescale_unit_interval,
)
from .elastic_net import ElasticNetModel, TuningPlan, fit_elastic_net, tune_elastic_net
from .features import (
    BlpEstimate,
    ClanEstimate,
    GatesEstimate,
    baseline_interaction_model,
    estimate_blp,
    estimate_clan,
    estimate_gates,
    hh_vs_agg_r2,
)
from .forest import ForestModel, RegressionTree, fit_forest, fit_tree, predict_forest
from .inference import (
    AggregatedEstimate,
    AnalysisResult,
    SplitResult,
    aggregate_splits,
    lambda_blp,
    lambda_gates,
    run_analysis,
    select_learner,
)
from .proxies import (
    ElasticNetLearner,
    GroupAssignment,
    ProxyPair,
    RandomForestLearner,
    SplitAssignment,
    assign_groups,
    build_proxies,
    make_split,
)
from .synth import DgpSpec, generate, oracle_best_split, oracle_wls
from .wls import DesignSpec, WlsFit, adjusted_r_squared, fit_wls, linear_combination_test

__version__ = "0.1.0"
