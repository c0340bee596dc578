"""Calibration error and volume bias of probabilistic segmentations."""

__version__ = "0.1.0"

from .cohort import (
    ModelSummary,
    SubjectMetrics,
    aggregate_cohort,
    kendall_tau,
    pareto_front,
    pearson_r,
    spearman_rho,
    subgroup_correlations,
)
from .metrics import (
    BinningScheme,
    DiscreteDataset,
    LabelVolume,
    ProbVolume,
    ReliabilityCurve,
    accuracy,
    binned_ece,
    dataset_bias,
    dice,
    exact_ce,
    jensen_gap,
    marginal_ece,
    reliability_curve,
    soft_volume,
    to_dataset,
    volume_bias,
)
from .recalibration import (
    PlattParams,
    PlattScaler,
    TemperatureDistorter,
    platt_apply,
    platt_fit,
    temperature_distort,
    to_logit,
)
from .theory import (
    BoundReport,
    PredictorTable,
    build_counterexample,
    convex_combine,
    ratio_unboundedness_demo,
    verify_bound,
)
