"""Executable checks of the relationship between calibration error and bias.

The bound ``CE >= binned ECE >= |bias|`` holds for every finite dataset, and
averaging two calibrated predictors keeps the bias at zero while breaking
calibration, which is why no multiplicative bound in the other direction can
exist.
"""

import logging
from dataclasses import dataclass

import numpy as np

from ._summation import fsum
from ._validation import check_same_length, check_scores
from .metrics import BinningScheme, DiscreteDataset, binned_ece, dataset_bias, exact_ce

logger = logging.getLogger(__name__)

BOUND_TOL = 1e-12

N_POSITIVE = 100
N_NEGATIVE = 200


@dataclass(frozen=True, eq=False)
class PredictorTable:
    name: str
    scores: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "scores", check_scores(self.scores))

    def on(self, labels):
        """Pair the scores with a label array of the same length."""
        return DiscreteDataset(self.scores, labels)


@dataclass(frozen=True)
class BoundReport:
    exact_ce: float
    binned_ece: float
    abs_bias: float
    exact_gap: float
    binned_gap: float
    chain_holds: bool


def build_counterexample():
    """Labels and the three predictors of the averaging counterexample.

    Points ``0..99`` are positive, ``100..299`` negative. The first 50
    negatives score 0 and the other 150 score 0.25 under both ``f1`` and
    ``f2``. ``f1`` gives positives ``0..49`` a score of 1 and positives
    ``50..99`` a score of 0.25; ``f2`` swaps the two halves. ``f3`` is their
    average.

    Returns ``(labels, f1, f2, f3)``.
    """
    half = N_POSITIVE // 2
    labels = np.concatenate([np.ones(N_POSITIVE, np.int8), np.zeros(N_NEGATIVE, np.int8)])
    negatives = np.full(N_NEGATIVE, 0.25)
    negatives[: N_NEGATIVE // 4] = 0.0
    pos1 = np.concatenate([np.ones(half), np.full(N_POSITIVE - half, 0.25)])
    pos2 = pos1[::-1].copy()
    f1 = PredictorTable("f1", np.concatenate([pos1, negatives]))
    f2 = PredictorTable("f2", np.concatenate([pos2, negatives]))
    f3 = convex_combine([f1, f2], [0.5, 0.5], name="f3")
    return labels, f1, f2, f3


def convex_combine(predictors, weights, name="combined"):
    """Pointwise weighted average of aligned predictors."""
    if not predictors:
        raise ValueError("need at least one predictor")
    weights = np.asarray(weights, dtype=np.float64).reshape(-1)
    if weights.size != len(predictors):
        raise ValueError(f"{len(predictors)} predictors but {weights.size} weights")
    if np.any(weights < 0) or not np.all(np.isfinite(weights)):
        raise ValueError("weights must be finite and nonnegative")
    if abs(fsum(weights) - 1.0) > BOUND_TOL:
        raise ValueError(f"weights must sum to 1, got {fsum(weights)!r}")
    check_same_length(*[p.scores for p in predictors], names=[p.name for p in predictors])
    stacked = np.stack([p.scores for p in predictors])
    combined = (weights[:, None] * stacked).sum(axis=0)
    return PredictorTable(name, np.clip(combined, 0.0, 1.0))


def verify_bound(data, binning=BinningScheme()):
    """Evaluate both sides of the calibration/bias bound on ``data``."""
    ce = exact_ce(data)
    ece = binned_ece(data, binning)
    abs_bias = abs(dataset_bias(data))
    holds = ce + BOUND_TOL >= ece and ece + BOUND_TOL >= abs_bias
    if not holds:
        # Unreachable for a correct implementation.
        logger.error(
            "BOUND VIOLATION: exact_ce=%r binned_ece=%r abs_bias=%r", ce, ece, abs_bias
        )
    return BoundReport(ce, ece, abs_bias, ce - abs_bias, ece - abs_bias, bool(holds))


def ratio_unboundedness_demo(gamma):
    """Return ``(dataset, ce, abs_bias)`` with ``ce > gamma * abs_bias``.

    The averaged counterexample has zero bias and positive calibration
    error, so it works for every finite ``gamma > 0``.
    """
    gamma = float(gamma)
    if not np.isfinite(gamma) or gamma <= 0:
        raise ValueError("gamma must be finite and positive")
    labels, _, _, f3 = build_counterexample()
    data = f3.on(labels)
    ce = exact_ce(data)
    abs_bias = abs(dataset_bias(data))
    assert ce > gamma * abs_bias
    return data, ce, abs_bias
