"""Cohort-level aggregation and correlation statistics.

Per-subject rows are averaged into a model summary, and correlations between
per-subject quantities (e.g. bias against lesion size) are reported with a
standard error of ``(1 - r**2) / sqrt(n)``.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from ._summation import fsum
from .exceptions import ConstantInputError, EmptyRegionError, ShapeMismatchError

logger = logging.getLogger(__name__)

__all__ = [
    "ModelSummary",
    "SubjectMetrics",
    "aggregate_cohort",
    "kendall_tau",
    "pareto_front",
    "pearson_r",
    "spearman_rho",
    "subgroup_correlations",
]


@dataclass(frozen=True)
class SubjectMetrics:
    subject_id: str
    ece: float
    bias_per_voxel: float
    bias_ml: float
    soft_volume_ml: float
    true_volume_ml: float
    dice: float
    exact_ce: float
    jensen_gap: float
    tags: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        object.__setattr__(self, "tags", frozenset(self.tags))
        for name in ("ece", "exact_ce", "dice"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} outside [0, 1] for subject {self.subject_id}")
        if self.ece + 1e-12 < abs(self.bias_per_voxel):
            raise ValueError(
                f"subject {self.subject_id}: ece {self.ece} < |bias| {abs(self.bias_per_voxel)}"
            )

    @property
    def abs_bias(self):
        return abs(self.bias_per_voxel)

    def tag_value(self, key):
        """Value of a ``key=value`` tag, or ``None``."""
        prefix = key + "="
        for tag in sorted(self.tags):
            if tag.startswith(prefix):
                return tag[len(prefix):]
        return None


@dataclass(frozen=True)
class ModelSummary:
    model_id: str
    mean_abs_bias: float
    mean_ece: float
    mean_dice: float
    n_subjects: int


def aggregate_cohort(rows, model_id):
    """Mean per-subject |bias|, ECE and Dice."""
    rows = list(rows)
    if not rows:
        raise EmptyRegionError("cohort is empty")
    n = len(rows)
    return ModelSummary(
        model_id,
        fsum([abs(r.bias_per_voxel) for r in rows]) / n,
        fsum([r.ece for r in rows]) / n,
        fsum([r.dice for r in rows]) / n,
        n,
    )


def _pair(x, y, min_n):
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if x.size != y.size:
        raise ShapeMismatchError(f"x has {x.size} values, y has {y.size}")
    if x.size < min_n:
        raise ValueError(f"need at least {min_n} points, got {x.size}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValueError("inputs must be finite")
    return x, y


def _pearson(x, y):
    xc = x - fsum(x) / x.size
    yc = y - fsum(y) / y.size
    sxx, syy = fsum(xc * xc), fsum(yc * yc)
    if sxx == 0.0 or syy == 0.0:
        raise ConstantInputError("correlation is undefined for a constant input")
    r = fsum(xc * yc) / math.sqrt(sxx * syy)
    return min(1.0, max(-1.0, r))


def pearson_r(x, y):
    """Sample Pearson correlation and its standard error ``(1 - r**2)/sqrt(n)``."""
    x, y = _pair(x, y, 3)
    r = _pearson(x, y)
    return r, (1.0 - r * r) / math.sqrt(x.size)


def spearman_rho(x, y):
    """Pearson correlation of average ranks."""
    x, y = _pair(x, y, 3)
    return _pearson(stats.rankdata(x), stats.rankdata(y))


def kendall_tau(x, y):
    """Tie-corrected Kendall tau-b."""
    x, y = _pair(x, y, 2)
    if np.ptp(x) == 0.0 or np.ptp(y) == 0.0:
        raise ConstantInputError("tau-b is undefined when one input is constant")
    return float(stats.kendalltau(x, y, variant="b").statistic)


def pareto_front(points, directions):
    """Ids of non-dominated points.

    ``points`` is a sequence of ``(id, objectives)``; ``directions`` holds
    ``"min"`` or ``"max"`` per objective. Points tied on every objective are
    all kept.
    """
    points = list(points)
    if not points:
        return set()
    ids = [p[0] for p in points]
    dims = {len(p[1]) for p in points}
    if len(dims) != 1 or len(directions) not in dims or 0 in dims:
        raise ShapeMismatchError("objective vectors and directions must share one length >= 1")
    sign = []
    for d in directions:
        if d not in ("min", "max"):
            raise ValueError(f"direction must be 'min' or 'max', got {d!r}")
        sign.append(1.0 if d == "min" else -1.0)
    obj = np.array([p[1] for p in points], dtype=np.float64) * np.array(sign)
    if not np.all(np.isfinite(obj)):
        raise ValueError("objectives must be finite")
    # dominated[i, j]: point j dominates point i
    no_worse = np.all(obj[None, :, :] <= obj[:, None, :], axis=2)
    better = np.any(obj[None, :, :] < obj[:, None, :], axis=2)
    dominated = np.any(no_worse & better, axis=1)
    return {pid for pid, d in zip(ids, dominated) if not d}


def _battery(x, y):
    r, se = pearson_r(x, y)
    return {
        "n": len(x),
        "pearson_r": r,
        "pearson_se": se,
        "spearman_rho": spearman_rho(x, y),
        "kendall_tau": kendall_tau(x, y),
    }


def subgroup_correlations(rows, tag, x_field, y_field):
    """Correlation battery per value of a ``key=value`` tag.

    With ``tag=None`` the whole cohort forms one group named ``"all"``.
    Groups with fewer than 3 rows are logged and skipped. Returns a dict
    mapping group name to ``{n, pearson_r, pearson_se, spearman_rho,
    kendall_tau}`` in order of first appearance.
    """
    groups = {}
    for row in rows:
        key = "all" if tag is None else row.tag_value(tag)
        if key is not None:
            groups.setdefault(key, []).append(row)
    out = {}
    for key, members in groups.items():
        if len(members) < 3:
            logger.warning("group %r has %d subjects; skipped (need 3)", key, len(members))
            continue
        x = [_field(r, x_field) for r in members]
        y = [_field(r, y_field) for r in members]
        out[key] = _battery(x, y)
    return out


def _field(row, name):
    if name == "abs_bias":
        return row.abs_bias
    return float(getattr(row, name))
