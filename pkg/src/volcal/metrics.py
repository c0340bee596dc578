"""Calibration and volume metrics for probabilistic segmentations.

All metrics operate either on a :class:`DiscreteDataset` of flat
``(score, label)`` pairs or on a :class:`ProbVolume` / :class:`LabelVolume`
pair, in which case only voxels inside the evaluation mask are used.

Bias follows the ``score - label`` sign convention: a positive bias means the
soft volume overestimates the true volume.
"""

from dataclasses import dataclass, field

import numpy as np

from ._summation import fsum, grouped_fsum
from ._validation import (
    check_binary_labels,
    check_dims,
    check_positive,
    check_same_length,
    check_scores,
)
from .exceptions import EmptyRegionError, ShapeMismatchError

__all__ = [
    "BinningScheme",
    "DiscreteDataset",
    "LabelVolume",
    "ProbVolume",
    "ReliabilityCurve",
    "accuracy",
    "binned_ece",
    "dataset_bias",
    "dice",
    "exact_ce",
    "jensen_gap",
    "marginal_ece",
    "reliability_curve",
    "soft_volume",
    "to_dataset",
    "volume_bias",
]

ROW_SUM_TOL = 1e-6


@dataclass(frozen=True, eq=False)
class ProbVolume:
    """Per-voxel confidence scores of one subject.

    ``scores`` and ``mask`` are flat arrays in C order over ``dims``. A
    missing mask means the whole volume is evaluated.
    """

    scores: np.ndarray
    dims: tuple
    voxel_volume_ml: float = 1.0
    mask: np.ndarray | None = None

    def __post_init__(self):
        dims = check_dims(self.dims)
        scores = check_scores(self.scores)
        if scores.size != int(np.prod(dims)):
            raise ShapeMismatchError(
                f"dims {dims} imply {int(np.prod(dims))} voxels, got {scores.size} scores"
            )
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "scores", scores)
        object.__setattr__(
            self, "voxel_volume_ml", check_positive(self.voxel_volume_ml, "voxel_volume_ml")
        )
        if self.mask is not None:
            mask = check_binary_labels(self.mask, name="mask").astype(bool)
            check_same_length(scores, mask, names=["scores", "mask"])
            object.__setattr__(self, "mask", mask)

    @property
    def n_voxels(self):
        return self.scores.size

    def masked_scores(self):
        scores = self.scores if self.mask is None else self.scores[self.mask]
        if scores.size == 0:
            raise EmptyRegionError("evaluation mask selects no voxels")
        return scores


@dataclass(frozen=True, eq=False)
class LabelVolume:
    """Binary ground-truth labels of one subject, flat in C order."""

    labels: np.ndarray
    dims: tuple
    voxel_volume_ml: float = 1.0

    def __post_init__(self):
        dims = check_dims(self.dims)
        labels = check_binary_labels(self.labels)
        if labels.size != int(np.prod(dims)):
            raise ShapeMismatchError(
                f"dims {dims} imply {int(np.prod(dims))} voxels, got {labels.size} labels"
            )
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(
            self, "voxel_volume_ml", check_positive(self.voxel_volume_ml, "voxel_volume_ml")
        )


@dataclass(frozen=True, eq=False)
class DiscreteDataset:
    """Flat, aligned arrays of confidence scores and binary labels."""

    scores: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        scores = check_scores(self.scores, allow_empty=True)
        labels = check_binary_labels(self.labels, allow_empty=True)
        check_same_length(scores, labels, names=["scores", "labels"])
        object.__setattr__(self, "scores", scores)
        object.__setattr__(self, "labels", labels)

    def __len__(self):
        return self.scores.size

    def _require_nonempty(self):
        if self.scores.size == 0:
            raise EmptyRegionError("dataset is empty")


@dataclass(frozen=True)
class BinningScheme:
    """Equal-width bins over [0, 1].

    Bin ``i`` covers ``[i/B, (i+1)/B)``; the last bin is closed at 1.0. Edges
    are the doubles nearest to ``i/B`` and membership is decided by comparing
    scores against those doubles.
    """

    num_bins: int = 20

    def __post_init__(self):
        if int(self.num_bins) != self.num_bins or self.num_bins < 1:
            raise ValueError(f"num_bins must be a positive integer, got {self.num_bins}")
        object.__setattr__(self, "num_bins", int(self.num_bins))

    @property
    def edges(self):
        return np.arange(self.num_bins + 1, dtype=np.float64) / self.num_bins

    def assign(self, scores):
        scores = np.asarray(scores, dtype=np.float64)
        idx = np.searchsorted(self.edges, scores, side="right") - 1
        return np.clip(idx, 0, self.num_bins - 1)

    def coarsen(self, factor):
        """Scheme whose bins are unions of ``factor`` adjacent bins of this one."""
        if self.num_bins % factor:
            raise ValueError(f"{factor} does not divide {self.num_bins}")
        return BinningScheme(self.num_bins // factor)


@dataclass(frozen=True, eq=False)
class ReliabilityCurve:
    """Per-bin mean confidence, positive frequency and count.

    Empty bins have ``count == 0`` and NaN confidence/frequency.
    """

    edges: np.ndarray
    mean_confidence: np.ndarray
    empirical_frequency: np.ndarray
    counts: np.ndarray
    total: int = field(default=0)

    @property
    def num_bins(self):
        return self.counts.size

    @property
    def bins(self):
        """List of ``(mean_confidence, empirical_frequency, count)``; ``None`` marks empty bins."""
        out = []
        for conf, freq, n in zip(self.mean_confidence, self.empirical_frequency, self.counts):
            if n == 0:
                out.append((None, None, 0))
            else:
                out.append((float(conf), float(freq), int(n)))
        return out

    def ece(self):
        nonempty = self.counts > 0
        gaps = self.counts[nonempty] * np.abs(
            self.empirical_frequency[nonempty] - self.mean_confidence[nonempty]
        )
        return fsum(gaps) / self.total


def to_dataset(prob, label):
    """Pair the masked voxels of a prediction and its ground truth."""
    if prob.dims != label.dims:
        raise ShapeMismatchError(f"dims differ: {prob.dims} vs {label.dims}")
    if prob.voxel_volume_ml != label.voxel_volume_ml:
        raise ShapeMismatchError(
            f"voxel volumes differ: {prob.voxel_volume_ml} vs {label.voxel_volume_ml}"
        )
    scores = prob.masked_scores()
    labels = label.labels if prob.mask is None else label.labels[prob.mask]
    return DiscreteDataset(scores, labels)


def soft_volume(prob):
    """Expected volume in ml: voxel size times the sum of masked scores."""
    return fsum(prob.masked_scores()) * prob.voxel_volume_ml


def _bias_parts(data):
    data._require_nonempty()
    score_sum = fsum(data.scores)
    positives = int(np.count_nonzero(data.labels))
    return score_sum, positives


def dataset_bias(data):
    """Mean of ``score - label`` over a dataset."""
    score_sum, positives = _bias_parts(data)
    return (score_sum - positives) / len(data)


def volume_bias(prob, label):
    """Return ``(bias_per_voxel, bias_ml)``.

    ``bias_ml`` is the soft volume minus the true volume, both in ml.
    """
    data = to_dataset(prob, label)
    score_sum, positives = _bias_parts(data)
    per_voxel = (score_sum - positives) / len(data)
    v = prob.voxel_volume_ml
    return per_voxel, score_sum * v - positives * v


def exact_ce(data):
    """Calibration error with score groups defined by bit-identical scores.

    The conditional positive frequency of each distinct score is estimated
    by its within-group label mean.
    """
    data._require_nonempty()
    values, inverse, counts = np.unique(data.scores, return_inverse=True, return_counts=True)
    positives = np.bincount(inverse, weights=data.labels, minlength=values.size)
    freq = positives / counts
    return fsum(counts * np.abs(freq - values)) / len(data)


def reliability_curve(data, binning=BinningScheme()):
    data._require_nonempty()
    b = binning.num_bins
    idx = binning.assign(data.scores)
    counts = np.bincount(idx, minlength=b)
    score_sums = grouped_fsum(data.scores, idx, b)
    positives = np.bincount(idx, weights=data.labels, minlength=b)
    with np.errstate(invalid="ignore", divide="ignore"):
        conf = np.where(counts > 0, score_sums / counts, np.nan)
        freq = np.where(counts > 0, positives / counts, np.nan)
    return ReliabilityCurve(binning.edges, conf, freq, counts, total=len(data))


def binned_ece(data, binning=BinningScheme()):
    """Bin-mass weighted mean of ``|frequency - mean confidence|``; empty bins add 0."""
    return reliability_curve(data, binning).ece()


def marginal_ece(probs, labels, binning=BinningScheme()):
    """Mean one-vs-rest binned ECE over classes.

    ``probs`` has shape ``(K, N)``; each column must sum to 1 within 1e-6 and
    is renormalized before binning.
    """
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels).reshape(-1)
    if probs.ndim != 2 or probs.shape[0] < 2:
        raise ValueError("probs must have shape (K, N) with K >= 2")
    if probs.shape[1] != labels.size:
        raise ShapeMismatchError(f"{probs.shape[1]} points but {labels.size} labels")
    if probs.shape[1] == 0:
        raise EmptyRegionError("no points")
    if not np.all(np.isfinite(probs)) or probs.min() < 0:
        raise ValueError("class scores must be finite and nonnegative")
    sums = probs.sum(axis=0)
    if np.max(np.abs(sums - 1.0)) > ROW_SUM_TOL:
        raise ValueError("class scores of each point must sum to 1")
    probs = np.clip(probs / sums, 0.0, 1.0)
    k = probs.shape[0]
    if not np.all(np.isin(labels, np.arange(k))):
        raise ValueError(f"labels must be class indices in [0, {k})")
    per_class = [
        binned_ece(DiscreteDataset(probs[c], labels == c), binning) for c in range(k)
    ]
    return fsum(per_class) / k


def dice(prob, label, threshold=0.5):
    """Dice overlap of ``score >= threshold`` with the labels on masked voxels.

    Two empty sets score 1.
    """
    if not 0.0 < threshold < 1.0:
        raise ValueError("threshold must lie in (0, 1)")
    data = to_dataset(prob, label)
    pred = data.scores >= threshold
    truth = data.labels.astype(bool)
    denom = int(np.count_nonzero(pred)) + int(np.count_nonzero(truth))
    if denom == 0:
        return 1.0
    return 2.0 * int(np.count_nonzero(pred & truth)) / denom


def accuracy(data, threshold=0.5):
    data._require_nonempty()
    return float(np.mean((data.scores >= threshold) == data.labels.astype(bool)))


def jensen_gap(data, binning=BinningScheme()):
    """Slack of the calibration bound: ``(exact_ce - |bias|, binned_ece - |bias|)``."""
    abs_bias = abs(dataset_bias(data))
    return exact_ce(data) - abs_bias, binned_ece(data, binning) - abs_bias
