import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from volcal.exceptions import EmptyRegionError, ShapeMismatchError
from volcal.metrics import (
    BinningScheme,
    DiscreteDataset,
    LabelVolume,
    ProbVolume,
    binned_ece,
    dataset_bias,
    dice,
    exact_ce,
    jensen_gap,
    marginal_ece,
    reliability_curve,
    soft_volume,
    volume_bias,
)

from oracles import bias_oracle, binned_ece_oracle, grouped_ce

SCORES = [0.8, 0.6, 0.1, 0.3]
LABELS = [1, 0, 0, 1]


def vol(scores, mask=None, vml=1.0):
    scores = np.asarray(scores, dtype=float)
    return ProbVolume(scores, (scores.size, 1, 1), vml, mask)


def lab(labels, vml=1.0):
    labels = np.asarray(labels)
    return LabelVolume(labels, (labels.size, 1, 1), vml)


@st.composite
def datasets(draw, scores=st.floats(0, 1), max_size=80):
    s = draw(st.lists(scores, min_size=1, max_size=max_size))
    y = draw(st.lists(st.integers(0, 1), min_size=len(s), max_size=len(s)))
    return DiscreteDataset(s, y)


class TestTypes:
    def test_prob_volume_rejects_out_of_range(self):
        with pytest.raises(ValueError):
            vol([0.2, 1.1])

    def test_prob_volume_rejects_nan(self):
        with pytest.raises(ValueError):
            vol([0.2, np.nan])

    def test_dims_must_match_length(self):
        with pytest.raises(ShapeMismatchError):
            ProbVolume(np.zeros(7), (2, 2, 2))

    def test_mask_length(self):
        with pytest.raises(ShapeMismatchError):
            vol([0.1, 0.2], mask=[1, 0, 1])

    def test_label_volume_binary(self):
        with pytest.raises(ValueError):
            lab([0, 2])

    def test_binning_rejects_zero(self):
        with pytest.raises(ValueError):
            BinningScheme(0)

    def test_bins_partition_unit_interval(self):
        b = BinningScheme(20)
        assert list(b.assign([0.0, 0.2, 0.24, 0.25, 0.999, 1.0])) == [0, 4, 4, 5, 19, 19]

    @given(st.floats(0, 1), st.integers(1, 50))
    def test_every_score_in_exactly_one_bin(self, s, nb):
        b = BinningScheme(nb)
        i = int(b.assign([s])[0])
        lo, hi = b.edges[i], b.edges[i + 1]
        assert lo <= s and (s < hi or (i == nb - 1 and s <= 1.0))


class TestSoftVolume:
    def test_saturated(self):
        assert soft_volume(vol(np.ones(100), vml=0.001)) == pytest.approx(0.1, abs=1e-15)

    def test_zero(self):
        assert soft_volume(vol(np.zeros(10))) == 0.0

    def test_summation(self):
        assert soft_volume(vol(SCORES)) == pytest.approx(1.8, abs=1e-15)

    def test_mask_excludes_voxels(self):
        assert soft_volume(vol(SCORES, mask=[1, 1, 0, 0])) == pytest.approx(1.4, abs=1e-15)

    def test_empty_mask(self):
        with pytest.raises(EmptyRegionError):
            soft_volume(vol(SCORES, mask=[0, 0, 0, 0]))


class TestVolumeBias:
    def test_perfect_predictor(self):
        assert volume_bias(vol([1.0, 0.0, 1.0]), lab([1, 0, 1])) == (0.0, 0.0)

    def test_hand_example(self):
        per_voxel, ml = volume_bias(vol(SCORES), lab(LABELS))
        assert per_voxel == pytest.approx(-0.05, abs=1e-15)
        assert ml == pytest.approx(-0.2, abs=1e-15)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatchError):
            volume_bias(vol(SCORES), lab([1, 0, 0]))

    def test_voxel_size_mismatch(self):
        with pytest.raises(ShapeMismatchError):
            volume_bias(vol(SCORES, vml=2.0), lab(LABELS))

    @given(st.lists(st.floats(0, 1), min_size=1, max_size=50), st.data())
    def test_soft_minus_true_is_bias_ml(self, scores, data):
        labels = data.draw(st.lists(st.integers(0, 1), min_size=len(scores), max_size=len(scores)))
        p, l = vol(scores, vml=0.003), lab(labels, vml=0.003)
        _, bias_ml = volume_bias(p, l)
        assert soft_volume(p) - 0.003 * sum(labels) == bias_ml


class TestExactCE:
    def test_constant_at_prevalence(self):
        assert exact_ce(DiscreteDataset([0.25] * 4, [1, 0, 0, 0])) == 0.0

    def test_distinct_scores(self):
        assert exact_ce(DiscreteDataset(SCORES, LABELS)) == pytest.approx(0.4, abs=1e-15)

    def test_empty(self):
        with pytest.raises(EmptyRegionError):
            exact_ce(DiscreteDataset([], []))

    @given(datasets(scores=st.integers(0, 16).map(lambda k: k / 16)))
    def test_matches_rational_oracle(self, d):
        assert exact_ce(d) == pytest.approx(float(grouped_ce(d.scores, d.labels)), abs=1e-12)


class TestBinnedECE:
    def test_separated(self):
        assert binned_ece(DiscreteDataset([0.0, 1.0, 1.0], [0, 1, 1])) == 0.0

    def test_single_bin(self):
        assert binned_ece(DiscreteDataset([0.20, 0.24], [0, 1])) == pytest.approx(0.28, abs=1e-15)

    def test_empty(self):
        with pytest.raises(EmptyRegionError):
            binned_ece(DiscreteDataset([], []))

    @given(datasets(), st.integers(1, 30))
    def test_matches_rational_oracle(self, d, nb):
        expected = float(binned_ece_oracle(d.scores, d.labels, nb))
        assert binned_ece(d, BinningScheme(nb)) == pytest.approx(expected, abs=1e-12)

    @given(datasets(), st.sampled_from([(20, 2), (20, 4), (20, 5), (20, 10), (20, 20), (12, 3)]))
    def test_coarsening_never_increases(self, d, scheme):
        nb, factor = scheme
        fine = BinningScheme(nb)
        assert binned_ece(d, fine.coarsen(factor)) <= binned_ece(d, fine) + 1e-12


class TestReliabilityCurve:
    def test_symmetric(self):
        curve = reliability_curve(DiscreteDataset([0.5] * 4, [1, 0, 1, 0]))
        nonempty = [b for b in curve.bins if b[2] > 0]
        assert nonempty == [(0.5, 0.5, 4)]

    def test_single_bin_values(self):
        curve = reliability_curve(DiscreteDataset([0.20, 0.24], [0, 1]))
        conf, freq, n = curve.bins[4]
        assert conf == pytest.approx(0.22, abs=1e-15) and freq == 0.5 and n == 2

    def test_empty_bins_have_no_values(self):
        curve = reliability_curve(DiscreteDataset([0.20, 0.24], [0, 1]))
        assert curve.bins[0] == (None, None, 0)
        assert np.isnan(curve.mean_confidence[0]) and np.isnan(curve.empirical_frequency[0])

    @given(datasets())
    def test_counts_and_ece_recoverable(self, d):
        curve = reliability_curve(d)
        assert curve.counts.sum() == curve.total == len(d)
        assert curve.ece() == binned_ece(d)
        ok = curve.counts > 0
        assert np.all((curve.mean_confidence[ok] >= 0) & (curve.mean_confidence[ok] <= 1))
        assert np.all((curve.empirical_frequency[ok] >= 0) & (curve.empirical_frequency[ok] <= 1))


class TestMarginalECE:
    def test_one_hot(self):
        probs = np.eye(3)[:, [0, 1, 2, 1]]
        assert marginal_ece(probs, [0, 1, 2, 1]) == 0.0

    def test_binary_complement(self):
        rng = np.random.default_rng(3)
        s = rng.random(200)
        y = (rng.random(200) < s).astype(int)
        probs = np.vstack([1 - s, s])
        expected = binned_ece(DiscreteDataset(s, y))
        assert marginal_ece(probs, y) == pytest.approx(expected, abs=1e-12)

    def test_three_classes_mean_of_binary(self):
        rng = np.random.default_rng(11)
        raw = rng.random((3, 40))
        probs = raw / raw.sum(axis=0)
        y = rng.integers(0, 3, 40)
        per_class = [
            float(binned_ece_oracle(probs[k], (y == k).astype(int), 20)) for k in range(3)
        ]
        assert marginal_ece(probs, y) == pytest.approx(sum(per_class) / 3, abs=1e-12)

    def test_row_sum_violation(self):
        with pytest.raises(ValueError):
            marginal_ece(np.array([[0.5, 0.5], [0.6, 0.5]]), [0, 1])

    def test_needs_two_classes(self):
        with pytest.raises(ValueError):
            marginal_ece(np.array([[1.0, 1.0]]), [0, 0])

    def test_length_mismatch(self):
        with pytest.raises(ShapeMismatchError):
            marginal_ece(np.array([[0.5, 0.5], [0.5, 0.5]]), [0])


class TestDice:
    def test_identical(self):
        assert dice(vol([0.9, 0.1, 0.7]), lab([1, 0, 1])) == 1.0

    def test_disjoint(self):
        assert dice(vol([0.9, 0.1]), lab([0, 1])) == 0.0

    def test_half_overlap(self):
        assert dice(vol([0.9, 0.8, 0.1]), lab([1, 0, 1])) == 0.5

    def test_both_empty(self):
        assert dice(vol([0.1, 0.2]), lab([0, 0])) == 1.0

    def test_threshold_range(self):
        with pytest.raises(ValueError):
            dice(vol([0.1]), lab([0]), threshold=1.0)


class TestJensenGap:
    def test_calibrated(self):
        d = DiscreteDataset([0.5] * 4 + [0.0] * 2, [1, 0, 1, 0, 0, 0])
        exact_gap, binned_gap = jensen_gap(d)
        assert exact_gap == 0.0 and binned_gap == binned_ece(d) >= 0

    def test_hand_example(self):
        exact_gap, _ = jensen_gap(DiscreteDataset(SCORES, LABELS))
        assert exact_gap == pytest.approx(0.35, abs=1e-15)


class TestInvariants:
    @given(datasets(), st.integers(1, 40))
    def test_bound_chain(self, d, nb):
        b = BinningScheme(nb)
        ce, ece, bias = exact_ce(d), binned_ece(d, b), abs(dataset_bias(d))
        assert ce + 1e-12 >= ece
        assert ece + 1e-12 >= bias

    @given(datasets(scores=st.integers(0, 16).map(lambda k: k / 16)))
    def test_total_expectation_identity(self, d):
        values, inverse, counts = np.unique(d.scores, return_inverse=True, return_counts=True)
        freq = np.bincount(inverse, weights=d.labels) / counts
        assert round(float(np.dot(counts, freq))) == int(d.labels.sum())
        assert abs(float(np.dot(counts, freq)) - d.labels.sum()) < 1e-9

    @given(st.lists(st.tuples(st.integers(1, 7), st.integers(0, 7)), min_size=1, max_size=6))
    def test_exact_calibration_forces_zero_bias(self, groups):
        # Each group: n points at score pos/n with pos positives.
        scores, labels = [], []
        for n, pos in groups:
            pos = min(pos, n)
            scores += [pos / n] * n
            labels += [1] * pos + [0] * (n - pos)
        d = DiscreteDataset(scores, labels)
        assert exact_ce(d) == 0.0
        assert abs(dataset_bias(d)) < 1e-12

    @given(datasets(), st.randoms(use_true_random=False))
    def test_permutation_invariance(self, d, rnd):
        perm = list(range(len(d)))
        rnd.shuffle(perm)
        e = DiscreteDataset(d.scores[perm], d.labels[perm])
        assert exact_ce(e) == exact_ce(d)
        assert binned_ece(e) == binned_ece(d)
        assert dataset_bias(e) == dataset_bias(d)

    @settings(max_examples=50)
    @given(datasets())
    def test_ranges(self, d):
        assert 0.0 <= exact_ce(d) <= 1.0
        assert 0.0 <= binned_ece(d) <= 1.0
        assert -1.0 <= dataset_bias(d) <= 1.0

    @given(datasets(scores=st.integers(0, 16).map(lambda k: k / 16)))
    def test_bias_matches_oracle(self, d):
        assert dataset_bias(d) == pytest.approx(float(bias_oracle(d.scores, d.labels)), abs=1e-15)
