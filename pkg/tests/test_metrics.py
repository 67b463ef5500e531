import math

import numpy as np
import pytest

from heatblur import (
    benign_relevance_scores,
    dcg,
    matched_relevance,
    ndcg,
    ndcg_curve,
    ndcg_report,
    topk_accuracy,
)
from heatblur.model import Prediction, softmax


def make_prediction(logits):
    logits = np.asarray(logits, dtype=np.float64)
    probabilities = softmax(logits)
    ranking = np.argsort(-probabilities, kind="stable")
    return Prediction(logits, probabilities, ranking)


# --- independent brute-force oracle ------------------------------------------
# Written from the definitions with plain loops; shares no code with the
# library implementation.


def oracle_prefix(prediction, coverage):
    ordered = sorted(range(len(prediction.logits)),
                     key=lambda c: (-prediction.probabilities[c], c))
    total = 0.0
    k = 0
    for cls in ordered:
        total += prediction.probabilities[cls]
        if total > coverage + 1e-12:
            break
        k += 1
    return max(1, k), ordered


def oracle_scores(prediction, coverage):
    k1, ordered = oracle_prefix(prediction, coverage)
    scored = ordered[:k1]
    denom = sum(prediction.logits[c] for c in scored)
    result = [0.0] * len(prediction.logits)
    if denom > 0.0:
        for c in scored:
            result[c] = max(prediction.logits[c] / denom, 0.0)
    return result, k1, denom <= 0.0


def oracle_matched(benign, other, coverage_benign, coverage_other):
    scores, _, _ = oracle_scores(benign, coverage_benign)
    k2, ordered = oracle_prefix(other, coverage_other)
    return [scores[ordered[j]] if j < k2 else 0.0 for j in range(len(ordered))], k2


def oracle_dcg(values, k):
    return sum((2.0 ** values[j] - 1.0) / math.log2(j + 2) for j in range(k))


def oracle_ndcg(benign, other, coverage_benign, coverage_other, k):
    scores, k1, degenerate = oracle_scores(benign, coverage_benign)
    if degenerate:
        return 0.0
    _, benign_order = oracle_prefix(benign, coverage_benign)
    ideal = oracle_dcg([scores[c] for c in benign_order], min(k, k1))
    if ideal == 0.0:
        return 0.0
    matched, k2 = oracle_matched(benign, other, coverage_benign, coverage_other)
    value = oracle_dcg(matched, min(k, k2)) / ideal
    return 1.0 if 1.0 < value <= 1.0 + 1e-12 else value


# --- tests --------------------------------------------------------------------


class TestBenignRelevanceScores:
    def test_floor_keeps_top_class_when_coverage_tiny(self):
        prediction = make_prediction([6.0, 0.7])  # probabilities ~ [0.995, 0.005]
        assert prediction.probabilities[0] > 0.99
        scores = benign_relevance_scores(prediction, 0.99)
        assert scores.scored_count == 1
        np.testing.assert_allclose(scores.scores, [1.0, 0.0])

    def test_three_equal_logits(self):
        prediction = make_prediction([1.0, 1.0, 1.0])
        scores = benign_relevance_scores(prediction, 0.99)
        assert scores.scored_count == 2
        np.testing.assert_allclose(scores.scores, [0.5, 0.5, 0.0], atol=1e-12)

    def test_full_coverage_scores_every_class(self):
        prediction = make_prediction([2.0, 1.0, 0.5, -0.2])
        scores = benign_relevance_scores(prediction, 1.0)
        assert scores.scored_count == 4

    def test_negative_normalized_scores_clamped(self):
        prediction = make_prediction([5.0, 4.0, -0.5])
        scores = benign_relevance_scores(prediction, 1.0)
        assert scores.scores[2] == 0.0
        assert not scores.degenerate

    def test_nonpositive_scored_sum_is_degenerate(self):
        prediction = make_prediction([-1.0, -2.0, -3.0])
        scores = benign_relevance_scores(prediction, 0.5)
        assert scores.degenerate
        np.testing.assert_array_equal(scores.scores, np.zeros(3))

    def test_coverage_out_of_range_rejected(self):
        with pytest.raises(ValueError):
            benign_relevance_scores(make_prediction([1.0, 0.0]), 1.5)


class TestMatchedRelevance:
    def test_identical_prediction_reproduces_benign_order(self):
        prediction = make_prediction([3.0, 2.0, 1.0])
        scores = benign_relevance_scores(prediction, 0.99)
        matched, k2 = matched_relevance(scores, prediction, 0.99)
        np.testing.assert_allclose(matched, scores.scores[prediction.ranking])
        assert k2 == scores.scored_count

    def test_unscored_top_class_gets_zero(self):
        benign = make_prediction([6.0, 0.7, 0.0])
        scores = benign_relevance_scores(benign, 0.99)  # only class 0 scored
        other = make_prediction([0.0, 8.0, 0.0])  # class 1 dominates: K2 = 1
        matched, k2 = matched_relevance(scores, other, 0.5)
        assert k2 == 1
        np.testing.assert_array_equal(matched, [0.0, 0.0, 0.0])

    def test_top_two_swap(self):
        # top-2 probability mass stays within 0.99, so exactly {0, 1} are
        # scored and normalize to [0.6, 0.4]
        benign = make_prediction([0.6, 0.4, -3.0])
        scores = benign_relevance_scores(benign, 0.99)
        assert scores.scored_count == 2
        np.testing.assert_allclose(scores.scores, [0.6, 0.4, 0.0], atol=1e-12)
        other = make_prediction([0.4, 0.6, -3.0])
        matched, k2 = matched_relevance(scores, other, 0.99)
        assert k2 == 2
        np.testing.assert_allclose(matched, [0.4, 0.6, 0.0], atol=1e-12)


class TestDcg:
    def test_single_unit_relevance(self):
        assert dcg([1.0], 1) == pytest.approx(1.0)

    def test_two_position_example(self):
        value = dcg([0.6, 0.4], 2)
        expected = (2**0.6 - 1) / 1.0 + (2**0.4 - 1) / math.log2(3)
        assert value == pytest.approx(expected, abs=1e-12)
        assert value == pytest.approx(0.71729, abs=5e-5)

    def test_k_zero_is_empty_sum(self):
        assert dcg([0.5, 0.5], 0) == 0.0

    def test_monotone_in_k_and_values(self, rng):
        values = rng.uniform(0, 1, size=8)
        series = [dcg(values, k) for k in range(9)]
        assert all(b >= a for a, b in zip(series, series[1:]))
        bumped = values.copy()
        bumped[3] += 0.2
        assert dcg(bumped, 8) > dcg(values, 8)

    def test_k_beyond_length_rejected(self):
        with pytest.raises(ValueError):
            dcg([1.0], 2)


class TestNdcg:
    def test_identity_is_one(self, rng):
        for _ in range(20):
            prediction = make_prediction(rng.uniform(0.1, 4.0, size=5))
            for k in range(1, 6):
                assert ndcg(prediction, prediction, 0.99, 0.99, k) == pytest.approx(1.0, abs=1e-12)

    def test_unscored_top1_with_k2_one_scores_zero(self):
        benign = make_prediction([6.0, 0.7, 0.0])
        other = make_prediction([0.0, 8.0, 0.0])
        assert ndcg(benign, other, 0.99, 0.5, 1) == 0.0

    def test_top_two_swap_below_one(self):
        benign = make_prediction([0.6, 0.4, -3.0])
        other = make_prediction([0.4, 0.6, -3.0])
        value = ndcg(benign, other, 0.99, 0.99, 2)
        expected = oracle_dcg([0.4, 0.6], 2) / oracle_dcg([0.6, 0.4], 2)
        assert value == pytest.approx(expected, abs=1e-12)
        assert value < 1.0

    def test_degenerate_benign_scores_zero(self):
        benign = make_prediction([-1.0, -2.0])
        other = make_prediction([1.0, 0.0])
        assert ndcg(benign, other, 0.9, 0.9, 1) == 0.0

    def test_matches_oracle_on_random_pairs(self, rng):
        for _ in range(300):
            n = int(rng.integers(2, 11))
            benign = make_prediction(rng.normal(0, 2, size=n))
            other = make_prediction(rng.normal(0, 2, size=n))
            cb = float(rng.uniform(0.3, 1.0))
            ca = float(rng.uniform(0.3, 1.0))
            k = int(rng.integers(1, n + 1))
            value = ndcg(benign, other, cb, ca, k)
            assert value == pytest.approx(oracle_ndcg(benign, other, cb, ca, k), abs=1e-10)
            assert 0.0 <= value <= 1.0

    def test_reordering_below_scored_prefix_is_irrelevant(self, rng):
        benign = make_prediction([4.0, 3.0, 0.1, 0.05, 0.02])
        base = make_prediction([4.0, 3.0, 0.1, 0.05, 0.02])
        permuted = make_prediction([4.0, 3.0, 0.1, 0.02, 0.05])
        for k in range(1, 6):
            a = ndcg(benign, base, 0.99, 0.99, k)
            b = ndcg(benign, permuted, 0.99, 0.99, k)
            assert a == pytest.approx(b, abs=1e-12)

    def test_curve_shape(self):
        benign = make_prediction([3.0, 2.0, 1.0])
        curve = ndcg_curve(benign, benign, [1, 2, 3])
        assert curve.shape == (3,)
        np.testing.assert_allclose(curve, 1.0, atol=1e-12)


class TestTopkAccuracy:
    def test_all_correct(self):
        predictions = [make_prediction([3.0, 1.0]), make_prediction([0.1, 2.0])]
        assert topk_accuracy(predictions, [0, 1], 1) == 1.0

    def test_label_at_rank_two(self):
        predictions = [make_prediction([1.0, 3.0])] * 4
        assert topk_accuracy(predictions, [0, 0, 0, 0], 1) == 0.0
        assert topk_accuracy(predictions, [0, 0, 0, 0], 2) == 1.0

    def test_random_labels_many_classes(self, rng):
        predictions = []
        labels = []
        for _ in range(1000):
            predictions.append(make_prediction(rng.normal(size=1000)))
            labels.append(int(rng.integers(0, 1000)))
        assert topk_accuracy(predictions, labels, 5) == pytest.approx(0.005, abs=0.01)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            topk_accuracy([], [], 1)


class TestNdcgReport:
    def test_means_match_per_image_values(self, rng):
        benign = [make_prediction(rng.uniform(0.5, 3.0, size=4)) for _ in range(15)]
        other = [make_prediction(rng.uniform(0.5, 3.0, size=4)) for _ in range(15)]
        labels = [p.top1 for p in benign]
        report = ndcg_report(benign, other, labels, ks=(1, 2, 3))
        np.testing.assert_allclose(report.mean_ndcg, report.per_image.mean(axis=0), atol=1e-12)
        assert report.count == 15

    def test_empty_group(self):
        report = ndcg_report([], [], [], ks=(1, 2))
        assert report.count == 0
        assert math.isnan(report.top1_accuracy)
