"""Ranking-quality evaluation: graded relevance from benign predictions, DCG, and NDCG.

A benign prediction grades its own top classes: the scored set is the
longest ranking prefix whose probability mass stays within a coverage
budget (never empty), and each scored class receives its logit normalized
by the scored logits' sum.  Another prediction of the same image is then
scored by placing those grades at the positions its own ranking assigns to
the graded classes, and the discounted cumulative gains of the two lists
are compared.  Matching orderings score 1; rearrangements and class
replacements decay toward 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import Prediction

__all__ = [
    "RelevanceScores",
    "scored_prefix_length",
    "benign_relevance_scores",
    "matched_relevance",
    "dcg",
    "ndcg",
    "ndcg_curve",
    "topk_accuracy",
    "NdcgReport",
    "ndcg_report",
]

# Absorbs float summation fuzz so a coverage of 1.0 scores every class even
# when the probabilities sum to 1 + 1 ulp.
_COVERAGE_TOL = 1e-12


@dataclass
class RelevanceScores:
    """Per-class relevance grades derived from one benign prediction.

    scores holds zeros outside the scored ranking prefix of length
    scored_count.  degenerate marks the edge case where the scored logits
    sum to <= 0, leaving no usable grading (all scores zero); comparisons
    against a degenerate grading are defined as 0.
    """

    scores: np.ndarray
    scored_count: int
    coverage: float
    degenerate: bool = False


def scored_prefix_length(prediction: Prediction, coverage: float) -> int:
    """Longest ranking prefix whose probability mass is <= coverage, floored at 1."""
    if not 0.0 <= coverage <= 1.0:
        raise ValueError(f"coverage must lie in [0, 1], got {coverage}")
    cumulative = 0.0
    count = 0
    for cls in prediction.ranking:
        cumulative += float(prediction.probabilities[cls])
        if cumulative <= coverage + _COVERAGE_TOL:
            count += 1
        else:
            break
    return max(count, 1)


def benign_relevance_scores(prediction: Prediction, coverage: float = 0.99) -> RelevanceScores:
    """Grade the scored prefix by normalized logits, clamping negatives to zero."""
    k1 = scored_prefix_length(prediction, coverage)
    scored = prediction.ranking[:k1]
    total = float(prediction.logits[scored].sum())
    scores = np.zeros(len(prediction.ranking))
    degenerate = total <= 0.0
    if not degenerate:
        scores[scored] = np.maximum(prediction.logits[scored] / total, 0.0)
    return RelevanceScores(scores, k1, float(coverage), degenerate)


def matched_relevance(
    scores: RelevanceScores, prediction: Prediction, coverage: float = 0.99
) -> tuple[np.ndarray, int]:
    """Place benign grades at the positions another ranking gives their classes.

    Position j receives the benign grade of the class ranked j-th by
    ``prediction`` when j is within that prediction's own scored prefix
    (length K2, same floor-at-1 rule), and 0 beyond it or for ungraded
    classes.  Returns the per-position list and K2.
    """
    if len(prediction.ranking) != len(scores.scores):
        raise ValueError(
            f"predictions disagree on the class universe: {len(prediction.ranking)} vs {len(scores.scores)}"
        )
    k2 = scored_prefix_length(prediction, coverage)
    matched = np.zeros(len(prediction.ranking))
    matched[:k2] = scores.scores[prediction.ranking[:k2]]
    return matched, k2


def dcg(relevances, k: int) -> float:
    """Discounted cumulative gain: sum_{j=1..k} (2^r_j - 1) / log2(1 + j)."""
    relevances = np.asarray(relevances, dtype=np.float64)
    if k < 0 or k > len(relevances):
        raise ValueError(f"k={k} out of range for a list of {len(relevances)} relevances")
    if k == 0:
        return 0.0
    positions = np.arange(1, k + 1, dtype=np.float64)
    return float(np.sum((2.0 ** relevances[:k] - 1.0) / np.log2(1.0 + positions)))


def ndcg(
    benign: Prediction,
    other: Prediction,
    coverage_benign: float = 0.99,
    coverage_other: float = 0.99,
    k: int = 5,
) -> float:
    """Normalized DCG of ``other`` against the grading induced by ``benign``.

    The normalizer is the benign prediction's own DCG, which is the ideal:
    benign grades are nonincreasing along the benign ranking, so no
    rearrangement scores higher.  Degenerate gradings (no positive scored
    logits) yield 0.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    scores = benign_relevance_scores(benign, coverage_benign)
    if scores.degenerate:
        return 0.0
    matched, k2 = matched_relevance(scores, other, coverage_other)
    ideal = dcg(scores.scores[benign.ranking], min(k, scores.scored_count))
    if ideal == 0.0:
        return 0.0
    value = dcg(matched, min(k, k2)) / ideal
    if 1.0 < value <= 1.0 + 1e-12:
        value = 1.0
    return float(value)


def ndcg_curve(
    benign: Prediction,
    other: Prediction,
    ks,
    coverage_benign: float = 0.99,
    coverage_other: float = 0.99,
) -> np.ndarray:
    return np.array([ndcg(benign, other, coverage_benign, coverage_other, k) for k in ks])


def topk_accuracy(predictions, labels, k: int = 1) -> float:
    """Fraction of samples whose label appears among the k top-ranked classes."""
    if len(predictions) != len(labels):
        raise ValueError(f"{len(predictions)} predictions vs {len(labels)} labels")
    if not len(predictions):
        raise ValueError("cannot compute accuracy of an empty set")
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    hits = sum(int(label) in pred.ranking[:k] for pred, label in zip(predictions, labels))
    return hits / len(predictions)


@dataclass
class NdcgReport:
    """Per-image NDCG curves for one evaluation group plus summary statistics."""

    ks: list
    per_image: np.ndarray
    mean_ndcg: np.ndarray
    top1_accuracy: float
    topk_accuracy: float
    coverage_benign: float
    coverage_other: float

    @property
    def count(self) -> int:
        return self.per_image.shape[0]


def ndcg_report(
    benign_predictions,
    other_predictions,
    labels,
    ks=(1, 2, 3, 4, 5),
    coverage_benign: float = 0.99,
    coverage_other: float = 0.99,
) -> NdcgReport:
    """Evaluate one group: NDCG@k per image plus means and top-1 / top-max(k) accuracy."""
    if not (len(benign_predictions) == len(other_predictions) == len(labels)):
        raise ValueError("benign predictions, other predictions, and labels must align")
    ks = [int(k) for k in ks]
    if not ks:
        raise ValueError("ks must be nonempty")
    if len(labels) == 0:
        empty = np.zeros((0, len(ks)))
        nan = float("nan")
        return NdcgReport(ks, empty, np.full(len(ks), nan), nan, nan, coverage_benign, coverage_other)
    rows = [
        ndcg_curve(b, o, ks, coverage_benign, coverage_other)
        for b, o in zip(benign_predictions, other_predictions)
    ]
    per_image = np.vstack(rows)
    return NdcgReport(
        ks=ks,
        per_image=per_image,
        mean_ndcg=per_image.mean(axis=0),
        top1_accuracy=topk_accuracy(other_predictions, labels, 1),
        topk_accuracy=topk_accuracy(other_predictions, labels, max(ks)),
        coverage_benign=coverage_benign,
        coverage_other=coverage_other,
    )
