"""Learning analytics on a fitted score matrix and held-out prediction metrics."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.stats import rankdata

from .errors import DegenerateTagError, UndefinedAUCError, UnsupportedQuantizerError
from .quantized_model import (PROB_FLOOR, ObservedResponses, QuantizerSpec, _check_shape,
                              all_label_likelihoods, inverse_logit, label_likelihood)


@dataclass
class TagMatrix:
    """Binary Q x M question-tag association matrix."""

    T: np.ndarray
    tag_names: Sequence[str]

    def __post_init__(self):
        T = np.asarray(self.T)
        if T.ndim != 2:
            raise ValueError("tag matrix must be two-dimensional")
        if not np.isin(T, (0, 1)).all():
            raise ValueError("tag matrix entries must be 0 or 1")
        self.T = T.astype(float)
        self.tag_names = list(self.tag_names)
        if len(self.tag_names) != T.shape[1]:
            raise ValueError(f"{len(self.tag_names)} tag names for {T.shape[1]} columns")
        untagged = np.nonzero(self.T.sum(axis=1) == 0)[0]
        if untagged.size:
            raise DegenerateTagError(f"questions without any tag: {untagged.tolist()}")
        empty = np.nonzero(self.T.sum(axis=0) == 0)[0]
        if empty.size:
            names = [self.tag_names[m] for m in empty]
            raise DegenerateTagError(f"tags with no questions: {names}")

    @property
    def num_questions(self) -> int:
        return self.T.shape[0]

    @property
    def num_tags(self) -> int:
        return self.T.shape[1]


@dataclass
class TagKnowledge:
    B: np.ndarray
    tag_names: list

    @property
    def class_average(self) -> np.ndarray:
        return self.B.mean(axis=0)


@dataclass
class PredictionMetrics:
    cor: float
    lik: float
    auc: Optional[float] = None

    def as_dict(self) -> dict:
        out = {"COR": self.cor, "LIK": self.lik}
        if self.auc is not None:
            out["AUC"] = self.auc
        return out


def denoised_grades(Z) -> np.ndarray:
    """Entrywise success probability ``A = Phi(Z)``."""
    return inverse_logit(np.asarray(Z, dtype=float))


def tag_knowledge(A, tags: TagMatrix) -> TagKnowledge:
    """Per-learner average of ``A`` over the questions carrying each tag.

    ``B[j, m] = sum_i A[i, j] T[i, m] / sum_i T[i, m]``, shape N x M.
    """
    A = np.asarray(A, dtype=float)
    T = tags.T
    if A.shape[0] != T.shape[0]:
        raise ValueError(f"A has {A.shape[0]} questions, tag matrix has {T.shape[0]}")
    counts = T.sum(axis=0)
    if np.any(counts == 0):
        raise DegenerateTagError("a tag column is all zeros")
    B = (A.T @ T) / counts
    return TagKnowledge(B=B, tag_names=list(tags.tag_names))


def predict_label(z, q: QuantizerSpec):
    """Most likely label for score(s) ``z``; ties go to the smaller label."""
    probs = all_label_likelihoods(z, q)
    # argmax returns the first maximum, i.e. the smallest label on ties.
    pred = np.argmax(probs, axis=-1) + 1
    if np.ndim(pred) == 0:
        return int(pred)
    return pred


def _test_scores(Z, test: ObservedResponses) -> np.ndarray:
    if len(test) == 0:
        raise ValueError("test set is empty")
    Z = _check_shape(Z, test)
    return Z[test.rows, test.cols]


def accuracy(Z, test: ObservedResponses, q: QuantizerSpec) -> float:
    z = _test_scores(Z, test)
    return float(np.mean(predict_label(z, q) == test.labels))


def mean_likelihood(Z, test: ObservedResponses, q: QuantizerSpec) -> float:
    z = _test_scores(Z, test)
    return float(np.mean(label_likelihood(z, test.labels, q)))


def mean_log_likelihood(Z, test: ObservedResponses, q: QuantizerSpec) -> float:
    """Average held-out log-likelihood, i.e. ``-nll(Z, test) / |test|``."""
    z = _test_scores(Z, test)
    p = label_likelihood(z, test.labels, q)
    return float(np.mean(np.log(np.maximum(p, PROB_FLOOR))))


def auc_from_scores(scores, positive) -> float:
    """Mann-Whitney AUC; tied scores count one half."""
    scores = np.asarray(scores, dtype=float)
    positive = np.asarray(positive, dtype=bool)
    n_pos = int(positive.sum())
    n_neg = positive.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedAUCError("AUC needs at least one response of each label")
    ranks = rankdata(scores)  # average ranks resolve ties
    u = ranks[positive].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def auc(Z, test: ObservedResponses, q: QuantizerSpec) -> float:
    """AUC of ``Phi(Z)`` against binary labels, label 2 being the positive class."""
    if q.num_labels != 2:
        raise UnsupportedQuantizerError(
            f"AUC is only defined for binary responses, quantizer has {q.num_labels} labels")
    z = _test_scores(Z, test)
    # Phi is strictly increasing, so ranking z gives the AUC of Phi(z) without
    # spurious ties where Phi saturates to 0 or 1 in floating point.
    return auc_from_scores(z, test.labels == 2)


def evaluate(Z, test: ObservedResponses, q: QuantizerSpec, with_auc=None) -> PredictionMetrics:
    """COR and LIK on ``test``, plus AUC for binary quantizers.

    ``with_auc=None`` computes AUC only when it is defined; ``True`` forces
    it and raises for non-binary quantizers.
    """
    if with_auc is None:
        with_auc = q.num_labels == 2
    return PredictionMetrics(
        cor=accuracy(Z, test, q),
        lik=mean_likelihood(Z, test, q),
        auc=auc(Z, test, q) if with_auc else None,
    )


def constant_baseline(train: ObservedResponses, test: ObservedResponses,
                      q: QuantizerSpec) -> PredictionMetrics:
    """Metrics of predictors that ignore question and learner.

    COR uses the most frequent training label (smallest label on ties); LIK
    uses the training label frequencies as the predictive distribution; AUC of
    a constant score is 1/2.
    """
    if len(train) == 0 or len(test) == 0:
        raise ValueError("baseline needs non-empty train and test sets")
    freq = np.bincount(train.labels, minlength=q.num_labels + 1)[1:] / len(train)
    majority = int(np.argmax(freq)) + 1
    return PredictionMetrics(
        cor=float(np.mean(test.labels == majority)),
        lik=float(np.mean(freq[test.labels - 1])),
        auc=0.5 if q.num_labels == 2 else None,
    )


@dataclass
class LearnerSelection:
    best: int
    average: int
    worst: int


def select_learners(A) -> LearnerSelection:
    """Pick best, typical and worst learners by their mean de-noised grade.

    The typical learner is the one whose mean is closest to the class mean;
    index ties resolve to the lowest learner index.
    """
    overall = np.asarray(A, dtype=float).mean(axis=0)
    return LearnerSelection(
        best=int(np.argmax(overall)),
        average=int(np.argmin(np.abs(overall - overall.mean()))),
        worst=int(np.argmin(overall)),
    )


def tag_report_rows(A, tags: TagMatrix) -> list:
    """Rows of the tag-knowledge summary table as ``(label, learner, values)``.

    ``learner`` is ``None`` for the class-average row; values are fractions.
    """
    know = tag_knowledge(A, tags)
    sel = select_learners(A)
    return [
        ("Class average", None, know.class_average),
        ("Best learner", sel.best, know.B[sel.best]),
        ("Average learner", sel.average, know.B[sel.average]),
        ("Worst learner", sel.worst, know.B[sel.worst]),
    ]
