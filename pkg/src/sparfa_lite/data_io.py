"""Dataset files, the synthetic generator, hold-out splits and lambda selection.

File formats
------------
responses   CSV ``learner_id,question_id,grade`` with integer grades 1..P
tags        CSV ``question_id,tag``, one row per association
quantizer   JSON ``{"num_labels": P, "interior_boundaries": [w_1, ..., w_{P-1}]}``
matrices    CSV with header ``question_id,<learner ids...>`` and one row per question
"""
from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .analytics import TagMatrix, accuracy, mean_likelihood, mean_log_likelihood
from .errors import DataFormatError
from .quantized_model import ObservedResponses, QuantizerSpec, quantize
from .solver import SolverConfig, fit

logger = logging.getLogger(__name__)

RESPONSES_HEADER = ["learner_id", "question_id", "grade"]
TAGS_HEADER = ["question_id", "tag"]


@dataclass
class Dataset:
    responses: ObservedResponses
    quantizer: QuantizerSpec
    question_ids: list
    learner_ids: list
    tags: Optional[TagMatrix] = None

    def __post_init__(self):
        if len(self.question_ids) != self.responses.num_questions:
            raise ValueError("question_ids does not match the number of questions")
        if len(self.learner_ids) != self.responses.num_learners:
            raise ValueError("learner_ids does not match the number of learners")
        if len(set(self.question_ids)) != len(self.question_ids):
            raise ValueError("question ids are not unique")
        if len(set(self.learner_ids)) != len(self.learner_ids):
            raise ValueError("learner ids are not unique")
        if self.tags is not None and self.tags.num_questions != self.responses.num_questions:
            raise ValueError("tag matrix rows do not match the number of questions")
        self.responses.check_labels(self.quantizer)


def _id_key(s: str):
    # Integer-looking ids sort numerically, everything else lexically after them.
    return (0, int(s), "") if s.lstrip("-").isdigit() else (1, 0, s)


def sorted_ids(ids) -> list:
    return sorted(set(ids), key=_id_key)


# ---------------------------------------------------------------- quantizer

def quantizer_to_dict(q: QuantizerSpec) -> dict:
    return {"num_labels": q.num_labels, "interior_boundaries": q.interior}


def quantizer_from_dict(d: dict) -> QuantizerSpec:
    try:
        P = int(d["num_labels"])
        interior = [float(w) for w in d["interior_boundaries"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise DataFormatError(f"malformed quantizer: {exc}") from exc
    if len(interior) != P - 1:
        raise DataFormatError(f"num_labels={P} needs {P - 1} interior boundaries, got {len(interior)}")
    try:
        return QuantizerSpec.from_interior(interior)
    except ValueError as exc:
        raise DataFormatError(str(exc)) from exc


def load_quantizer(path) -> QuantizerSpec:
    path = Path(path)
    try:
        d = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"invalid JSON: {exc}", path=path, line=exc.lineno) from exc
    try:
        return quantizer_from_dict(d)
    except DataFormatError as exc:
        raise DataFormatError(str(exc), path=path) from exc


def save_quantizer(path, q: QuantizerSpec) -> None:
    Path(path).write_text(json.dumps(quantizer_to_dict(q), indent=2) + "\n", encoding="utf-8")


# ---------------------------------------------------------------- responses

def _read_csv(path, header):
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        first = next(reader, None)
        if first is None or [c.strip() for c in first] != header:
            raise DataFormatError(f"expected header {','.join(header)}", path=path, line=1)
        for row in reader:
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DataFormatError(f"expected {len(header)} fields, got {len(row)}",
                                      path=path, line=reader.line_num)
            yield reader.line_num, [c.strip() for c in row]


def load_responses(path, quantizer: QuantizerSpec, question_ids=None,
                   learner_ids=None) -> Dataset:
    """Read a responses CSV.

    Without explicit id lists, questions and learners are indexed in sorted id
    order (numeric when the ids are integers).
    """
    path = Path(path)
    records = []
    seen = {}
    for line, (learner, question, grade) in _read_csv(path, RESPONSES_HEADER):
        try:
            g = int(grade)
        except ValueError:
            raise DataFormatError(f"grade {grade!r} is not an integer", path=path, line=line) from None
        if not 1 <= g <= quantizer.num_labels:
            raise DataFormatError(f"grade {g} outside 1..{quantizer.num_labels}",
                                  path=path, line=line)
        key = (learner, question)
        if key in seen:
            raise DataFormatError(
                f"duplicate response for learner {learner!r}, question {question!r} "
                f"(first seen on line {seen[key]})", path=path, line=line)
        seen[key] = line
        records.append((line, learner, question, g))

    question_ids = list(question_ids) if question_ids is not None else sorted_ids(r[2] for r in records)
    learner_ids = list(learner_ids) if learner_ids is not None else sorted_ids(r[1] for r in records)
    if not question_ids or not learner_ids:
        raise DataFormatError("no responses", path=path)
    qi = {q: i for i, q in enumerate(question_ids)}
    li = {l: j for j, l in enumerate(learner_ids)}
    rows, cols, labels = [], [], []
    for line, learner, question, g in records:
        if question not in qi:
            raise DataFormatError(f"unknown question id {question!r}", path=path, line=line)
        if learner not in li:
            raise DataFormatError(f"unknown learner id {learner!r}", path=path, line=line)
        rows.append(qi[question])
        cols.append(li[learner])
        labels.append(g)
    order = np.lexsort((cols, rows))
    obs = ObservedResponses(len(question_ids), len(learner_ids),
                            np.asarray(rows)[order], np.asarray(cols)[order],
                            np.asarray(labels)[order])
    return Dataset(obs, quantizer, question_ids, learner_ids)


def write_responses(path, dataset: Dataset) -> None:
    obs = dataset.responses
    order = np.lexsort((obs.cols, obs.rows))
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RESPONSES_HEADER)
        for k in order:
            w.writerow([dataset.learner_ids[obs.cols[k]], dataset.question_ids[obs.rows[k]],
                        int(obs.labels[k])])


# ---------------------------------------------------------------- tags

def load_tags(path, question_ids: Sequence[str]) -> TagMatrix:
    """Read a tags CSV into a tag matrix aligned with ``question_ids``.

    Tags are ordered by first appearance in the file.
    """
    path = Path(path)
    qi = {q: i for i, q in enumerate(question_ids)}
    tag_names: list = []
    tag_index: dict = {}
    pairs = []
    for line, (question, tag) in _read_csv(path, TAGS_HEADER):
        if question not in qi:
            raise DataFormatError(f"unknown question id {question!r}", path=path, line=line)
        if tag not in tag_index:
            tag_index[tag] = len(tag_names)
            tag_names.append(tag)
        pairs.append((qi[question], tag_index[tag]))
    T = np.zeros((len(question_ids), len(tag_names)), dtype=int)
    for i, m in pairs:
        T[i, m] = 1
    return TagMatrix(T, tag_names)


def write_tags(path, tags: TagMatrix, question_ids: Sequence[str]) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TAGS_HEADER)
        for i, m in zip(*np.nonzero(tags.T)):
            w.writerow([question_ids[i], tags.tag_names[m]])


# ---------------------------------------------------------------- matrices

def write_matrix(path, M, question_ids, learner_ids) -> None:
    M = np.asarray(M, dtype=float)
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["question_id", *learner_ids])
        for qid, row in zip(question_ids, M):
            w.writerow([qid, *(repr(float(x)) for x in row)])


def load_matrix(path):
    """Read a matrix CSV; returns ``(M, question_ids, learner_ids)``."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0].strip() != "question_id" or len(header) < 2:
            raise DataFormatError("expected header question_id,<learner ids>", path=path, line=1)
        learner_ids = [h.strip() for h in header[1:]]
        question_ids, rows = [], []
        for row in reader:
            if not row:
                continue
            if len(row) != len(header):
                raise DataFormatError(f"expected {len(header)} fields, got {len(row)}",
                                      path=path, line=reader.line_num)
            try:
                values = [float(x) for x in row[1:]]
            except ValueError as exc:
                raise DataFormatError(str(exc), path=path, line=reader.line_num) from None
            if not all(math.isfinite(v) for v in values):
                raise DataFormatError("non-finite matrix entry", path=path, line=reader.line_num)
            question_ids.append(row[0].strip())
            rows.append(values)
    if not rows:
        raise DataFormatError("matrix has no rows", path=path)
    return np.asarray(rows), question_ids, learner_ids


# ---------------------------------------------------------------- synthetic data

@dataclass
class SyntheticTruth:
    Z_true: np.ndarray = field(repr=False)
    rank: int
    responses: ObservedResponses
    observed_fraction: float

    def to_dataset(self, quantizer: QuantizerSpec) -> Dataset:
        Q, N = self.Z_true.shape
        return Dataset(self.responses, quantizer, synthetic_ids("Q", Q), synthetic_ids("L", N))


def synthetic_ids(prefix: str, n: int) -> list:
    width = max(3, len(str(n)))
    return [f"{prefix}{k:0{width}d}" for k in range(1, n + 1)]


def draw_labels(Z, quantizer: QuantizerSpec, rng) -> np.ndarray:
    """Noisy quantized responses ``quantize(Z + eps)`` with logistic ``eps``."""
    Z = np.asarray(Z, dtype=float)
    return quantize(Z + rng.logistic(0.0, 1.0, size=Z.shape), quantizer)


def synthesize(num_questions: int, num_learners: int, rank: int, quantizer: QuantizerSpec,
               observed_fraction: float = 1.0, scale: float = 1.0, seed=None) -> SyntheticTruth:
    """Draw a rank-``rank`` score matrix and quantized logistic responses.

    ``Z_true = scale * G_Q @ G_N.T / sqrt(rank)`` with standard normal factors;
    each entry is observed independently with probability ``observed_fraction``.
    """
    Q, N, K = num_questions, num_learners, rank
    if K < 1 or K > min(Q, N):
        raise ValueError(f"rank must lie in 1..min(Q, N) = {min(Q, N)}, got {K}")
    if not 0 < observed_fraction <= 1:
        raise ValueError(f"observed_fraction must lie in (0, 1], got {observed_fraction}")
    rng = np.random.default_rng(seed)
    G_Q = rng.standard_normal((Q, K))
    G_N = rng.standard_normal((N, K))
    Z = scale * (G_Q @ G_N.T) / np.sqrt(K)
    observed = rng.random((Q, N)) < observed_fraction
    Y = draw_labels(Z, quantizer, rng)
    rows, cols = np.nonzero(observed)
    obs = ObservedResponses(Q, N, rows, cols, Y[rows, cols])
    return SyntheticTruth(Z_true=Z, rank=K, responses=obs, observed_fraction=observed_fraction)


# ---------------------------------------------------------------- splitting

def holdout_split(responses: ObservedResponses, fraction: float, seed=None):
    """Randomly move ``round(fraction * |obs|)`` observations into a test set."""
    if not 0 < fraction < 1:
        raise ValueError(f"fraction must lie in (0, 1), got {fraction}")
    n = len(responses)
    n_test = int(math.floor(fraction * n + 0.5))
    perm = np.random.default_rng(seed).permutation(n)
    test_idx = np.sort(perm[:n_test])
    train_idx = np.sort(perm[n_test:])
    return responses.subset(train_idx), responses.subset(test_idx)


def kfold_indices(n: int, folds: int, seed=None) -> list:
    """Partition ``range(n)`` into ``folds`` shuffled, near-equal index arrays."""
    if folds < 2:
        raise ValueError("need at least two folds")
    if folds > n:
        raise ValueError(f"cannot split {n} observations into {folds} non-empty folds")
    perm = np.random.default_rng(seed).permutation(n)
    return [np.sort(part) for part in np.array_split(perm, folds)]


# ---------------------------------------------------------------- cross-validation

def default_lambda_grid(num_questions: int, num_learners: int, num: int = 10,
                        low: float = 0.1, high: float = 100.0) -> list:
    """Geometric grid over ``[low, high] * sqrt(Q * N)``."""
    anchor = math.sqrt(num_questions * num_learners)
    return [float(x) for x in np.geomspace(low * anchor, high * anchor, num)]


CV_METRICS = ("loglik", "lik", "cor")


@dataclass
class CVReport:
    """Per-(lambda, fold) validation scores; arrays have shape (len(grid), folds)."""

    lambda_grid: list
    fold_loglik: np.ndarray = field(repr=False)
    fold_lik: np.ndarray = field(repr=False)
    fold_cor: np.ndarray = field(repr=False)
    best_lambda: float
    folds: int
    metric: str = "loglik"

    @property
    def mean_loglik(self) -> np.ndarray:
        return self.fold_loglik.mean(axis=1)

    @property
    def mean_lik(self) -> np.ndarray:
        return self.fold_lik.mean(axis=1)

    @property
    def mean_cor(self) -> np.ndarray:
        return self.fold_cor.mean(axis=1)

    def scores(self, metric=None) -> np.ndarray:
        return getattr(self, f"mean_{metric or self.metric}")

    def as_dict(self) -> dict:
        return {
            "lambda_grid": list(self.lambda_grid),
            "mean_loglik": self.mean_loglik.tolist(),
            "mean_lik": self.mean_lik.tolist(),
            "mean_cor": self.mean_cor.tolist(),
            "best_lambda": self.best_lambda,
            "folds": self.folds,
            "metric": self.metric,
        }


def cross_validate_lambda(responses: ObservedResponses, quantizer: QuantizerSpec,
                          lambda_grid: Sequence[float], folds: int = 5, seed=None,
                          metric: str = "loglik", solver_options: Optional[dict] = None,
                          warm_start: bool = True) -> CVReport:
    """Pick the nuclear-norm radius by entry-wise k-fold cross-validation.

    For each fold the radii are fit in increasing order; with ``warm_start``
    each fit starts from the previous (smaller-ball, hence feasible) solution.
    The selected radius maximizes the mean validation ``metric``, ties going
    to the smaller radius. ``metric`` is one of

    - ``"loglik"``: mean held-out log-likelihood (default)
    - ``"lik"``: mean held-out probability of the observed label
    - ``"cor"``: held-out accuracy of the most likely label

    Mean probability is not a proper score: it keeps rising as the fit
    interpolates the training labels, so ``"lik"`` tends to pick the largest
    radii on the grid.
    """
    if metric not in CV_METRICS:
        raise ValueError(f"metric must be one of {CV_METRICS}, got {metric!r}")
    grid = [float(x) for x in lambda_grid]
    if not grid:
        raise ValueError("lambda grid is empty")
    solver_options = dict(solver_options or {})
    parts = kfold_indices(len(responses), folds, seed)
    shape = (len(grid), folds)
    loglik, lik, cor = np.zeros(shape), np.zeros(shape), np.zeros(shape)
    ascending = sorted(range(len(grid)), key=lambda k: grid[k])
    for f, val_idx in enumerate(parts):
        train_mask = np.ones(len(responses), dtype=bool)
        train_mask[val_idx] = False
        if not train_mask.any():
            raise ValueError(f"fold {f} leaves an empty training set")
        train = responses.subset(train_mask)
        val = responses.subset(val_idx)
        Z = None
        for k in ascending:
            cfg = SolverConfig(lam=grid[k], **solver_options)
            res = fit(train, quantizer, cfg, init=Z if warm_start else None)
            Z = res.Z_hat
            loglik[k, f] = mean_log_likelihood(Z, val, quantizer)
            lik[k, f] = mean_likelihood(Z, val, quantizer)
            cor[k, f] = accuracy(Z, val, quantizer)
            logger.debug("cv fold=%d lam=%g loglik=%.4f lik=%.4f cor=%.4f iters=%d",
                         f, grid[k], loglik[k, f], lik[k, f], cor[k, f], res.iterations_used)
    score = {"loglik": loglik, "lik": lik, "cor": cor}[metric].mean(axis=1)
    best = max(range(len(grid)), key=lambda k: (score[k], -grid[k]))
    return CVReport(lambda_grid=grid, fold_loglik=loglik, fold_lik=lik, fold_cor=cor,
                    best_lambda=grid[best], folds=folds, metric=metric)
