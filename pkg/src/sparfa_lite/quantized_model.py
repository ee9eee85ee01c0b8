"""Ordinal logistic observation model.

A graded response is ``Y = quantize(Z + eps)`` with ``eps ~ Logistic(0, 1)``,
so the probability of label ``p`` given a latent score ``z`` is the mass of
the logistic CDF on the bin ``(w[p-1], w[p]]`` shifted by ``z``.

Question/learner indices are 0-based in memory; labels are 1-based
(``1..P``) everywhere.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.special import expit

from .errors import DimensionError, InvalidLabelError

# Lower clamp applied to per-entry bin probabilities inside nll and its gradient.
PROB_FLOOR = 1e-12


def inverse_logit(x):
    """Logistic CDF ``1 / (1 + exp(-x))``; exact limits at +-inf."""
    return expit(x)


def inverse_logit_deriv(x):
    """Logistic density ``1 / (2 + exp(-x) + exp(x))``.

    Written as ``expit(x) * expit(-x)`` so it never overflows and is 0 at +-inf.
    """
    return expit(x) * expit(np.negative(x))


@dataclass(frozen=True)
class QuantizerSpec:
    """Bin boundaries ``w_0 = -inf <= w_1 <= ... <= w_{P-1} <= w_P = +inf``."""

    boundaries: tuple

    def __post_init__(self):
        w = np.asarray(self.boundaries, dtype=float)
        if w.ndim != 1 or w.size < 3:
            raise ValueError("a quantizer needs at least two labels (P + 1 >= 3 boundaries)")
        if w[0] != -np.inf or w[-1] != np.inf:
            raise ValueError("outer boundaries must be -inf and +inf")
        if not np.all(np.isfinite(w[1:-1])):
            raise ValueError("interior boundaries must be finite")
        if np.any(np.diff(w) < 0):
            raise ValueError("boundaries must be non-decreasing")
        object.__setattr__(self, "boundaries", tuple(float(b) for b in w))

    @classmethod
    def from_interior(cls, interior: Sequence[float]) -> "QuantizerSpec":
        return cls((-np.inf, *interior, np.inf))

    @classmethod
    def binary(cls, threshold: float = 0.0) -> "QuantizerSpec":
        return cls.from_interior([threshold])

    @property
    def num_labels(self) -> int:
        return len(self.boundaries) - 1

    @property
    def interior(self) -> list:
        return list(self.boundaries[1:-1])

    @property
    def labels(self) -> range:
        return range(1, self.num_labels + 1)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.boundaries, dtype=float)

    def bounds(self, labels):
        """Return ``(lower, upper)`` boundary arrays for an array of labels."""
        labels = np.asarray(labels)
        if labels.size and (labels.min() < 1 or labels.max() > self.num_labels):
            raise InvalidLabelError(
                f"labels must lie in 1..{self.num_labels}, got range "
                f"[{labels.min()}, {labels.max()}]"
            )
        w = self.as_array()
        return w[labels - 1], w[labels]


@dataclass
class ObservedResponses:
    """Sparse set of observed graded responses on a Q x N grid.

    ``rows[k]``, ``cols[k]`` are 0-based question and learner indices and
    ``labels[k]`` the 1-based grade of the k-th observation.
    """

    num_questions: int
    num_learners: int
    rows: np.ndarray = field(repr=False)
    cols: np.ndarray = field(repr=False)
    labels: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.rows = np.asarray(self.rows, dtype=np.int64).reshape(-1)
        self.cols = np.asarray(self.cols, dtype=np.int64).reshape(-1)
        self.labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        if not (self.rows.size == self.cols.size == self.labels.size):
            raise DimensionError("rows, cols and labels must have equal length")
        if self.num_questions < 1 or self.num_learners < 1:
            raise DimensionError("matrix dimensions must be positive")
        if self.rows.size:
            if self.rows.min() < 0 or self.rows.max() >= self.num_questions:
                raise DimensionError("question index out of range")
            if self.cols.min() < 0 or self.cols.max() >= self.num_learners:
                raise DimensionError("learner index out of range")
            if self.labels.min() < 1:
                raise InvalidLabelError("labels are 1-based")
            flat = self.rows * self.num_learners + self.cols
            if np.unique(flat).size != flat.size:
                raise ValueError("duplicate (question, learner) entries")

    @classmethod
    def from_entries(cls, num_questions: int, num_learners: int,
                     entries: Iterable[tuple]) -> "ObservedResponses":
        entries = list(entries)
        if not entries:
            return cls(num_questions, num_learners, [], [], [])
        rows, cols, labels = zip(*entries)
        return cls(num_questions, num_learners, rows, cols, labels)

    @classmethod
    def from_dense(cls, Y, missing: int = 0) -> "ObservedResponses":
        Y = np.asarray(Y)
        rows, cols = np.nonzero(Y != missing)
        return cls(Y.shape[0], Y.shape[1], rows, cols, Y[rows, cols])

    @property
    def shape(self) -> tuple:
        return (self.num_questions, self.num_learners)

    def __len__(self) -> int:
        return int(self.labels.size)

    def subset(self, index) -> "ObservedResponses":
        """Observations selected by an integer index array or boolean mask."""
        return ObservedResponses(self.num_questions, self.num_learners,
                                 self.rows[index], self.cols[index], self.labels[index])

    def to_dense(self, missing: int = 0) -> np.ndarray:
        Y = np.full(self.shape, missing, dtype=np.int64)
        Y[self.rows, self.cols] = self.labels
        return Y

    def entries(self) -> list:
        return list(zip(self.rows.tolist(), self.cols.tolist(), self.labels.tolist()))

    def check_labels(self, q: QuantizerSpec) -> None:
        if len(self) and self.labels.max() > q.num_labels:
            raise InvalidLabelError(
                f"label {self.labels.max()} exceeds the {q.num_labels} labels of the quantizer")

    def __eq__(self, other):
        if not isinstance(other, ObservedResponses):
            return NotImplemented
        return (self.shape == other.shape
                and np.array_equal(self.rows, other.rows)
                and np.array_equal(self.cols, other.cols)
                and np.array_equal(self.labels, other.labels))


def quantize(x, q: QuantizerSpec):
    """Map real values to labels: ``p`` such that ``w[p-1] < x <= w[p]``."""
    # searchsorted(side="left") returns the first k with w[k] >= x, which is p.
    out = np.searchsorted(np.asarray(q.boundaries), x, side="left")
    if np.ndim(out) == 0:
        return int(out)
    return out.astype(np.int64)


def _mirror(upper_gap, lower_gap):
    """Reflect bins lying right of the score so both CDF values stay small.

    ``Phi(u) - Phi(l) == Phi(-l) - Phi(-u)``; when ``l > 0`` the left form
    subtracts two numbers close to 1 and loses all relative precision.
    """
    upper_gap = np.asarray(upper_gap, dtype=float)
    lower_gap = np.asarray(lower_gap, dtype=float)
    right = lower_gap > 0
    hi = np.where(right, -lower_gap, upper_gap)
    lo = np.where(right, -upper_gap, lower_gap)
    return hi, lo


def _bin_mass(upper_gap, lower_gap):
    """``Phi(upper_gap) - Phi(lower_gap)`` evaluated without cancellation."""
    hi, lo = _mirror(upper_gap, lower_gap)
    return expit(hi) - expit(lo)


def _mass_and_slope(upper_gap, lower_gap):
    """Bin mass and ``Phi'(upper_gap) - Phi'(lower_gap)`` from four expit calls."""
    hi, lo = _mirror(upper_gap, lower_gap)
    e_hi, e_lo = expit(hi), expit(lo)
    # Phi' is even, so mirroring the arguments leaves the slope's sign flipped
    # exactly when the pair was swapped.
    right = np.asarray(lower_gap) > 0
    d_hi = e_hi * expit(-hi)
    d_lo = e_lo * expit(-lo)
    slope = np.where(right, d_lo - d_hi, d_hi - d_lo)
    return e_hi - e_lo, slope


def label_likelihood(z, label, q: QuantizerSpec):
    """Probability of ``label`` given latent score ``z`` (broadcasts)."""
    lower, upper = q.bounds(label)
    z = np.asarray(z, dtype=float)
    p = _bin_mass(upper - z, lower - z)
    if p.ndim == 0:
        return float(p)
    return p


def all_label_likelihoods(z, q: QuantizerSpec) -> np.ndarray:
    """Array of shape ``z.shape + (P,)`` with the probability of every label."""
    z = np.asarray(z, dtype=float)
    w = q.as_array()
    zz = z[..., None]
    return _bin_mass(w[1:] - zz, w[:-1] - zz)


def _check_shape(Z, obs: ObservedResponses) -> np.ndarray:
    Z = np.asarray(Z, dtype=float)
    if Z.shape != obs.shape:
        raise DimensionError(f"Z has shape {Z.shape}, responses are {obs.shape}")
    return Z


def nll_and_gradient(Z, obs: ObservedResponses, q: QuantizerSpec):
    """Negative log-likelihood and its gradient with respect to ``Z``.

    The gradient vanishes off the observed set. Per observed entry with
    bounds ``L < U``::

        (Phi'(U - z) - Phi'(L - z)) / max(Phi(U - z) - Phi(L - z), PROB_FLOOR)

    Bin probabilities are floored at ``PROB_FLOOR`` in both outputs.
    """
    Z = _check_shape(Z, obs)
    grad = np.zeros_like(Z)
    if len(obs) == 0:
        return 0.0, grad
    lower, upper = q.bounds(obs.labels)
    z = Z[obs.rows, obs.cols]
    mass, slope = _mass_and_slope(upper - z, lower - z)
    mass = np.maximum(mass, PROB_FLOOR)
    grad[obs.rows, obs.cols] = slope / mass
    return float(-np.sum(np.log(mass))), grad


def nll(Z, obs: ObservedResponses, q: QuantizerSpec) -> float:
    """Negative log-likelihood of the observed responses under scores ``Z``."""
    Z = _check_shape(Z, obs)
    if len(obs) == 0:
        return 0.0
    z = Z[obs.rows, obs.cols]
    p = label_likelihood(z, obs.labels, q)
    return float(-np.sum(np.log(np.maximum(p, PROB_FLOOR))))


def nll_gradient(Z, obs: ObservedResponses, q: QuantizerSpec) -> np.ndarray:
    """Gradient of :func:`nll`; see :func:`nll_and_gradient`."""
    return nll_and_gradient(Z, obs, q)[1]
