"""Monte-Carlo hold-out evaluation: puncture, select lambda, fit, score."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .analytics import PredictionMetrics, constant_baseline, evaluate
from .data_io import cross_validate_lambda, default_lambda_grid, holdout_split
from .quantized_model import ObservedResponses, QuantizerSpec
from .solver import SolverConfig, fit

logger = logging.getLogger(__name__)


@dataclass
class TrialResult:
    lam: float
    metrics: PredictionMetrics
    baseline: PredictionMetrics
    effective_rank: int
    iterations: int


@dataclass
class ProtocolResult:
    trials: list = field(default_factory=list)

    def _mean(self, attr, metric):
        values = [getattr(getattr(t, attr), metric) for t in self.trials]
        if any(v is None for v in values):
            return None
        return float(np.mean(values))

    def _std(self, attr, metric):
        values = [getattr(getattr(t, attr), metric) for t in self.trials]
        if any(v is None for v in values):
            return None
        return float(np.std(values))

    @property
    def metric_names(self) -> list:
        names = ["cor", "lik"]
        if self.trials and self.trials[0].metrics.auc is not None:
            names.append("auc")
        return names

    def mean(self, metric: str) -> Optional[float]:
        return self._mean("metrics", metric)

    def std(self, metric: str) -> Optional[float]:
        return self._std("metrics", metric)

    def baseline_mean(self, metric: str) -> Optional[float]:
        return self._mean("baseline", metric)

    def summary(self) -> dict:
        return {
            "trials": len(self.trials),
            "lambdas": [t.lam for t in self.trials],
            "effective_ranks": [t.effective_rank for t in self.trials],
            "mean": {m: self.mean(m) for m in self.metric_names},
            "std": {m: self.std(m) for m in self.metric_names},
            "baseline": {m: self.baseline_mean(m) for m in self.metric_names},
        }


def run_holdout_trials(responses: ObservedResponses, q: QuantizerSpec, trials: int = 25,
                       test_fraction: float = 0.2, seed=None, lam: Optional[float] = None,
                       lambda_grid: Optional[Sequence[float]] = None, folds: int = 5,
                       cv_metric: str = "loglik", solver_options: Optional[dict] = None,
                       with_auc=None) -> ProtocolResult:
    """Repeat the puncture-and-predict experiment ``trials`` times.

    Each trial holds out ``test_fraction`` of the observed entries, chooses
    the radius by cross-validation on the remainder (unless ``lam`` is fixed),
    refits on the whole remainder from zero and scores the held-out entries.
    Trial seeds are spawned from ``seed`` so every trial is reproducible alone.
    """
    if trials < 1:
        raise ValueError("trials must be at least 1")
    solver_options = dict(solver_options or {})
    if lambda_grid is None:
        lambda_grid = default_lambda_grid(*responses.shape)
    result = ProtocolResult()
    for k, child in enumerate(np.random.SeedSequence(seed).spawn(trials)):
        split_seed, cv_seed = child.generate_state(2)
        train, test = holdout_split(responses, test_fraction, seed=int(split_seed))
        if lam is None:
            report = cross_validate_lambda(train, q, lambda_grid, folds=folds,
                                           seed=int(cv_seed), metric=cv_metric,
                                           solver_options=solver_options)
            chosen = report.best_lambda
        else:
            chosen = float(lam)
        res = fit(train, q, SolverConfig(lam=chosen, **solver_options))
        metrics = evaluate(res.Z_hat, test, q, with_auc=with_auc)
        baseline = constant_baseline(train, test, q)
        if metrics.auc is None:
            baseline.auc = None
        logger.info("trial %d: lam=%g rank=%d %s", k, chosen, res.effective_rank, metrics.as_dict())
        result.trials.append(TrialResult(chosen, metrics, baseline,
                                         res.effective_rank, res.iterations_used))
    return result
