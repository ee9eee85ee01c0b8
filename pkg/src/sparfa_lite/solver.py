"""Nuclear-norm constrained maximum likelihood via accelerated projected gradient.

Solves::

    minimize   nll(Z)
    subject to ||Z||_* <= lam

with FISTA momentum, backtracking on the step size and a function-value
restart of the momentum sequence. Each iteration first tries the previous
step divided by the backtracking factor, so the step can grow again once the
likelihood flattens out.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import LineSearchError, NumericalError
from .quantized_model import ObservedResponses, QuantizerSpec, nll, nll_and_gradient

logger = logging.getLogger(__name__)

MIN_STEP = 1e-12
RANK_RTOL = 1e-8


@dataclass
class SolverConfig:
    lam: float
    max_iterations: int = 1000
    tolerance: float = 1e-6
    initial_step: float = 4.0
    backtracking_factor: float = 0.5
    restart_on_increase: bool = True
    adaptive_step: bool = True

    def __post_init__(self):
        if not np.isfinite(self.lam) or self.lam <= 0:
            raise ValueError(f"lambda must be a positive finite number, got {self.lam}")
        if self.tolerance <= 0:
            raise ValueError("tolerance must be positive")
        if not 0 < self.backtracking_factor < 1:
            raise ValueError("backtracking_factor must lie in (0, 1)")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if self.initial_step <= 0:
            raise ValueError("initial_step must be positive")


@dataclass
class FitResult:
    Z_hat: np.ndarray = field(repr=False)
    objective_trace: list
    iterations_used: int
    converged: bool
    effective_rank: int

    @property
    def objective(self) -> float:
        return self.objective_trace[-1]


def project_l1_ball(v, radius: float) -> np.ndarray:
    """Euclidean projection of ``v`` onto ``{u : sum |u_k| <= radius}``.

    Sort-based threshold search (Duchi et al., 2008), O(n log n).
    """
    if not radius > 0:
        raise ValueError(f"radius must be positive, got {radius}")
    v = np.asarray(v, dtype=float)
    a = np.abs(v)
    if a.sum() <= radius:
        return v.copy()
    mu = np.sort(a.ravel())[::-1]
    css = np.cumsum(mu)
    k = np.arange(1, mu.size + 1)
    rho = np.nonzero(mu * k > css - radius)[0][-1]
    theta = (css[rho] - radius) / (rho + 1.0)
    return np.sign(v) * np.maximum(a - theta, 0.0)


def nuclear_norm(Z) -> float:
    return float(np.linalg.svd(np.asarray(Z, dtype=float), compute_uv=False).sum())


def project_nuclear_ball(Z, radius: float) -> np.ndarray:
    """Project ``Z`` onto the nuclear-norm ball by shrinking its singular values."""
    Z = np.asarray(Z, dtype=float)
    try:
        U, s, Vt = np.linalg.svd(Z, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"SVD failed: {exc}") from exc
    if s.sum() <= radius:
        if not radius > 0:
            raise ValueError(f"radius must be positive, got {radius}")
        return Z.copy()
    s = project_l1_ball(s, radius)
    keep = s > 0
    return (U[:, keep] * s[keep]) @ Vt[keep]


def effective_rank(Z) -> int:
    s = np.linalg.svd(np.asarray(Z, dtype=float), compute_uv=False)
    if s.size == 0 or s[0] == 0:
        return 0
    return int(np.count_nonzero(s > RANK_RTOL * s[0]))


def backtracking_step(objective, point, gradient, step, radius,
                      factor=0.5, f_point=None):
    """Projected gradient step from ``point`` with backtracking on ``step``.

    Shrinks ``step`` by ``factor`` until the candidate satisfies::

        f(C) <= f(X) + <g, C - X> + ||C - X||_F^2 / (2 step)

    Returns ``(candidate, f(candidate), step)``.
    """
    if f_point is None:
        f_point = objective(point)
    while True:
        candidate = project_nuclear_ball(point - step * gradient, radius)
        diff = candidate - point
        f_cand = objective(candidate)
        bound = f_point + np.vdot(gradient, diff) + np.vdot(diff, diff) / (2 * step)
        if np.isfinite(f_cand) and f_cand <= bound + 1e-12 * abs(f_point):
            return candidate, f_cand, step
        step *= factor
        if step < MIN_STEP:
            raise LineSearchError(f"step size fell below {MIN_STEP} during backtracking")


def fit(obs: ObservedResponses, q: QuantizerSpec, cfg: SolverConfig,
        init=None) -> FitResult:
    """Fit the low-rank score matrix to the observed responses.

    Starts from the zero matrix unless ``init`` is given, in which case it is
    projected onto the feasible set first.
    """
    if len(obs) == 0:
        raise ValueError("cannot fit an empty set of observations")
    obs.check_labels(q)

    def f(Z):
        return nll(Z, obs, q)

    if init is None:
        Z = np.zeros(obs.shape)
    else:
        Z = project_nuclear_ball(np.asarray(init, dtype=float), cfg.lam)
        if Z.shape != obs.shape:
            raise ValueError(f"init has shape {Z.shape}, expected {obs.shape}")
    f_Z = f(Z)
    if not np.isfinite(f_Z):
        raise NumericalError("objective is not finite at the starting point")

    trace = [f_Z]
    Y = Z
    t = 1.0
    step = cfg.initial_step
    converged = False
    it = 0
    for it in range(1, cfg.max_iterations + 1):
        f_Y, g = nll_and_gradient(Y, obs, q)
        # Re-expanding lets the step track curvature that flattens as |Z| grows.
        trial_step = step / cfg.backtracking_factor if cfg.adaptive_step and it > 1 else step
        Z_new, f_new, step = backtracking_step(f, Y, g, trial_step, cfg.lam,
                                               cfg.backtracking_factor, f_Y)
        if cfg.restart_on_increase and f_new > f_Z:
            # Momentum overshot: drop it and take a plain projected step from Z.
            t = 1.0
            _, g = nll_and_gradient(Z, obs, q)
            Z_new, f_new, step = backtracking_step(f, Z, g, step, cfg.lam,
                                                   cfg.backtracking_factor, f_Z)
        if not np.isfinite(f_new):
            raise NumericalError(f"objective became non-finite at iteration {it}")

        t_new = (1.0 + np.sqrt(1.0 + 4.0 * t * t)) / 2.0
        Y = Z_new + ((t - 1.0) / t_new) * (Z_new - Z)
        t = t_new

        change = abs(f_Z - f_new) / max(abs(f_Z), np.finfo(float).tiny)
        Z, f_Z = Z_new, f_new
        trace.append(f_Z)
        if change < cfg.tolerance:
            converged = True
            break

    logger.debug("fit: lam=%g iterations=%d objective=%.6g converged=%s",
                 cfg.lam, it, f_Z, converged)
    return FitResult(Z_hat=Z, objective_trace=trace, iterations_used=it,
                     converged=converged, effective_rank=effective_rank(Z))
