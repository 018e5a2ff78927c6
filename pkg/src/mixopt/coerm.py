"""Weighted ERM solving: projected gradient descent, batch solves, Lipschitz audit.

Given a mixture alpha over source risks, the solver runs projected gradient
descent on f_alpha(w) = sum_j alpha_j f_j(w) over the parameter ball. Batch
solving many mixtures this way is the expensive baseline that the network
predictor amortizes, so the solver also accounts gradient-evaluation cost.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (
    DEFAULT_RADIUS,
    InvalidInputError,
    InvariantError,
    MixtureWeights,
    ModelParams,
    RngStream,
    as_vector,
    project_ball_array,
)
from .domains import closed_form_wstar, suite_constants

__all__ = [
    "BatchSolveResult",
    "GdConfig",
    "LipschitzAudit",
    "contraction_steps",
    "gd_solve",
    "lipschitz_audit",
    "mixture_lipschitz_bound",
    "solve_batch",
]


@dataclass(frozen=True)
class GdConfig:
    """Projected gradient descent settings.

    ``gamma=None`` resolves to 1/L with L the suite's smoothness bound. A positive
    ``tolerance`` stops early once the iterate moves less than that distance.
    """

    steps: int = 100
    gamma: float | None = None
    tolerance: float | None = None

    def __post_init__(self):
        if self.steps < 0:
            raise InvalidInputError(f"step count must be >= 0, got {self.steps}")
        if self.gamma is not None and not self.gamma > 0.0:
            raise InvalidInputError(f"gamma must be positive, got {self.gamma!r}")
        if self.tolerance is not None and not self.tolerance > 0.0:
            raise InvalidInputError(f"tolerance must be positive, got {self.tolerance!r}")


def _resolve_gamma(config: GdConfig, suite, radius: float) -> float:
    if config.gamma is not None:
        return config.gamma
    return 1.0 / suite_constants(suite, radius).L


def _mixture_grad(suite, alpha: np.ndarray, w: np.ndarray) -> np.ndarray:
    out = alpha[0] * suite[0].grad(w)
    for aj, model in zip(alpha[1:], suite[1:]):
        out += aj * model.grad(w)
    return out


def _gd_solve_array(v: np.ndarray, alpha: np.ndarray, suite, gamma: float,
                    steps: int, tolerance: float | None, radius: float):
    done = 0
    for _ in range(steps):
        v_next = project_ball_array(v - gamma * _mixture_grad(suite, alpha, v), radius)
        done += 1
        moved = float(np.linalg.norm(v_next - v))
        v = v_next
        if tolerance is not None and moved <= tolerance:
            break
    return v, done


def _alpha_array(alpha, n: int) -> np.ndarray:
    a = alpha.values if isinstance(alpha, MixtureWeights) else as_vector(alpha, "alpha")
    if a.size != n:
        raise InvalidInputError(f"{a.size} weights for {n} models")
    return a


def gd_solve(v0: ModelParams, alpha, suite, config: GdConfig = GdConfig()) -> ModelParams:
    """Projected gradient descent on the alpha-weighted risk, started at v0.

    The ball radius is taken from ``v0.domain_radius``. With steps=0 the start
    point is returned unchanged.
    """
    suite = list(suite)
    if not suite:
        raise InvalidInputError("need at least one model")
    a = _alpha_array(alpha, len(suite))
    radius = v0.domain_radius
    gamma = _resolve_gamma(config, suite, radius)
    v, _ = _gd_solve_array(
        v0.values.copy(), a, suite, gamma, config.steps, config.tolerance, radius
    )
    return ModelParams(v, radius)


@dataclass(frozen=True)
class BatchSolveResult:
    """Solutions for a batch of mixtures plus the gradient-evaluation bill."""

    solutions: np.ndarray
    steps: np.ndarray
    grad_evals: int
    radius: float

    def params(self, i: int) -> ModelParams:
        return ModelParams(self.solutions[i], self.radius)


def solve_batch(alphas, suite, config: GdConfig = GdConfig(),
                radius: float = DEFAULT_RADIUS) -> BatchSolveResult:
    """Solve each mixture from a cold start at the origin.

    Every descent step charges one gradient evaluation per source, so without
    early stopping the bill is exactly len(alphas) * steps * len(suite).
    """
    suite = list(suite)
    if not suite:
        raise InvalidInputError("need at least one model")
    rows = [_alpha_array(a, len(suite)) for a in alphas]
    if not rows:
        raise InvalidInputError("need at least one mixture")
    gamma = _resolve_gamma(config, suite, radius)
    dim = suite[0].dim
    solutions = np.empty((len(rows), dim))
    steps = np.empty(len(rows), dtype=np.int64)
    for i, a in enumerate(rows):
        solutions[i], steps[i] = _gd_solve_array(
            np.zeros(dim), a, suite, gamma, config.steps, config.tolerance, radius
        )
    return BatchSolveResult(
        solutions=solutions,
        steps=steps,
        grad_evals=int(steps.sum()) * len(suite),
        radius=radius,
    )


def contraction_steps(initial_distance: float, tolerance: float, mu: float,
                      gamma: float) -> int:
    """Steps needed so (1 - mu*gamma)^K * initial_distance <= tolerance."""
    if not 0.0 < mu * gamma < 1.0:
        raise InvalidInputError(f"need 0 < mu*gamma < 1, got {mu * gamma}")
    if initial_distance <= tolerance:
        return 0
    ratio = np.log(tolerance / initial_distance) / np.log1p(-mu * gamma)
    return int(np.ceil(ratio))


def mixture_lipschitz_bound(suite, radius: float = DEFAULT_RADIUS) -> float:
    """Bound sqrt(N) G / mu on the sensitivity of w*(alpha) to the mixture."""
    suite = list(suite)
    consts = suite_constants(suite, radius)
    if consts.mu <= 0.0:
        raise InvalidInputError("sensitivity bound needs strongly convex models")
    return float(np.sqrt(len(suite)) * consts.G / consts.mu)


@dataclass(frozen=True)
class LipschitzAudit:
    """Empirical check of the w*(alpha) sensitivity bound over random mixture pairs."""

    max_ratio: float
    bound: float
    pairs: int


def lipschitz_audit(suite, n_pairs: int = 10_000, seed: int = 0,
                    radius: float = DEFAULT_RADIUS) -> LipschitzAudit:
    """Sample mixture pairs, compare ||w*(a) - w*(a')|| / ||a - a'|| to the bound.

    Minimizers come from the closed form, so the suite must be quadratic. Raises
    :class:`InvariantError` if any sampled ratio exceeds sqrt(N) G / mu.
    """
    suite = list(suite)
    if n_pairs < 1:
        raise InvalidInputError(f"need at least one pair, got {n_pairs}")
    bound = mixture_lipschitz_bound(suite, radius)
    rng = RngStream(seed).generator()
    ones = np.ones(len(suite))
    max_ratio = 0.0
    for _ in range(n_pairs):
        a = rng.dirichlet(ones)
        b = rng.dirichlet(ones)
        gap = float(np.linalg.norm(a - b))
        if gap < 1e-12:
            continue
        wa = closed_form_wstar(suite, a, radius).values
        wb = closed_form_wstar(suite, b, radius).values
        ratio = float(np.linalg.norm(wa - wb)) / gap
        max_ratio = max(max_ratio, ratio)
    if max_ratio > bound:
        raise InvariantError(
            f"sensitivity ratio {max_ratio} exceeds the bound {bound}"
        )
    return LipschitzAudit(max_ratio=max_ratio, bound=bound, pairs=n_pairs)
