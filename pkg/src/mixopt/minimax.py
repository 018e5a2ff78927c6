"""Stochastic corrected gradient descent-ascent for mixture-weight estimation.

The objective couples a simplex-constrained mixture alpha with a ball-constrained
discrepancy witness w:

    F(alpha, w) = sum_j alpha_j g(f_T(w) - f_j(w)) + C alpha' M alpha,

where g is the smoothed absolute value, f_T / f_j are target / source risks,
and M = diag(1/m_j) weights sources by sample count. alpha descends, w ascends.
Each step refreshes a scalar tracker z_j of the risk discrepancy using the same
minibatch at the current and previous witness, which keeps the compositional
gradient estimate convergent despite the nonlinearity of g.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .core import (
    DEFAULT_RADIUS,
    InvalidInputError,
    MixtureWeights,
    ModelParams,
    RngStream,
    SmoothAbs,
    as_vector,
    project_ball_array,
    project_simplex_array,
    smooth_abs,
    smooth_abs_deriv,
)
from .domains import LossModel, suite_constants

__all__ = [
    "MinimaxConfig",
    "MinimaxResult",
    "MinimaxState",
    "MixtureInstance",
    "StationaryGap",
    "alpha_gradient",
    "alpha_strong_convexity",
    "init_state",
    "make_generators",
    "objective",
    "objective_smoothness",
    "resolve_config",
    "run",
    "stationary_gap",
    "step",
    "theorem_schedule",
    "w_gradient",
]


@dataclass(frozen=True)
class MixtureInstance:
    """A target model plus N source models sharing one parameter space."""

    sources: tuple[LossModel, ...]
    target: LossModel

    def __post_init__(self):
        sources = tuple(self.sources)
        if not sources:
            raise InvalidInputError("need at least one source")
        dim = self.target.dim
        if any(s.dim != dim for s in sources):
            raise InvalidInputError("sources and target must share one parameter dimension")
        object.__setattr__(self, "sources", sources)

    @property
    def n_sources(self) -> int:
        return len(self.sources)

    @property
    def dim(self) -> int:
        return self.target.dim

    @property
    def sample_counts(self) -> np.ndarray:
        return np.array([s.sample_count for s in self.sources], dtype=np.float64)

    @property
    def reg_matrix_diag(self) -> np.ndarray:
        """Diagonal of M: one over each source's sample count."""
        return 1.0 / self.sample_counts


@dataclass(frozen=True)
class MinimaxConfig:
    """Hyperparameters for the corrected descent-ascent run.

    ``eta``/``gamma`` left as None are filled from the instance constants by
    :func:`theorem_schedule` (via :func:`resolve_config` or :func:`run`). A zero
    step size freezes that coordinate, which is how tracking-only experiments
    hold w fixed.
    """

    batch_size: int = 1
    beta: float = 0.1
    eta: float | None = None
    gamma: float | None = None
    reg_weight: float = 1.0
    steps: int = 1000
    smoothing: float = 1e-4
    seed: int = 0
    radius: float = DEFAULT_RADIUS
    record_every: int = 1

    def __post_init__(self):
        if self.batch_size < 1:
            raise InvalidInputError(f"batch size must be >= 1, got {self.batch_size}")
        if not 0.0 < self.beta <= 1.0:
            raise InvalidInputError(f"beta must lie in (0, 1], got {self.beta}")
        for name in ("eta", "gamma"):
            value = getattr(self, name)
            if value is not None and (not np.isfinite(value) or value < 0.0):
                raise InvalidInputError(f"{name} must be finite and >= 0, got {value!r}")
        if self.reg_weight < 0.0:
            raise InvalidInputError(f"regularizer weight must be >= 0, got {self.reg_weight}")
        if self.steps < 0:
            raise InvalidInputError(f"step count must be >= 0, got {self.steps}")
        if self.smoothing <= 0.0:
            raise InvalidInputError(f"smoothing must be positive, got {self.smoothing}")
        if self.radius <= 0.0:
            raise InvalidInputError(f"radius must be positive, got {self.radius}")
        if self.record_every < 1:
            raise InvalidInputError(f"record interval must be >= 1, got {self.record_every}")

    @property
    def smoother(self) -> SmoothAbs:
        return SmoothAbs(self.smoothing)


@dataclass(frozen=True)
class MinimaxState:
    """Iterates after step t: mixture alpha, witness w, previous witness, trackers z."""

    alpha: np.ndarray
    w: np.ndarray
    w_prev: np.ndarray
    z: np.ndarray
    t: int


def objective_smoothness(instance: MixtureInstance, config: MinimaxConfig) -> float:
    """Smoothness constant of the coupled objective on the feasible set.

    max{4 G_f^2 L_g + 2 G_g L_f, 2C/m_min} with G_g = 1 and L_g = 1/sqrt(c).
    """
    consts = suite_constants(list(instance.sources) + [instance.target], config.radius)
    smoother = config.smoother
    grad_part = 4.0 * consts.G**2 * smoother.curvature_bound + 2.0 * smoother.slope_bound * consts.L
    reg_part = 2.0 * config.reg_weight / float(instance.sample_counts.min())
    return max(grad_part, reg_part)


def alpha_strong_convexity(instance: MixtureInstance, config: MinimaxConfig) -> float:
    """Strong convexity of F(., w) in alpha: 2C / m_max."""
    return 2.0 * config.reg_weight / float(instance.sample_counts.max())


def theorem_schedule(instance: MixtureInstance, config: MinimaxConfig) -> tuple[float, float]:
    """Default step sizes eta = mu/L^2 and gamma = mu^3/(N G_g^2 G_f^2 L^2)."""
    mu = alpha_strong_convexity(instance, config)
    if mu <= 0.0:
        raise InvalidInputError("default schedule needs a positive regularizer weight")
    L = objective_smoothness(instance, config)
    consts = suite_constants(list(instance.sources) + [instance.target], config.radius)
    eta = mu / L**2
    gamma = mu**3 / (instance.n_sources * consts.G**2 * L**2)
    return eta, gamma


def resolve_config(instance: MixtureInstance, config: MinimaxConfig) -> MinimaxConfig:
    """Fill unset step sizes from the default schedule."""
    if config.eta is not None and config.gamma is not None:
        return config
    eta, gamma = theorem_schedule(instance, config)
    return dataclasses.replace(
        config,
        eta=config.eta if config.eta is not None else eta,
        gamma=config.gamma if config.gamma is not None else gamma,
    )


def _check_resolved(config: MinimaxConfig) -> None:
    if config.eta is None or config.gamma is None:
        raise InvalidInputError("step sizes are unset; call resolve_config first")


def init_state(instance: MixtureInstance, config: MinimaxConfig, w0=None) -> MinimaxState:
    """Uniform alpha, w = w_prev = w0 (origin by default), full-batch trackers.

    z_j starts at the exact discrepancy f_T(w0) - f_j(w0), and the previous witness
    coincides with the current one; both are required for the correction term to
    telescope.
    """
    if w0 is None:
        w = np.zeros(instance.dim)
    else:
        w = w0.values.copy() if isinstance(w0, ModelParams) else as_vector(w0, "w0").copy()
        if w.size != instance.dim:
            raise InvalidInputError(f"w0 has size {w.size}, instance expects {instance.dim}")
        if np.linalg.norm(w) > config.radius + 1e-9:
            raise InvalidInputError("w0 lies outside the parameter ball")
    target_risk = instance.target.risk(w)
    z = np.array([target_risk - s.risk(w) for s in instance.sources])
    alpha = np.full(instance.n_sources, 1.0 / instance.n_sources)
    return MinimaxState(alpha=alpha, w=w, w_prev=w.copy(), z=z, t=0)


def make_generators(instance: MixtureInstance, seed: int) -> list[np.random.Generator]:
    """One independent minibatch stream per domain: target first, then sources."""
    return [RngStream(seed, i).generator() for i in range(instance.n_sources + 1)]


def step(instance: MixtureInstance, state: MinimaxState, config: MinimaxConfig,
         generators: list[np.random.Generator]) -> MinimaxState:
    """One corrected descent-ascent step.

    Order within the step: sample one minibatch per domain, refresh the trackers
    z using that same batch at w and w_prev, ascend w along the alpha-weighted
    chain-rule gradient built from the refreshed trackers, then descend alpha
    using the pre-update trackers.
    """
    _check_resolved(config)
    if len(generators) != instance.n_sources + 1:
        raise InvalidInputError(
            f"need {instance.n_sources + 1} generators, got {len(generators)}"
        )
    alpha, w, w_prev, z = state.alpha, state.w, state.w_prev, state.z
    smoother = config.smoother
    beta = config.beta
    B = config.batch_size

    target = instance.target
    idx_t = target.sample_batch(B, generators[0])
    target_now = target.risk(w, idx_t)
    target_before = target.risk(w_prev, idx_t)
    target_grad = target.grad(w, idx_t)

    z_next = np.empty_like(z)
    w_direction = np.zeros_like(w)
    for j, source in enumerate(instance.sources):
        idx = source.sample_batch(B, generators[j + 1])
        diff_now = target_now - source.risk(w, idx)
        diff_before = target_before - source.risk(w_prev, idx)
        z_next[j] = (1.0 - beta) * (z[j] + diff_now - diff_before) + beta * diff_now
        slope = smooth_abs_deriv(z_next[j], smoother)
        w_direction += alpha[j] * slope * (target_grad - source.grad(w, idx))

    w_next = project_ball_array(w + config.gamma * w_direction, config.radius)
    alpha_direction = smooth_abs(z, smoother) + \
        2.0 * config.reg_weight * instance.reg_matrix_diag * alpha
    alpha_next = project_simplex_array(alpha - config.eta * alpha_direction)
    return MinimaxState(alpha=alpha_next, w=w_next, w_prev=w, z=z_next, t=state.t + 1)


def _exact_discrepancies(instance: MixtureInstance, w: np.ndarray) -> np.ndarray:
    target_risk = instance.target.risk(w)
    return np.array([target_risk - s.risk(w) for s in instance.sources])


def objective(instance: MixtureInstance, alpha, w, config: MinimaxConfig) -> float:
    """Full-batch objective value F(alpha, w)."""
    a = alpha.values if isinstance(alpha, MixtureWeights) else as_vector(alpha, "alpha")
    wv = w.values if isinstance(w, ModelParams) else as_vector(w, "w")
    diffs = _exact_discrepancies(instance, wv)
    reg = config.reg_weight * float(a @ (instance.reg_matrix_diag * a))
    return float(a @ smooth_abs(diffs, config.smoother)) + reg


def alpha_gradient(instance: MixtureInstance, alpha, w, config: MinimaxConfig) -> np.ndarray:
    """Full-batch gradient of F in alpha: [g(f_T - f_j)]_j + 2 C M alpha."""
    a = alpha.values if isinstance(alpha, MixtureWeights) else as_vector(alpha, "alpha")
    wv = w.values if isinstance(w, ModelParams) else as_vector(w, "w")
    diffs = _exact_discrepancies(instance, wv)
    return smooth_abs(diffs, config.smoother) + \
        2.0 * config.reg_weight * instance.reg_matrix_diag * a


def w_gradient(instance: MixtureInstance, alpha, w, config: MinimaxConfig) -> np.ndarray:
    """Full-batch gradient of F in w: sum_j alpha_j g'(f_T - f_j)(grad f_T - grad f_j)."""
    a = alpha.values if isinstance(alpha, MixtureWeights) else as_vector(alpha, "alpha")
    wv = w.values if isinstance(w, ModelParams) else as_vector(w, "w")
    diffs = _exact_discrepancies(instance, wv)
    slopes = smooth_abs_deriv(diffs, config.smoother)
    target_grad = instance.target.grad(wv)
    out = np.zeros_like(wv)
    for aj, slope, source in zip(a, slopes, instance.sources):
        out += aj * slope * (target_grad - source.grad(wv))
    return out


@dataclass(frozen=True)
class StationaryGap:
    """Projected-gradient residuals at (alpha, w); zero exactly at stationary pairs."""

    alpha_gap: np.ndarray
    w_gap: np.ndarray

    @property
    def sq_norm(self) -> float:
        return float(self.alpha_gap @ self.alpha_gap + self.w_gap @ self.w_gap)


def stationary_gap(instance: MixtureInstance, alpha, w,
                   config: MinimaxConfig) -> StationaryGap:
    """Exact first-order stationarity measure at (alpha, w).

    alpha component: (alpha - P_simplex(alpha - eta grad_alpha)) / eta;
    w component: (w - P_ball(w + gamma grad_w)) / gamma. Uses full-batch
    gradients, so this is a measurement tool, not part of the stochastic loop.
    """
    _check_resolved(config)
    if config.eta == 0.0 or config.gamma == 0.0:
        raise InvalidInputError("stationarity gap needs strictly positive step sizes")
    a = alpha.values if isinstance(alpha, MixtureWeights) else as_vector(alpha, "alpha")
    wv = w.values if isinstance(w, ModelParams) else as_vector(w, "w")
    ga = alpha_gradient(instance, a, wv, config)
    gw = w_gradient(instance, a, wv, config)
    alpha_gap = (a - project_simplex_array(a - config.eta * ga)) / config.eta
    w_gap = (wv - project_ball_array(wv + config.gamma * gw, config.radius)) / config.gamma
    return StationaryGap(alpha_gap=alpha_gap, w_gap=w_gap)


@dataclass(frozen=True)
class MinimaxResult:
    """Recorded trajectory plus final iterates of one descent-ascent run."""

    steps: np.ndarray
    objective: np.ndarray
    gap_sq: np.ndarray
    alphas: np.ndarray
    final_alpha: MixtureWeights
    final_w: ModelParams
    config: MinimaxConfig

    @property
    def mean_gap_sq(self) -> float:
        return float(self.gap_sq.mean())

    @property
    def first_quartile_mean_gap_sq(self) -> float:
        k = max(len(self.gap_sq) // 4, 1)
        return float(self.gap_sq[:k].mean())

    @property
    def last_quartile_mean_gap_sq(self) -> float:
        k = max(len(self.gap_sq) // 4, 1)
        return float(self.gap_sq[-k:].mean())


def run(instance: MixtureInstance, config: MinimaxConfig, w0=None) -> MinimaxResult:
    """Run the corrected descent-ascent loop, recording objective and gap.

    The gap is evaluated with exact full-batch gradients at every recorded step
    (every ``record_every``-th iterate and always the last one).
    """
    config = resolve_config(instance, config)
    state = init_state(instance, config, w0)
    generators = make_generators(instance, config.seed)

    steps, objectives, gaps, alphas = [], [], [], []

    def record(st: MinimaxState) -> None:
        steps.append(st.t)
        objectives.append(objective(instance, st.alpha, st.w, config))
        gaps.append(stationary_gap(instance, st.alpha, st.w, config).sq_norm)
        alphas.append(st.alpha.copy())

    for t in range(1, config.steps + 1):
        state = step(instance, state, config, generators)
        if t % config.record_every == 0 or t == config.steps:
            record(state)
    if not steps:
        record(state)

    return MinimaxResult(
        steps=np.array(steps, dtype=np.int64),
        objective=np.array(objectives),
        gap_sq=np.array(gaps),
        alphas=np.array(alphas),
        final_alpha=MixtureWeights(state.alpha.copy()),
        final_w=ModelParams(state.w.copy(), config.radius),
        config=config,
    )
