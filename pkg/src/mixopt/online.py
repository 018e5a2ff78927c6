"""Label-efficient online regression from mixtures to ERM solutions.

Rounds arrive as mixtures alpha_t. The learner keeps a packing of the simplex
by balls whose radius shrinks as eps_t = t^(-1/(1+N)); each ball stores the
labels observed inside it and predicts their running mean. Labels are expensive
(a fresh K-step descent solve), so they are drawn only on Bernoulli(p) rounds.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import (
    DEFAULT_RADIUS,
    InvalidInputError,
    InvariantError,
    MixtureWeights,
    ModelParams,
    RngStream,
    as_vector,
)
from .coerm import GdConfig, _resolve_gamma, gd_solve
from .domains import QuadraticLoss, closed_form_wstar

__all__ = [
    "PackingAudit",
    "PackingState",
    "RoundOutcome",
    "StreamResult",
    "dirichlet_stream",
    "new_state",
    "observe",
    "packing_audit",
    "run_stream",
    "shrinking_radius",
]


def shrinking_radius(t: int, n_sources: int) -> float:
    """Ball radius at round t: t^(-1/(1+N)). Rounds are 1-indexed."""
    if t < 1:
        raise InvalidInputError(f"rounds are 1-indexed, got {t}")
    if n_sources < 1:
        raise InvalidInputError(f"need at least one source, got {n_sources}")
    return float(t) ** (-1.0 / (1.0 + n_sources))


@dataclass
class PackingState:
    """Mutable learner state: ball centers, per-ball label statistics, round counter.

    ``label_counts`` counts stored labels only. On skipped rounds nothing is
    stored unless ``strict_listing`` is set, in which case a zero vector enters
    the ball's list (the literal protocol); the default averages observed labels
    only, which is what the running-mean analysis actually uses.
    """

    n_sources: int
    label_dim: int
    label_rate: float
    refine_steps: int
    gd_gamma: float | None = None
    domain_radius: float = DEFAULT_RADIUS
    strict_listing: bool = False
    centers: list = field(default_factory=list)
    label_sums: list = field(default_factory=list)
    label_counts: list = field(default_factory=list)
    created_at: list = field(default_factory=list)
    t: int = 0

    @property
    def n_centers(self) -> int:
        return len(self.centers)

    def cold_start(self) -> np.ndarray:
        return np.full(self.label_dim, 1.0 / self.label_dim)


def new_state(n_sources: int, label_dim: int, label_rate: float, refine_steps: int,
              gd_gamma: float | None = None, domain_radius: float = DEFAULT_RADIUS,
              strict_listing: bool = False) -> PackingState:
    """Fresh learner state; validates the protocol parameters."""
    if n_sources < 1 or label_dim < 1:
        raise InvalidInputError(f"bad dimensions: {n_sources} sources, {label_dim} outputs")
    if not 0.0 <= label_rate <= 1.0:
        raise InvalidInputError(f"label rate must lie in [0, 1], got {label_rate}")
    if refine_steps < 0:
        raise InvalidInputError(f"refine steps must be >= 0, got {refine_steps}")
    if gd_gamma is not None and not gd_gamma > 0.0:
        raise InvalidInputError(f"gd gamma must be positive, got {gd_gamma!r}")
    if domain_radius <= 0.0:
        raise InvalidInputError(f"domain radius must be positive, got {domain_radius}")
    return PackingState(
        n_sources=n_sources,
        label_dim=label_dim,
        label_rate=float(label_rate),
        refine_steps=int(refine_steps),
        gd_gamma=gd_gamma,
        domain_radius=float(domain_radius),
        strict_listing=bool(strict_listing),
    )


@dataclass(frozen=True)
class RoundOutcome:
    """What one round produced: prediction, bookkeeping flags, and optional loss."""

    t: int
    eps: float
    prediction: np.ndarray
    active_center: int
    created_center: bool
    label_drawn: bool
    loss: float


def observe(state: PackingState, alpha, suite, rng: np.random.Generator,
            oracle=None) -> tuple[RoundOutcome, PackingState]:
    """Process one round: locate the ball, predict, maybe draw a label.

    Nearest center is found by linear scan with ties broken toward the lowest
    index. If the nearest center is farther than eps_t (or no centers exist), a
    new ball is created at alpha_t and becomes the active ball. The prediction
    is the active ball's stored-label mean, or the cold start (1/d)1 while the
    ball is empty. With probability ``label_rate`` a label GD(0, alpha_t, K) is
    computed and stored in the active ball. ``oracle``, when given, maps alpha
    to the true minimizer and fills the squared-error loss (NaN otherwise).
    """
    a = alpha.values if isinstance(alpha, MixtureWeights) else as_vector(alpha, "alpha")
    if a.size != state.n_sources:
        raise InvalidInputError(f"mixture has {a.size} entries, state expects {state.n_sources}")
    t = state.t + 1
    eps = shrinking_radius(t, state.n_sources)

    created = False
    if not state.centers:
        active = 0
        created = True
    else:
        dists = [float(np.linalg.norm(c - a)) for c in state.centers]
        active = int(np.argmin(dists))
        if dists[active] > eps:
            active = state.n_centers
            created = True
    if created:
        state.centers.append(a.copy())
        state.label_sums.append(np.zeros(state.label_dim))
        state.label_counts.append(0)
        state.created_at.append(t)

    if state.label_counts[active] == 0:
        prediction = state.cold_start()
    else:
        prediction = state.label_sums[active] / state.label_counts[active]

    label_drawn = bool(rng.random() < state.label_rate)
    if label_drawn:
        start = ModelParams(np.zeros(state.label_dim), state.domain_radius)
        cfg = GdConfig(steps=state.refine_steps, gamma=state.gd_gamma)
        label = gd_solve(start, a, suite, cfg).values
        state.label_sums[active] = state.label_sums[active] + label
        state.label_counts[active] += 1
    elif state.strict_listing:
        state.label_counts[active] += 1

    if oracle is not None:
        truth = np.asarray(oracle(a), dtype=np.float64)
        loss = float(np.sum((prediction - truth) ** 2))
    else:
        loss = float("nan")
    state.t = t
    outcome = RoundOutcome(
        t=t,
        eps=eps,
        prediction=prediction,
        active_center=active,
        created_center=created,
        label_drawn=label_drawn,
        loss=loss,
    )
    return outcome, state


@dataclass(frozen=True)
class StreamResult:
    """Per-round records of one stream plus the final learner state."""

    rounds: np.ndarray
    eps: np.ndarray
    active_center: np.ndarray
    created_center: np.ndarray
    label_drawn: np.ndarray
    loss: np.ndarray
    label_total: np.ndarray
    predictions: np.ndarray
    state: PackingState

    @property
    def n_centers(self) -> int:
        return self.state.n_centers

    @property
    def total_labels(self) -> int:
        return int(self.label_total[-1]) if len(self.label_total) else 0


def dirichlet_stream(n_rounds: int, n_sources: int, seed: int) -> np.ndarray:
    """Uniformly distributed simplex points, shape (n_rounds, n_sources)."""
    if n_rounds < 1:
        raise InvalidInputError(f"need at least one round, got {n_rounds}")
    rng = RngStream(seed, 1).generator()
    return rng.dirichlet(np.ones(n_sources), size=n_rounds)


def run_stream(alphas, suite, label_rate: float, refine_steps: int, seed: int = 0,
               domain_radius: float = DEFAULT_RADIUS, gd_gamma: float | None = None,
               strict_listing: bool = False, oracle="auto") -> StreamResult:
    """Feed a whole mixture stream through :func:`observe`.

    ``oracle="auto"`` evaluates losses against the closed-form minimizer when
    the suite is quadratic and leaves them NaN otherwise; pass None to disable
    or a callable alpha -> w* to override. Label coin flips come from the
    stream keyed by (seed, 0).
    """
    suite = list(suite)
    if not suite:
        raise InvalidInputError("need at least one model")
    arr = np.atleast_2d(np.asarray(alphas, dtype=np.float64))
    if arr.ndim != 2 or arr.shape[0] < 1:
        raise InvalidInputError(f"alpha stream must be (T, N), got shape {arr.shape}")
    if gd_gamma is None:
        gd_gamma = _resolve_gamma(GdConfig(), suite, domain_radius)
    if oracle == "auto":
        if all(isinstance(mdl, QuadraticLoss) for mdl in suite):
            oracle = lambda a: closed_form_wstar(suite, a, domain_radius).values
        else:
            oracle = None

    state = new_state(
        n_sources=arr.shape[1],
        label_dim=suite[0].dim,
        label_rate=label_rate,
        refine_steps=refine_steps,
        gd_gamma=gd_gamma,
        domain_radius=domain_radius,
        strict_listing=strict_listing,
    )
    rng = RngStream(seed, 0).generator()

    n = arr.shape[0]
    eps = np.empty(n)
    active = np.empty(n, dtype=np.int64)
    created = np.empty(n, dtype=bool)
    drawn = np.empty(n, dtype=bool)
    loss = np.empty(n)
    label_total = np.empty(n, dtype=np.int64)
    predictions = np.empty((n, suite[0].dim))
    total = 0
    for i in range(n):
        outcome, state = observe(state, arr[i], suite, rng, oracle)
        eps[i] = outcome.eps
        active[i] = outcome.active_center
        created[i] = outcome.created_center
        drawn[i] = outcome.label_drawn
        loss[i] = outcome.loss
        predictions[i] = outcome.prediction
        total += int(outcome.label_drawn)
        label_total[i] = total
    return StreamResult(
        rounds=np.arange(1, n + 1, dtype=np.int64),
        eps=eps,
        active_center=active,
        created_center=created,
        label_drawn=drawn,
        loss=loss,
        label_total=label_total,
        predictions=predictions,
        state=state,
    )


@dataclass(frozen=True)
class PackingAudit:
    """Separation check result: center count against the packing growth bound."""

    n_centers: int
    eps_final: float
    min_margin: float
    empirical_constant: float


def packing_audit(state: PackingState) -> PackingAudit:
    """Verify every center was born farther than its creation radius from all
    earlier centers; raises :class:`InvariantError` on violation.

    The growth bound |S_T| <= C eps_T^(-N) does not pin the constant, so the
    audit reports the empirically fitted C = |S_T| eps_T^N instead of asserting
    a particular value.
    """
    if state.t < 1 or state.n_centers <= 1:
        eps_final = shrinking_radius(max(state.t, 1), state.n_sources)
        return PackingAudit(
            n_centers=state.n_centers,
            eps_final=eps_final,
            min_margin=float("inf"),
            empirical_constant=state.n_centers * eps_final**state.n_sources,
        )
    min_margin = float("inf")
    for j in range(1, state.n_centers):
        eps_birth = shrinking_radius(state.created_at[j], state.n_sources)
        nearest = min(
            float(np.linalg.norm(state.centers[j] - state.centers[i])) for i in range(j)
        )
        margin = nearest - eps_birth
        if margin <= -1e-12:
            raise InvariantError(
                f"center {j} was created {nearest} from an earlier center, "
                f"inside its creation radius {eps_birth}"
            )
        min_margin = min(min_margin, margin)
    eps_final = shrinking_radius(state.t, state.n_sources)
    return PackingAudit(
        n_centers=state.n_centers,
        eps_final=eps_final,
        min_margin=min_margin,
        empirical_constant=state.n_centers * eps_final**state.n_sources,
    )
