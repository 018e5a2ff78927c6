"""Shared numeric primitives: simplex/ball projections, smoothed absolute value, RNG streams."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "DEFAULT_RADIUS",
    "InvalidInputError",
    "InvariantError",
    "MixtureWeights",
    "ModelParams",
    "RngStream",
    "SmoothAbs",
    "as_vector",
    "project_ball",
    "project_ball_array",
    "project_simplex",
    "project_simplex_array",
    "smooth_abs",
    "smooth_abs_deriv",
]

DEFAULT_RADIUS = 10.0

# Constructor tolerances: outputs of the exact projections satisfy these to machine precision.
SIMPLEX_SUM_TOL = 1e-9
BALL_NORM_TOL = 1e-9


class InvalidInputError(ValueError):
    """Raised when a caller passes non-finite values, bad shapes, or out-of-range settings."""


class InvariantError(RuntimeError):
    """Raised when an internal consistency check fails (e.g. a packing violation)."""


def as_vector(x, name: str) -> np.ndarray:
    """Coerce ``x`` to a finite 1-d float64 array or raise :class:`InvalidInputError`."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise InvalidInputError(f"{name} must be a nonempty 1-d vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} contains non-finite entries")
    return arr


def _freeze(arr: np.ndarray) -> np.ndarray:
    out = arr.copy()
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class MixtureWeights:
    """A point on the probability simplex: entries >= 0, summing to 1 within 1e-9."""

    values: np.ndarray

    def __post_init__(self):
        arr = as_vector(self.values, "mixture weights")
        if np.any(arr < 0.0):
            raise InvalidInputError(f"mixture weights must be nonnegative, min is {arr.min()}")
        total = float(arr.sum())
        if abs(total - 1.0) > SIMPLEX_SUM_TOL:
            raise InvalidInputError(f"mixture weights must sum to 1, got {total!r}")
        object.__setattr__(self, "values", _freeze(arr))

    @property
    def n(self) -> int:
        return self.values.size

    @staticmethod
    def uniform(n: int) -> "MixtureWeights":
        if n < 1:
            raise InvalidInputError(f"need at least one component, got {n}")
        return MixtureWeights(np.full(n, 1.0 / n))


@dataclass(frozen=True)
class ModelParams:
    """A parameter vector constrained to the L2 ball of radius ``domain_radius``."""

    values: np.ndarray
    domain_radius: float = DEFAULT_RADIUS

    def __post_init__(self):
        arr = as_vector(self.values, "model parameters")
        radius = float(self.domain_radius)
        if not np.isfinite(radius) or radius <= 0.0:
            raise InvalidInputError(f"domain radius must be positive and finite, got {radius!r}")
        nrm = float(np.linalg.norm(arr))
        if nrm > radius + BALL_NORM_TOL:
            raise InvalidInputError(
                f"parameter norm {nrm!r} exceeds domain radius {radius!r}"
            )
        object.__setattr__(self, "values", _freeze(arr))
        object.__setattr__(self, "domain_radius", radius)

    @property
    def dim(self) -> int:
        return self.values.size

    @staticmethod
    def origin(dim: int, domain_radius: float = DEFAULT_RADIUS) -> "ModelParams":
        if dim < 1:
            raise InvalidInputError(f"need at least one coordinate, got {dim}")
        return ModelParams(np.zeros(dim), domain_radius)


def project_simplex_array(v: np.ndarray) -> np.ndarray:
    """Euclidean projection of a raw array onto the probability simplex.

    Sort-and-threshold rule: with u the entries of v in decreasing order, the active
    set size is the largest j with u_j > (sum_{i<=j} u_i - 1)/j, and every entry is
    shifted down by the corresponding threshold and clipped at zero.
    """
    u = np.sort(v)[::-1]
    cumulative = np.cumsum(u)
    counts = np.arange(1, v.size + 1)
    rho = np.nonzero(u * counts > cumulative - 1.0)[0][-1]
    theta = (cumulative[rho] - 1.0) / (rho + 1.0)
    return np.maximum(v - theta, 0.0)


def project_simplex(v) -> MixtureWeights:
    """Euclidean projection onto the probability simplex."""
    arr = as_vector(v, "simplex projection input")
    return MixtureWeights(project_simplex_array(arr))


def project_ball_array(v: np.ndarray, radius: float) -> np.ndarray:
    """Euclidean projection of a raw array onto the L2 ball of the given radius."""
    nrm = float(np.linalg.norm(v))
    if nrm <= radius:
        return v.copy()
    return v * (radius / nrm)


def project_ball(v, radius: float = DEFAULT_RADIUS) -> ModelParams:
    """Euclidean projection onto the L2 ball: identity inside, rescaled to the sphere outside."""
    arr = as_vector(v, "ball projection input")
    radius = float(radius)
    if not np.isfinite(radius) or radius <= 0.0:
        raise InvalidInputError(f"ball radius must be positive and finite, got {radius!r}")
    return ModelParams(project_ball_array(arr, radius), radius)


@dataclass(frozen=True)
class SmoothAbs:
    """Smoothed absolute value g(x) = sqrt(x^2 + c) with c > 0.

    g is 1-Lipschitz, its derivative is (1/sqrt(c))-Lipschitz, and
    0 <= g(x) - |x| <= sqrt(c) uniformly.
    """

    c: float = 1e-4

    def __post_init__(self):
        c = float(self.c)
        if not np.isfinite(c) or c <= 0.0:
            raise InvalidInputError(f"smoothing constant must be positive and finite, got {c!r}")
        object.__setattr__(self, "c", c)

    @property
    def gap(self) -> float:
        """Worst-case overshoot above |x|, attained at x = 0."""
        return float(np.sqrt(self.c))

    @property
    def slope_bound(self) -> float:
        """Uniform bound on |g'|."""
        return 1.0

    @property
    def curvature_bound(self) -> float:
        """Lipschitz constant of g'."""
        return float(1.0 / np.sqrt(self.c))


def smooth_abs(x, g: SmoothAbs):
    """Evaluate g(x) = sqrt(x^2 + c) elementwise; scalars in, scalar out."""
    arr = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError("smooth_abs input contains non-finite entries")
    out = np.hypot(arr, np.sqrt(g.c))
    return float(out) if out.ndim == 0 else out


def smooth_abs_deriv(x, g: SmoothAbs):
    """Evaluate g'(x) = x / sqrt(x^2 + c) elementwise; |g'| < 1 strictly."""
    arr = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError("smooth_abs_deriv input contains non-finite entries")
    out = arr / np.hypot(arr, np.sqrt(g.c))
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class RngStream:
    """A named, counter-based random stream: (seed, stream_id) -> independent Generator.

    Streams with the same seed and different ids are statistically independent,
    and the mapping is stable across runs and platforms.
    """

    seed: int
    stream_id: int = 0

    def __post_init__(self):
        if not isinstance(self.seed, (int, np.integer)) or self.seed < 0:
            raise InvalidInputError(f"seed must be a nonnegative integer, got {self.seed!r}")
        if not isinstance(self.stream_id, (int, np.integer)) or self.stream_id < 0:
            raise InvalidInputError(
                f"stream id must be a nonnegative integer, got {self.stream_id!r}"
            )
        object.__setattr__(self, "seed", int(self.seed))
        object.__setattr__(self, "stream_id", int(self.stream_id))

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.stream_id,))
        return np.random.Generator(np.random.Philox(seq))
