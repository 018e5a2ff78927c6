"""Source and target domains: datasets, loss models, synthetic generators, CSV I/O.

Every loss model exposes the same oracle surface: exact risk/gradient over the full
sample, the same quantities over an explicit index multiset (minibatches sample
uniformly with replacement), and curvature constants valid on an L2 parameter ball.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import (
    DEFAULT_RADIUS,
    InvalidInputError,
    MixtureWeights,
    ModelParams,
    RngStream,
    as_vector,
    project_ball_array,
)

__all__ = [
    "CsvSchema",
    "CurvatureConstants",
    "Dataset",
    "DatasetError",
    "GroupedSuite",
    "LogisticLoss",
    "LossModel",
    "QuadraticLoss",
    "SoftmaxLoss",
    "closed_form_wstar",
    "estimate_constants",
    "grad_minibatch",
    "load_csv",
    "make_grouped_classification",
    "make_grouped_problem",
    "make_quadratic_suite",
    "risk_minibatch",
    "save_csv",
    "standardize_features",
    "suite_constants",
    "train_test_split",
]


class DatasetError(ValueError):
    """Raised for malformed dataset files or inconsistent dataset contents."""


@dataclass(frozen=True)
class Dataset:
    """A labeled sample: features of shape (n, p) and labels of shape (n,)."""

    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        feats = np.asarray(self.features, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.float64)
        if feats.ndim != 2 or feats.shape[0] == 0 or feats.shape[1] == 0:
            raise DatasetError(f"features must be a nonempty (n, p) array, got shape {feats.shape}")
        if labels.ndim != 1 or labels.shape[0] != feats.shape[0]:
            raise DatasetError(
                f"labels must be one per row: {feats.shape[0]} rows, {labels.shape} labels"
            )
        if not np.all(np.isfinite(feats)) or not np.all(np.isfinite(labels)):
            raise DatasetError("dataset contains non-finite entries")
        feats = feats.copy()
        labels = labels.copy()
        feats.flags.writeable = False
        labels.flags.writeable = False
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "labels", labels)

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]


@dataclass(frozen=True)
class CsvSchema:
    """Column layout for dataset CSV files.

    ``feature_columns=None`` takes every non-label column in header order.
    """

    label_column: str = "label"
    feature_columns: tuple[str, ...] | None = None


def load_csv(path, schema: CsvSchema = CsvSchema()) -> Dataset:
    """Load a dataset from a headered CSV file.

    Raises :class:`DatasetError` with the offending line number on malformed rows,
    on a missing label column, and on files with no data rows. Values are loaded
    verbatim; see :func:`standardize_features` for rescaling.
    """
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DatasetError(f"{path}: empty file, expected a header row") from None
        header = [h.strip() for h in header]
        if schema.label_column not in header:
            raise DatasetError(f"{path}: header has no {schema.label_column!r} column: {header}")
        label_idx = header.index(schema.label_column)
        if schema.feature_columns is None:
            feature_idx = [i for i in range(len(header)) if i != label_idx]
        else:
            missing = [c for c in schema.feature_columns if c not in header]
            if missing:
                raise DatasetError(f"{path}: header is missing feature columns {missing}")
            feature_idx = [header.index(c) for c in schema.feature_columns]
        if not feature_idx:
            raise DatasetError(f"{path}: no feature columns")

        rows: list[list[float]] = []
        labels: list[float] = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DatasetError(
                    f"{path}: line {lineno}: expected {len(header)} fields, got {len(row)}"
                )
            try:
                rows.append([float(row[i]) for i in feature_idx])
                labels.append(float(row[label_idx]))
            except ValueError as exc:
                raise DatasetError(f"{path}: line {lineno}: {exc}") from None
    if not rows:
        raise DatasetError(f"{path}: no data rows")
    return Dataset(np.array(rows), np.array(labels))


def save_csv(dataset: Dataset, path, feature_names: tuple[str, ...] | None = None,
             label_name: str = "label") -> None:
    """Write a dataset to CSV with full float precision (round-trips through load_csv)."""
    if feature_names is None:
        feature_names = tuple(f"x{i}" for i in range(dataset.n_features))
    if len(feature_names) != dataset.n_features:
        raise InvalidInputError(
            f"{len(feature_names)} feature names for {dataset.n_features} features"
        )
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(feature_names) + [label_name])
        for x, y in zip(dataset.features, dataset.labels):
            writer.writerow([repr(float(v)) for v in x] + [repr(float(y))])


def standardize_features(dataset: Dataset) -> Dataset:
    """Rescale features to zero mean and unit variance; constant columns map to zero."""
    mean = dataset.features.mean(axis=0)
    std = dataset.features.std(axis=0)
    std = np.where(std < 1e-12, 1.0, std)
    return Dataset((dataset.features - mean) / std, dataset.labels)


def train_test_split(dataset: Dataset, test_fraction: float, rng: np.random.Generator):
    """Random split into (train, test); both sides keep at least one sample."""
    if not 0.0 < test_fraction < 1.0:
        raise InvalidInputError(f"test fraction must lie in (0, 1), got {test_fraction}")
    n = dataset.n_samples
    n_test = min(max(int(round(n * test_fraction)), 1), n - 1)
    perm = rng.permutation(n)
    test_idx, train_idx = perm[:n_test], perm[n_test:]
    return (
        Dataset(dataset.features[train_idx], dataset.labels[train_idx]),
        Dataset(dataset.features[test_idx], dataset.labels[test_idx]),
    )


@dataclass(frozen=True)
class CurvatureConstants:
    """Bounds valid on the parameter ball: gradient norm G, smoothness L, strong convexity mu."""

    G: float
    L: float
    mu: float

    def __post_init__(self):
        g, l, mu = float(self.G), float(self.L), float(self.mu)
        if not all(np.isfinite(v) for v in (g, l, mu)):
            raise InvalidInputError(f"constants must be finite, got {(g, l, mu)}")
        if g < 0.0 or l <= 0.0 or mu < 0.0 or mu > l:
            raise InvalidInputError(f"need G >= 0 and 0 <= mu <= L, got {(g, l, mu)}")
        object.__setattr__(self, "G", g)
        object.__setattr__(self, "L", l)
        object.__setattr__(self, "mu", mu)


def _param_array(w, dim: int) -> np.ndarray:
    arr = w.values if isinstance(w, ModelParams) else as_vector(w, "parameter vector")
    if arr.size != dim:
        raise InvalidInputError(f"parameter vector has size {arr.size}, model expects {dim}")
    return arr


class LossModel:
    """Common oracle surface for one domain's empirical risk.

    ``indices=None`` means the full sample; an explicit integer array evaluates the
    same expression over that index multiset, so a minibatch estimate with B draws
    is unbiased for the full-sample quantity.
    """

    kind: str
    dim: int
    sample_count: int

    def risk(self, w, indices=None) -> float:
        raise NotImplementedError

    def grad(self, w, indices=None) -> np.ndarray:
        raise NotImplementedError

    def sample_batch(self, size: int, rng: np.random.Generator):
        """Uniform-with-replacement index draw; None for sample-free models."""
        if size < 1:
            raise InvalidInputError(f"batch size must be >= 1, got {size}")
        if self.sample_count <= 1:
            return None
        return rng.integers(0, self.sample_count, size=size)

    def constants(self, radius: float = DEFAULT_RADIUS) -> CurvatureConstants:
        raise NotImplementedError


def risk_minibatch(model: LossModel, w, size: int, rng: np.random.Generator):
    """Sample a batch and evaluate its risk; returns (value, indices)."""
    idx = model.sample_batch(size, rng)
    return model.risk(w, idx), idx


def grad_minibatch(model: LossModel, w, size: int, rng: np.random.Generator):
    """Sample a batch and evaluate its gradient; returns (gradient, indices)."""
    idx = model.sample_batch(size, rng)
    return model.grad(w, idx), idx


class QuadraticLoss(LossModel):
    """f(w) = 0.5 (w - center)' A (w - center) with A symmetric positive definite.

    Deterministic: minibatch indices are ignored and sample_batch returns None.
    ``sample_count`` only feeds the mixture regularizer's 1/m weights.
    """

    kind = "quadratic"

    def __init__(self, A, center, sample_count: int = 1):
        A = np.asarray(A, dtype=np.float64)
        center = as_vector(center, "quadratic center")
        if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] != center.size:
            raise InvalidInputError(f"A must be square matching center: {A.shape} vs {center.size}")
        if not np.all(np.isfinite(A)):
            raise InvalidInputError("A contains non-finite entries")
        if not np.allclose(A, A.T, atol=1e-10):
            raise InvalidInputError("A must be symmetric")
        eigs = np.linalg.eigvalsh(A)
        if eigs[0] <= 0.0:
            raise InvalidInputError(f"A must be positive definite, min eigenvalue {eigs[0]}")
        if sample_count < 1:
            raise InvalidInputError(f"sample count must be >= 1, got {sample_count}")
        self.A = A
        self.center = center
        self.dim = center.size
        self.sample_count = int(sample_count)
        self._eig_min = float(eigs[0])
        self._eig_max = float(eigs[-1])

    def risk(self, w, indices=None) -> float:
        diff = _param_array(w, self.dim) - self.center
        return 0.5 * float(diff @ self.A @ diff)

    def grad(self, w, indices=None) -> np.ndarray:
        return self.A @ (_param_array(w, self.dim) - self.center)

    def sample_batch(self, size: int, rng: np.random.Generator):
        if size < 1:
            raise InvalidInputError(f"batch size must be >= 1, got {size}")
        return None

    def constants(self, radius: float = DEFAULT_RADIUS) -> CurvatureConstants:
        G = self._eig_max * (radius + float(np.linalg.norm(self.center)))
        return CurvatureConstants(G=G, L=self._eig_max, mu=self._eig_min)


def _check_feature_matrix(dataset: Dataset) -> np.ndarray:
    return dataset.features


class LogisticLoss(LossModel):
    """Binary logistic regression risk with an L2 regularizer.

    Labels must be 0/1; internally mapped to -1/+1. The regularizer contributes the
    strong convexity, so ``reg`` > 0 is required.
    """

    kind = "logistic"

    def __init__(self, dataset: Dataset, reg: float = 0.1):
        labels = dataset.labels
        if not np.all(np.isin(labels, (0.0, 1.0))):
            raise InvalidInputError("logistic labels must be 0 or 1")
        if not reg > 0.0:
            raise InvalidInputError(f"regularizer must be positive, got {reg}")
        self.dataset = dataset
        self.X = _check_feature_matrix(dataset)
        self.y = np.where(labels > 0.5, 1.0, -1.0)
        self.reg = float(reg)
        self.dim = dataset.n_features
        self.sample_count = dataset.n_samples

    def _batch(self, indices):
        if indices is None:
            return self.X, self.y
        return self.X[indices], self.y[indices]

    def risk(self, w, indices=None) -> float:
        w = _param_array(w, self.dim)
        X, y = self._batch(indices)
        margins = y * (X @ w)
        return float(np.mean(np.logaddexp(0.0, -margins)) + 0.5 * self.reg * (w @ w))

    def grad(self, w, indices=None) -> np.ndarray:
        w = _param_array(w, self.dim)
        X, y = self._batch(indices)
        margins = y * (X @ w)
        # sigma(-margin) computed in log space to stay stable for large |margin|
        weights = -y * np.exp(-np.logaddexp(0.0, margins))
        return X.T @ weights / len(weights) + self.reg * w

    def constants(self, radius: float = DEFAULT_RADIUS) -> CurvatureConstants:
        row_norms = np.linalg.norm(self.X, axis=1)
        max_norm = float(row_norms.max())
        G = max_norm + self.reg * radius
        L = 0.25 * max_norm**2 + self.reg
        return CurvatureConstants(G=G, L=L, mu=self.reg)


class SoftmaxLoss(LossModel):
    """Multinomial logistic risk over k classes with an L2 regularizer.

    Parameters are the flattened (k, p) weight matrix, so dim = k * p. Labels must
    be integers in [0, k).
    """

    kind = "softmax"

    def __init__(self, dataset: Dataset, n_classes: int, reg: float = 0.1):
        labels = dataset.labels
        if n_classes < 2:
            raise InvalidInputError(f"need at least two classes, got {n_classes}")
        if not np.all(labels == np.round(labels)):
            raise InvalidInputError("softmax labels must be integers")
        if labels.min() < 0 or labels.max() >= n_classes:
            raise InvalidInputError(
                f"labels must lie in [0, {n_classes}), got range "
                f"[{labels.min()}, {labels.max()}]"
            )
        if not reg > 0.0:
            raise InvalidInputError(f"regularizer must be positive, got {reg}")
        self.dataset = dataset
        self.X = _check_feature_matrix(dataset)
        self.y = labels.astype(np.int64)
        self.n_classes = int(n_classes)
        self.reg = float(reg)
        self.dim = self.n_classes * dataset.n_features
        self.sample_count = dataset.n_samples

    def _batch(self, indices):
        if indices is None:
            return self.X, self.y
        return self.X[indices], self.y[indices]

    def _log_probs(self, W: np.ndarray, X: np.ndarray) -> np.ndarray:
        logits = X @ W.T
        logits -= logits.max(axis=1, keepdims=True)
        return logits - np.log(np.exp(logits).sum(axis=1, keepdims=True))

    def risk(self, w, indices=None) -> float:
        W = _param_array(w, self.dim).reshape(self.n_classes, -1)
        X, y = self._batch(indices)
        logp = self._log_probs(W, X)
        return float(-np.mean(logp[np.arange(len(y)), y]) + 0.5 * self.reg * np.sum(W * W))

    def grad(self, w, indices=None) -> np.ndarray:
        W = _param_array(w, self.dim).reshape(self.n_classes, -1)
        X, y = self._batch(indices)
        probs = np.exp(self._log_probs(W, X))
        probs[np.arange(len(y)), y] -= 1.0
        return (probs.T @ X / len(y) + self.reg * W).ravel()

    def predict(self, w, features: np.ndarray) -> np.ndarray:
        """Class with the highest score for each feature row."""
        W = _param_array(w, self.dim).reshape(self.n_classes, -1)
        return np.argmax(features @ W.T, axis=1)

    def constants(self, radius: float = DEFAULT_RADIUS) -> CurvatureConstants:
        row_norms = np.linalg.norm(self.X, axis=1)
        max_norm = float(row_norms.max())
        # per-sample gradient is (p - e_y) x', Frobenius norm <= sqrt(2) ||x||
        G = np.sqrt(2.0) * max_norm + self.reg * radius
        L = 0.5 * max_norm**2 + self.reg
        return CurvatureConstants(G=G, L=L, mu=self.reg)


def estimate_constants(model: LossModel, radius: float = DEFAULT_RADIUS) -> CurvatureConstants:
    """Curvature constants of one model, valid on the L2 ball of the given radius."""
    if radius <= 0.0 or not np.isfinite(radius):
        raise InvalidInputError(f"radius must be positive and finite, got {radius!r}")
    return model.constants(radius)


def suite_constants(models, radius: float = DEFAULT_RADIUS) -> CurvatureConstants:
    """Worst-case constants across a collection of models: max G, max L, min mu."""
    models = list(models)
    if not models:
        raise InvalidInputError("need at least one model")
    parts = [estimate_constants(m, radius) for m in models]
    return CurvatureConstants(
        G=max(p.G for p in parts),
        L=max(p.L for p in parts),
        mu=min(p.mu for p in parts),
    )


def make_quadratic_suite(n_sources: int, dim: int, mu: float, L: float, seed: int,
                         radius: float = DEFAULT_RADIUS,
                         center_scale: float | None = None,
                         sample_counts=None) -> list[QuadraticLoss]:
    """Random suite of positive definite quadratics with eigenvalues in [mu, L].

    Each model gets a random orientation with spectrum pinned to the full range
    (first eigenvalue mu, last L for dim >= 2). Centers are drawn with norm at most
    ``center_scale``; the default 0.3 * radius * mu / L keeps every weighted
    minimizer w*(alpha) strictly inside the ball, since ||w*|| <= (L/mu) max ||c_j||.
    """
    if n_sources < 1 or dim < 1:
        raise InvalidInputError(f"need n_sources >= 1 and dim >= 1, got {(n_sources, dim)}")
    if not 0.0 < mu <= L:
        raise InvalidInputError(f"need 0 < mu <= L, got {(mu, L)}")
    if center_scale is None:
        center_scale = 0.3 * radius * mu / L
    if sample_counts is None:
        sample_counts = [1] * n_sources
    if len(sample_counts) != n_sources:
        raise InvalidInputError(f"{len(sample_counts)} sample counts for {n_sources} sources")
    rng = RngStream(seed).generator()
    suite = []
    for j in range(n_sources):
        eigs = rng.uniform(mu, L, size=dim)
        eigs[0] = mu
        if dim >= 2:
            eigs[-1] = L
        gauss = rng.normal(size=(dim, dim))
        Q, _ = np.linalg.qr(gauss)
        A = (Q * eigs) @ Q.T
        A = 0.5 * (A + A.T)
        direction = rng.normal(size=dim)
        direction /= np.linalg.norm(direction)
        center = direction * rng.uniform(0.0, center_scale)
        suite.append(QuadraticLoss(A, center, sample_count=sample_counts[j]))
    return suite


def closed_form_wstar(suite, alpha, radius: float = DEFAULT_RADIUS) -> ModelParams:
    """Constrained minimizer of the alpha-weighted quadratic risk over the L2 ball.

    Solves the linear system for the unconstrained minimizer; if that lands outside
    the ball, falls back to projected gradient iterations until the step change is
    at most 1e-12 and warns that the boundary case was hit.
    """
    suite = list(suite)
    if not suite:
        raise InvalidInputError("need at least one model")
    if not all(isinstance(m, QuadraticLoss) for m in suite):
        raise InvalidInputError("closed-form minimizer requires quadratic models")
    dim = suite[0].dim
    if any(m.dim != dim for m in suite):
        raise InvalidInputError("all models must share one dimension")
    a = alpha.values if isinstance(alpha, MixtureWeights) else as_vector(alpha, "alpha")
    if a.size != len(suite):
        raise InvalidInputError(f"{a.size} weights for {len(suite)} models")

    H = sum(aj * m.A for aj, m in zip(a, suite))
    b = sum(aj * (m.A @ m.center) for aj, m in zip(a, suite))
    w = np.linalg.solve(H, b)
    if np.linalg.norm(w) <= radius:
        return ModelParams(w, radius)

    warnings.warn(
        "weighted minimizer lies outside the parameter ball; "
        "falling back to projected gradient iterations",
        RuntimeWarning,
    )
    eigs = np.linalg.eigvalsh(H)
    gamma = 1.0 / float(eigs[-1])
    w = project_ball_array(w, radius)
    for _ in range(200_000):
        w_next = project_ball_array(w - gamma * (H @ w - b), radius)
        if np.linalg.norm(w_next - w) <= 1e-12:
            return ModelParams(w_next, radius)
        w = w_next
    return ModelParams(w, radius)


def _group_class_split(n_groups: int, n_classes: int) -> list[tuple[int, ...]]:
    # even split; remainder classes go to the last groups: 3 groups over 10
    # classes gives {0,1,2}, {3,4,5}, {6,7,8,9}
    base, rem = divmod(n_classes, n_groups)
    sizes = [base] * n_groups
    for i in range(rem):
        sizes[n_groups - 1 - i] += 1
    out, start = [], 0
    for s in sizes:
        out.append(tuple(range(start, start + s)))
        start += s
    return out


@dataclass(frozen=True)
class GroupedSuite:
    """Generative recipe behind a grouped classification benchmark.

    Groups share class means; each domain adds its own mean shift, so domains
    within a group are related but not identical. ``sample_domain`` draws a fresh
    domain from a group's recipe, which is how evaluation targets are built.
    """

    datasets: tuple[Dataset, ...]
    group_ids: tuple[int, ...]
    group_classes: tuple[tuple[int, ...], ...]
    class_means: np.ndarray
    noise_scale: float
    shift_scale: float

    @property
    def n_classes(self) -> int:
        return self.class_means.shape[0]

    @property
    def n_features(self) -> int:
        return self.class_means.shape[1]

    def sample_domain(self, group: int, n_samples: int, rng: np.random.Generator) -> Dataset:
        if not 0 <= group < len(self.group_classes):
            raise InvalidInputError(f"group {group} out of range")
        classes = np.array(self.group_classes[group])
        shift = rng.normal(0.0, self.shift_scale, size=self.n_features)
        labels = rng.choice(classes, size=n_samples)
        feats = (
            self.class_means[labels]
            + shift
            + rng.normal(0.0, self.noise_scale, size=(n_samples, self.n_features))
        )
        return Dataset(feats, labels.astype(np.float64))


def make_grouped_problem(n_groups: int = 3, domains_per_group: int = 5,
                         samples_per_domain: int = 100, n_features: int = 6,
                         n_classes: int = 10, seed: int = 0,
                         mean_scale: float = 2.0, noise_scale: float = 1.0,
                         shift_scale: float = 0.4) -> GroupedSuite:
    """Grouped classification generator: groups own disjoint class subsets.

    Defaults give 3 groups x 5 domains x 100 samples over 10 classes, with the
    class split {0,1,2}, {3,4,5}, {6,7,8,9}.
    """
    if n_groups < 1 or domains_per_group < 1 or samples_per_domain < 1:
        raise InvalidInputError("group/domain/sample counts must be positive")
    if n_classes < n_groups:
        raise InvalidInputError(f"{n_classes} classes cannot cover {n_groups} groups")
    rng = RngStream(seed).generator()
    class_means = rng.normal(0.0, mean_scale, size=(n_classes, n_features))
    group_classes = _group_class_split(n_groups, n_classes)
    suite = GroupedSuite(
        datasets=(),
        group_ids=(),
        group_classes=tuple(group_classes),
        class_means=class_means,
        noise_scale=noise_scale,
        shift_scale=shift_scale,
    )
    datasets, group_ids = [], []
    for g in range(n_groups):
        for _ in range(domains_per_group):
            datasets.append(suite.sample_domain(g, samples_per_domain, rng))
            group_ids.append(g)
    return GroupedSuite(
        datasets=tuple(datasets),
        group_ids=tuple(group_ids),
        group_classes=tuple(group_classes),
        class_means=class_means,
        noise_scale=noise_scale,
        shift_scale=shift_scale,
    )


def make_grouped_classification(n_groups: int = 3, domains_per_group: int = 5,
                                samples_per_domain: int = 100, n_features: int = 6,
                                seed: int = 0) -> list[Dataset]:
    """Datasets of the grouped benchmark, ordered group by group."""
    problem = make_grouped_problem(
        n_groups=n_groups,
        domains_per_group=domains_per_group,
        samples_per_domain=samples_per_domain,
        n_features=n_features,
        seed=seed,
    )
    return list(problem.datasets)
