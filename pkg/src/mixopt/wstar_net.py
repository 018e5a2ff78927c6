"""Learning the mixture-to-solution map with a two-layer ReLU network.

The network h(alpha) predicts the weighted-ERM solution w*(alpha) from the
mixture alone. Output coordinate j has its own hidden layer: h_j(alpha) =
sum_r a_{j,r} relu(u_{j,r} . alpha) with fixed signs a in {+-1/sqrt(m)} and
trainable rows u. Training is bilevel: labels start at the origin and are
refined a few descent steps per outer iteration, while the network chases the
current labels with full-batch gradient steps on the mean squared error.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .core import (
    DEFAULT_RADIUS,
    InvalidInputError,
    MixtureWeights,
    ModelParams,
    RngStream,
    as_vector,
)
from .coerm import GdConfig, _resolve_gamma, gd_solve
from .domains import QuadraticLoss, closed_form_wstar

__all__ = [
    "TrainResult",
    "TwoLayerNet",
    "excess_risk",
    "forward",
    "forward_batch",
    "hidden_grad",
    "init_net",
    "load_checkpoint",
    "save_checkpoint",
    "train",
]

_INIT_STREAM = 0
_EVAL_STREAM = 1


@dataclass(frozen=True)
class TwoLayerNet:
    """Per-output hidden layers U of shape (d, m, N) and fixed signs a of shape (d, m)."""

    U: np.ndarray
    a: np.ndarray

    def __post_init__(self):
        U = np.asarray(self.U, dtype=np.float64)
        a = np.asarray(self.a, dtype=np.float64)
        if U.ndim != 3 or a.ndim != 2 or U.shape[:2] != a.shape:
            raise InvalidInputError(f"inconsistent shapes: U {U.shape}, a {a.shape}")
        if U.shape[1] % 2 != 0:
            raise InvalidInputError(f"hidden width must be even, got {U.shape[1]}")
        if not (np.all(np.isfinite(U)) and np.all(np.isfinite(a))):
            raise InvalidInputError("network parameters contain non-finite entries")
        scale = 1.0 / np.sqrt(U.shape[1])
        if not np.allclose(np.abs(a), scale):
            raise InvalidInputError("sign vector entries must be +-1/sqrt(m)")
        object.__setattr__(self, "U", U)
        object.__setattr__(self, "a", a)

    @property
    def out_dim(self) -> int:
        return self.U.shape[0]

    @property
    def width(self) -> int:
        return self.U.shape[1]

    @property
    def n_sources(self) -> int:
        return self.U.shape[2]


def init_net(m: int, n_sources: int, out_dim: int, seed: int) -> TwoLayerNet:
    """Symmetric initialization: the net is exactly the zero function.

    The second half of each hidden layer duplicates the first half's rows with
    opposite output signs, so paired unit contributions cancel.
    """
    if m < 2 or m % 2 != 0:
        raise InvalidInputError(f"hidden width must be an even number >= 2, got {m}")
    if n_sources < 1 or out_dim < 1:
        raise InvalidInputError(f"bad dimensions: {n_sources} sources, {out_dim} outputs")
    rng = RngStream(seed, _INIT_STREAM).generator()
    half = m // 2
    U_half = rng.normal(size=(out_dim, half, n_sources))
    U = np.concatenate([U_half, U_half.copy()], axis=1)
    scale = 1.0 / np.sqrt(m)
    a = np.concatenate(
        [np.full((out_dim, half), scale), np.full((out_dim, half), -scale)], axis=1
    )
    return TwoLayerNet(U=U, a=a)


def _alphas_array(alphas, n_sources: int | None = None) -> np.ndarray:
    if isinstance(alphas, np.ndarray) and alphas.ndim == 2:
        arr = alphas.astype(np.float64, copy=False)
    else:
        rows = [a.values if isinstance(a, MixtureWeights) else as_vector(a, "alpha")
                for a in alphas]
        if not rows:
            raise InvalidInputError("need at least one mixture")
        arr = np.stack(rows)
    if n_sources is not None and arr.shape[1] != n_sources:
        raise InvalidInputError(f"mixtures have {arr.shape[1]} entries, net expects {n_sources}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError("mixtures contain non-finite entries")
    return arr


def forward_batch(net: TwoLayerNet, alphas) -> np.ndarray:
    """Network outputs for a batch of mixtures, shape (n, d).

    Paired units are summed first so the symmetric initialization cancels
    exactly, not just to rounding.
    """
    arr = _alphas_array(alphas, net.n_sources)
    half = net.width // 2
    out = np.empty((arr.shape[0], net.out_dim))
    # chunked so the (chunk, d, m) activation block stays small
    for start in range(0, arr.shape[0], 1024):
        block = arr[start:start + 1024]
        pre = np.einsum("dmk,nk->ndm", net.U, block)
        contrib = net.a * np.maximum(pre, 0.0)
        out[start:start + 1024] = (contrib[:, :, :half] + contrib[:, :, half:]).sum(axis=2)
    return out


def forward(net: TwoLayerNet, alpha) -> np.ndarray:
    """Network output for one mixture, shape (d,)."""
    a = alpha.values if isinstance(alpha, MixtureWeights) else as_vector(alpha, "alpha")
    return forward_batch(net, a[None, :])[0]


def hidden_grad(net: TwoLayerNet, alpha, residual) -> np.ndarray:
    """Gradient of 0.5 ||h(alpha) - target||^2 in U, with residual = h(alpha) - target.

    Row r of output j gets a_{j,r} 1{u_{j,r} . alpha > 0} residual_j alpha'.
    The ReLU gate is the strict subgradient choice: zero exactly at the kink.
    """
    a = alpha.values if isinstance(alpha, MixtureWeights) else as_vector(alpha, "alpha")
    res = as_vector(residual, "residual")
    if a.size != net.n_sources or res.size != net.out_dim:
        raise InvalidInputError(
            f"expected mixture size {net.n_sources} and residual size {net.out_dim}"
        )
    pre = net.U @ a
    gate = net.a * (pre > 0.0)
    return (gate * res[:, None])[:, :, None] * a[None, None, :]


def _project_rows(block: np.ndarray, radius: float) -> np.ndarray:
    norms = np.linalg.norm(block, axis=1, keepdims=True)
    scale = np.minimum(1.0, radius / np.maximum(norms, 1e-300))
    return block * scale


def _refine_labels(labels: np.ndarray, alphas: np.ndarray, suite, steps: int,
                   gamma: float, radius: float) -> np.ndarray:
    """K projected descent steps on each row's alpha-weighted risk, vectorized
    across rows for quadratic suites."""
    if steps == 0:
        return labels
    if all(isinstance(mdl, QuadraticLoss) for mdl in suite):
        out = labels
        for _ in range(steps):
            grad = np.zeros_like(out)
            for j, mdl in enumerate(suite):
                grad += alphas[:, j:j + 1] * ((out - mdl.center) @ mdl.A)
            out = _project_rows(out - gamma * grad, radius)
        return out
    cfg = GdConfig(steps=steps, gamma=gamma)
    out = np.empty_like(labels)
    for i in range(labels.shape[0]):
        start = ModelParams(labels[i], radius)
        out[i] = gd_solve(start, alphas[i], suite, cfg).values
    return out


@dataclass(frozen=True)
class TrainResult:
    """Trained network, final labels, and the recorded training trace."""

    net: TwoLayerNet
    labels: np.ndarray
    trace_steps: np.ndarray
    empirical_risk: np.ndarray
    label_gap_mean: np.ndarray
    test_excess_risk: np.ndarray


def train(alphas, suite, m: int = 512, eta: float = 0.5, gamma: float | None = None,
          outer_steps: int = 1000, refine_steps: int = 20, seed: int = 0,
          radius: float = DEFAULT_RADIUS, trace_every: int | None = None,
          eval_points: int = 256) -> TrainResult:
    """Bilevel training of the mixture-to-solution network.

    Per outer step: one full-batch gradient step on the mean squared error
    against the current labels (outer factor 2/n), then ``refine_steps``
    projected descent steps on every label. Labels start at the origin.
    ``eta`` should not exceed 1/2; ``gamma=None`` resolves to 1/L.

    The trace records the pre-update empirical risk, the mean distance of the
    labels to the true minimizers, and the test excess risk (the latter two only
    for quadratic suites; NaN otherwise).
    """
    suite = list(suite)
    if not suite:
        raise InvalidInputError("need at least one model")
    if not 0.0 < eta <= 0.5:
        raise InvalidInputError(f"eta must lie in (0, 0.5], got {eta}")
    if outer_steps < 0 or refine_steps < 0:
        raise InvalidInputError("step counts must be >= 0")
    arr = _alphas_array(alphas, len(suite))
    n, n_sources = arr.shape
    dim = suite[0].dim
    gamma = _resolve_gamma(GdConfig(gamma=gamma), suite, radius)
    net = init_net(m, n_sources, dim, seed)
    labels = np.zeros((n, dim))

    quadratic = all(isinstance(mdl, QuadraticLoss) for mdl in suite)
    truths = None
    if quadratic:
        truths = np.stack([closed_form_wstar(suite, arr[i], radius).values
                           for i in range(n)])

    if trace_every is None:
        trace_every = max(1, outer_steps // 100)
    trace_steps, emp_risks, label_gaps, test_risks = [], [], [], []

    def record(t: int, risk_value: float) -> None:
        trace_steps.append(t)
        emp_risks.append(risk_value)
        if truths is not None:
            label_gaps.append(float(np.linalg.norm(labels - truths, axis=1).mean()))
            test_risks.append(excess_risk(net, suite, eval_points, seed, radius))
        else:
            label_gaps.append(float("nan"))
            test_risks.append(float("nan"))

    half = m // 2
    for t in range(1, outer_steps + 1):
        pre = np.einsum("dmk,nk->ndm", net.U, arr)
        active = pre > 0.0
        contrib = net.a * np.where(active, pre, 0.0)
        outputs = (contrib[:, :, :half] + contrib[:, :, half:]).sum(axis=2)
        residual = outputs - labels
        risk_value = float(np.mean(np.sum(residual**2, axis=1)))

        # (2/n) sum_i gate_i residual_i alpha_i', gates taken strictly at zero
        weight = net.a * active * residual[:, :, None]
        grad_U = (2.0 / n) * np.einsum("njm,nk->jmk", weight, arr)
        net = replace(net, U=net.U - eta * grad_U)
        labels = _refine_labels(labels, arr, suite, refine_steps, gamma, radius)

        if t % trace_every == 0 or t == outer_steps:
            record(t, risk_value)
    if not trace_steps:
        record(0, float(np.mean(np.sum(forward_batch(net, arr)**2, axis=1))))

    return TrainResult(
        net=net,
        labels=labels,
        trace_steps=np.array(trace_steps, dtype=np.int64),
        empirical_risk=np.array(emp_risks),
        label_gap_mean=np.array(label_gaps),
        test_excess_risk=np.array(test_risks),
    )


def excess_risk(net: TwoLayerNet, suite, n_test: int = 1024, seed: int = 0,
                radius: float = DEFAULT_RADIUS) -> float:
    """Mean squared prediction error E ||h(alpha) - w*(alpha)||^2 over uniform mixtures.

    Mixtures are drawn uniformly from the simplex; minimizers come from the
    closed form, so the suite must be quadratic.
    """
    suite = list(suite)
    if n_test < 1:
        raise InvalidInputError(f"need at least one test point, got {n_test}")
    if not all(isinstance(mdl, QuadraticLoss) for mdl in suite):
        raise InvalidInputError("excess risk needs quadratic models for the exact minimizer")
    rng = RngStream(seed, _EVAL_STREAM).generator()
    alphas = rng.dirichlet(np.ones(len(suite)), size=n_test)
    preds = forward_batch(net, alphas)
    truths = np.stack([closed_form_wstar(suite, alphas[i], radius).values
                       for i in range(n_test)])
    return float(np.mean(np.sum((preds - truths)**2, axis=1)))


def save_checkpoint(net: TwoLayerNet, path) -> None:
    """Write the network to JSON with keys d, m, N, a, U (full float precision)."""
    payload = {
        "d": net.out_dim,
        "m": net.width,
        "N": net.n_sources,
        "a": net.a.tolist(),
        "U": net.U.tolist(),
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, sort_keys=True)
        fh.write("\n")


def load_checkpoint(path) -> TwoLayerNet:
    """Load a network written by :func:`save_checkpoint`; validates shape consistency."""
    path = Path(path)
    with open(path) as fh:
        payload = json.load(fh)
    missing = [k for k in ("d", "m", "N", "a", "U") if k not in payload]
    if missing:
        raise InvalidInputError(f"{path}: checkpoint is missing keys {missing}")
    U = np.asarray(payload["U"], dtype=np.float64)
    a = np.asarray(payload["a"], dtype=np.float64)
    expected = (payload["d"], payload["m"], payload["N"])
    if U.shape != expected or a.shape != expected[:2]:
        raise InvalidInputError(
            f"{path}: declared shape {expected} does not match arrays "
            f"U {U.shape}, a {a.shape}"
        )
    return TwoLayerNet(U=U, a=a)
