"""Experiment harness: configuration, presets, and the six experiment commands.

Each command is a pure function of its :class:`ExperimentConfig`: it builds the
instance, runs the owning module, and writes CSV/JSON results under the
configured output directory. File contents depend only on (config, seed).
"""

from __future__ import annotations

import dataclasses
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .coerm import GdConfig, gd_solve, lipschitz_audit, solve_batch
from .core import DEFAULT_RADIUS, InvalidInputError, MixtureWeights, ModelParams, RngStream
from .domains import (
    Dataset,
    SoftmaxLoss,
    make_grouped_problem,
    make_quadratic_suite,
    suite_constants,
    train_test_split,
)
from .minimax import MinimaxConfig, MixtureInstance, run as run_minimax
from .online import dirichlet_stream, packing_audit, run_stream
from .reporting import config_hash, write_json, write_table
from .wstar_net import excess_risk, save_checkpoint, train

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "KINDS",
    "PRESETS",
    "cmd_coerm",
    "cmd_grouped",
    "cmd_mixture",
    "cmd_online",
    "cmd_phase",
    "cmd_wstar",
    "experiment_hash",
    "load_config",
    "preset_config",
    "run_experiment",
]

KINDS = ("mixture", "coerm", "wstar", "online", "grouped", "phase")


class ConfigError(ValueError):
    """Raised for unparseable or inconsistent experiment configuration."""


@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment's parameters.

    The named fields cover the counts shared across experiment kinds; anything
    kind-specific (curvatures, step sizes, grids, target modes) lives in the
    free-form ``options`` table.
    """

    kind: str
    n_sources: int = 5
    dim: int = 10
    n_targets: int = 64
    n_train: int = 100
    steps: int = 1000
    refine_steps: int = 20
    width: int = 512
    label_rate: float = 1.0
    seeds: tuple[int, ...] = (0,)
    out_dir: str = "runs"
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown experiment kind {self.kind!r}, expected one of {KINDS}")
        for name in ("n_sources", "dim", "n_targets", "n_train", "width"):
            if getattr(self, name) < 1:
                raise ConfigError(f"field {name!r} must be >= 1, got {getattr(self, name)}")
        for name in ("steps", "refine_steps"):
            if getattr(self, name) < 0:
                raise ConfigError(f"field {name!r} must be >= 0, got {getattr(self, name)}")
        if not 0.0 <= self.label_rate <= 1.0:
            raise ConfigError(f"field 'label_rate' must lie in [0, 1], got {self.label_rate}")
        seeds = tuple(int(s) for s in self.seeds)
        if not seeds:
            raise ConfigError("field 'seeds' must be non-empty")
        if any(s < 0 for s in seeds):
            raise ConfigError(f"field 'seeds' must be nonnegative, got {seeds}")
        object.__setattr__(self, "seeds", seeds)
        if not isinstance(self.options, dict):
            raise ConfigError("field 'options' must be a table")

    def opt(self, key: str, default=None):
        return self.options.get(key, default)


def experiment_hash(config: ExperimentConfig) -> str:
    """Hash of the fields that determine results; the output path is not one."""
    payload = dataclasses.asdict(config)
    payload.pop("out_dir")
    return config_hash(payload)


def load_config(path) -> ExperimentConfig:
    """Parse a TOML experiment file into an :class:`ExperimentConfig`."""
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    known = {f.name for f in dataclasses.fields(ExperimentConfig)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"{path}: unknown field {unknown[0]!r}")
    if "kind" not in data:
        raise ConfigError(f"{path}: missing required field 'kind'")
    if "seeds" in data and not isinstance(data["seeds"], list):
        raise ConfigError(f"{path}: field 'seeds' must be a list of integers")
    try:
        return ExperimentConfig(**data)
    except TypeError as exc:
        raise ConfigError(f"{path}: {exc}") from None


# Presets are complete, runnable configurations; "default" names each kind's
# standard run. The mixture presets pin the tame-constant quadratic instance
# where the instance-derived default schedule is meaningful.
_QUADRATIC_OPTIONS = {
    "mu": 0.5,
    "L": 1.0,
    "radius": 1.0,
    "center_scale": 0.5,
    "smoothing": 0.25,
    "reg_weight": 1.0,
    "batch_size": 1,
    "instance_seed": 0,
}

PRESETS: dict[str, dict[str, ExperimentConfig]] = {
    "mixture": {
        "quadratic": ExperimentConfig(
            kind="mixture", n_sources=5, dim=10, steps=20000,
            seeds=(0,), out_dir="runs/mixture", options=dict(_QUADRATIC_OPTIONS),
        ),
        "quadratic-match": ExperimentConfig(
            kind="mixture", n_sources=5, dim=10, steps=5000,
            seeds=(0,), out_dir="runs/mixture-match",
            options={
                **_QUADRATIC_OPTIONS,
                "match_source": 0,
                "smoothing": 0.01,
                "reg_weight": 0.05,
                "eta": 0.05,
                "gamma": 0.02,
            },
        ),
    },
    "coerm": {
        "default": ExperimentConfig(
            kind="coerm", n_sources=3, dim=4, n_targets=32, refine_steps=200,
            seeds=(0,), out_dir="runs/coerm",
            options={"mu": 0.5, "L": 1.0, "radius": 1.0, "audit_pairs": 2000,
                     "instance_seed": 0},
        ),
    },
    "wstar": {
        "default": ExperimentConfig(
            kind="wstar", n_sources=3, dim=2, n_train=200, steps=1000,
            refine_steps=10, width=512, seeds=(0,), out_dir="runs/wstar",
            options={"mu": 0.5, "L": 1.0, "radius": 1.0, "center_scale": 0.25,
                     "instance_seed": 7},
        ),
    },
    "online": {
        "default": ExperimentConfig(
            kind="online", n_sources=2, dim=2, steps=4096, refine_steps=20,
            label_rate=1.0, seeds=(0,), out_dir="runs/online",
            options={"mu": 0.5, "L": 1.0, "radius": 1.0, "center_scale": 0.25,
                     "instance_seed": 3},
        ),
    },
    "grouped": {
        "default": ExperimentConfig(
            kind="grouped", n_train=100, steps=1500, refine_steps=400,
            seeds=(0, 1, 2, 3, 4), out_dir="runs/grouped",
            options={"instance_seed": 0, "mean_scale": 1.0},
        ),
    },
    "phase": {
        "default": ExperimentConfig(
            kind="phase", n_sources=3, dim=2, n_train=50, steps=200,
            refine_steps=5, width=128, seeds=(0,), out_dir="runs/phase",
            options={"mu": 0.5, "L": 1.0, "radius": 1.0, "center_scale": 0.25,
                     "solve_steps": 400, "instance_seed": 7},
        ),
    },
}
PRESETS["mixture"]["default"] = PRESETS["mixture"]["quadratic"]


def preset_config(kind: str, name: str) -> ExperimentConfig:
    if kind not in PRESETS or name not in PRESETS[kind]:
        available = sorted(PRESETS.get(kind, {}))
        raise ConfigError(f"no preset {name!r} for {kind!r}; available: {available}")
    return PRESETS[kind][name]


def _quadratic_models(config: ExperimentConfig, n_models: int):
    return make_quadratic_suite(
        n_models,
        config.dim,
        mu=float(config.opt("mu", 0.5)),
        L=float(config.opt("L", 1.0)),
        seed=int(config.opt("instance_seed", 0)),
        radius=float(config.opt("radius", DEFAULT_RADIUS)),
        center_scale=config.opt("center_scale"),
    )


def _map_seeds(fn, seeds, workers: int):
    """Apply fn to each seed; aggregation is keyed by seed, so pool order is irrelevant."""
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(fn, seeds))
    else:
        results = [fn(s) for s in seeds]
    paired = sorted(zip(seeds, results), key=lambda kv: kv[0])
    return [r for _, r in paired]


def cmd_mixture(config: ExperimentConfig) -> int:
    """Corrected descent-ascent on a quadratic instance: trajectory CSV + summary."""
    models = _quadratic_models(config, config.n_sources + 1)
    sources = tuple(models[: config.n_sources])
    match = config.opt("match_source")
    target = sources[int(match)] if match is not None else models[-1]
    instance = MixtureInstance(sources=sources, target=target)

    seed = config.seeds[0]
    mm_config = MinimaxConfig(
        batch_size=int(config.opt("batch_size", 1)),
        beta=float(config.opt("beta", 0.1)),
        eta=config.opt("eta"),
        gamma=config.opt("gamma"),
        reg_weight=float(config.opt("reg_weight", 1.0)),
        steps=config.steps,
        smoothing=float(config.opt("smoothing", 1e-4)),
        seed=seed,
        radius=float(config.opt("radius", DEFAULT_RADIUS)),
        record_every=int(config.opt("record_every", 1)),
    )
    result = run_minimax(instance, mm_config)

    run_hash = experiment_hash(config)
    out = Path(config.out_dir)
    header = ["t", "objective", "gap_sq"] + [f"alpha_{j}" for j in range(instance.n_sources)]
    rows = [
        [int(t), obj, gap] + list(alpha)
        for t, obj, gap, alpha in zip(result.steps, result.objective, result.gap_sq,
                                      result.alphas)
    ]
    write_table(out / "trajectory.csv", header, rows,
                meta={"config_hash": run_hash, "seed": seed})
    summary = {
        "experiment": "mixture",
        "config_hash": run_hash,
        "seed": seed,
        "n_sources": instance.n_sources,
        "dim": instance.dim,
        "eta": result.config.eta,
        "gamma": result.config.gamma,
        "final_alpha": result.final_alpha.values,
        "final_objective": float(result.objective[-1]),
        "mean_gap_sq": result.mean_gap_sq,
        "mean_gap_sq_first_quartile": result.first_quartile_mean_gap_sq,
        "mean_gap_sq_last_quartile": result.last_quartile_mean_gap_sq,
    }
    if match is not None:
        summary["match_source"] = int(match)
        summary["match_mass"] = float(result.final_alpha.values[int(match)])
    write_json(out / "summary.json", summary)
    return 0


def cmd_coerm(config: ExperimentConfig) -> int:
    """Batch weighted-ERM solves plus the w*(alpha) sensitivity audit."""
    suite = _quadratic_models(config, config.n_sources)
    radius = float(config.opt("radius", DEFAULT_RADIUS))
    seed = config.seeds[0]
    rng = RngStream(seed, 2).generator()
    alphas = rng.dirichlet(np.ones(config.n_sources), size=config.n_targets)
    gd_config = GdConfig(steps=config.refine_steps, gamma=config.opt("gamma"),
                         tolerance=config.opt("tolerance"))
    batch = solve_batch(alphas, suite, gd_config, radius)
    audit = lipschitz_audit(
        suite, n_pairs=int(config.opt("audit_pairs", 1000)), seed=seed, radius=radius
    )

    run_hash = experiment_hash(config)
    out = Path(config.out_dir)
    header = (
        [f"alpha_{j}" for j in range(config.n_sources)]
        + [f"w_{i}" for i in range(config.dim)]
        + ["grad_evals"]
    )
    rows = [
        list(alphas[i]) + list(batch.solutions[i]) + [int(batch.steps[i]) * config.n_sources]
        for i in range(len(alphas))
    ]
    write_table(out / "solutions.csv", header, rows,
                meta={"config_hash": run_hash, "seed": seed})
    write_json(out / "summary.json", {
        "experiment": "coerm",
        "config_hash": run_hash,
        "seed": seed,
        "n_mixtures": int(len(alphas)),
        "grad_evals_total": batch.grad_evals,
        "audit_pairs": audit.pairs,
        "audit_max_ratio": audit.max_ratio,
        "audit_bound": audit.bound,
    })
    return 0


def cmd_wstar(config: ExperimentConfig) -> int:
    """Train the mixture-to-solution network; trace CSV, checkpoint, summary."""
    suite = _quadratic_models(config, config.n_sources)
    radius = float(config.opt("radius", DEFAULT_RADIUS))
    seed = config.seeds[0]
    rng = RngStream(seed, 3).generator()
    alphas = rng.dirichlet(np.ones(config.n_sources), size=config.n_train)
    result = train(
        alphas,
        suite,
        m=config.width,
        eta=float(config.opt("eta", 0.5)),
        gamma=config.opt("gamma"),
        outer_steps=config.steps,
        refine_steps=config.refine_steps,
        seed=seed,
        radius=radius,
        trace_every=config.opt("trace_every"),
        eval_points=int(config.opt("eval_points", 256)),
    )
    final_risk = excess_risk(result.net, suite, int(config.opt("test_points", 1024)),
                             seed=seed, radius=radius)

    run_hash = experiment_hash(config)
    out = Path(config.out_dir)
    rows = list(zip(result.trace_steps, result.empirical_risk, result.label_gap_mean,
                    result.test_excess_risk))
    write_table(out / "trace.csv",
                ["t", "empirical_risk", "label_gap_mean", "test_excess_risk"],
                rows, meta={"config_hash": run_hash, "seed": seed})
    save_checkpoint(result.net, out / "net.json")
    write_json(out / "summary.json", {
        "experiment": "wstar",
        "config_hash": run_hash,
        "seed": seed,
        "n_train": config.n_train,
        "width": config.width,
        "outer_steps": config.steps,
        "refine_steps": config.refine_steps,
        "final_empirical_risk": float(result.empirical_risk[-1]),
        "test_excess_risk": final_risk,
    })
    return 0


def cmd_online(config: ExperimentConfig) -> int:
    """One online stream: per-round log CSV, packing audit, summary."""
    suite = _quadratic_models(config, config.n_sources)
    radius = float(config.opt("radius", DEFAULT_RADIUS))
    seed = config.seeds[0]
    stream = dirichlet_stream(config.steps, config.n_sources, seed)
    result = run_stream(
        stream,
        suite,
        label_rate=config.label_rate,
        refine_steps=config.refine_steps,
        seed=seed,
        domain_radius=radius,
        gd_gamma=config.opt("gamma"),
        strict_listing=bool(config.opt("strict_listing", False)),
    )
    audit = packing_audit(result.state)

    run_hash = experiment_hash(config)
    out = Path(config.out_dir)
    rows = list(zip(result.rounds, result.eps, result.active_center,
                    result.created_center, result.label_drawn, result.loss,
                    result.label_total))
    write_table(out / "stream.csv",
                ["t", "eps_t", "active_center", "created", "Z_t", "loss",
                 "label_count_total"],
                rows, meta={"config_hash": run_hash, "seed": seed})
    quarter = max(len(result.loss) // 4, 1)
    write_json(out / "summary.json", {
        "experiment": "online",
        "config_hash": run_hash,
        "seed": seed,
        "rounds": int(config.steps),
        "label_rate": config.label_rate,
        "total_labels": result.total_labels,
        "n_centers": result.n_centers,
        "mean_loss": float(np.nanmean(result.loss)),
        "mean_loss_last_quarter": float(np.nanmean(result.loss[-quarter:])),
        "audit_min_margin": audit.min_margin,
        "audit_empirical_constant": audit.empirical_constant,
    })
    return 0


def _standardizer(datasets: list[Dataset]):
    """Shared feature transform fitted on the union of the given training sets.

    One transform for every domain keeps all losses in a single parameter space;
    per-domain scaling would make the shared w mean different things per domain.
    """
    stacked = np.vstack([ds.features for ds in datasets])
    mean = stacked.mean(axis=0)
    std = stacked.std(axis=0)
    std = np.where(std < 1e-12, 1.0, std)

    def apply(ds: Dataset) -> Dataset:
        return Dataset((ds.features - mean) / std, ds.labels)

    return apply


def _accuracy(loss: SoftmaxLoss, w: ModelParams, test: Dataset) -> float:
    pred = loss.predict(w, test.features)
    return float(np.mean(pred == test.labels.astype(np.int64)))


def _grouped_seed(config: ExperimentConfig, seed: int):
    """All group-target conditions for one seed; returns accuracy rows."""
    problem = make_grouped_problem(
        n_groups=int(config.opt("n_groups", 3)),
        domains_per_group=int(config.opt("domains_per_group", 5)),
        samples_per_domain=config.n_train,
        n_features=int(config.opt("n_features", 6)),
        seed=int(config.opt("instance_seed", 0)),
        mean_scale=float(config.opt("mean_scale", 2.0)),
        noise_scale=float(config.opt("noise_scale", 1.0)),
        shift_scale=float(config.opt("shift_scale", 0.4)),
    )
    reg = float(config.opt("reg", 0.1))
    radius = float(config.opt("radius", DEFAULT_RADIUS))
    test_fraction = float(config.opt("test_fraction", 0.2))
    target_mode = config.opt("target_mode", "fresh")
    n_classes = problem.n_classes
    rng = RngStream(seed, 4).generator()

    rows = []
    for group in range(len(problem.group_classes)):
        if target_mode == "copy":
            copy_domain = group * int(config.opt("domains_per_group", 5)) + \
                int(config.opt("copy_index", 0))
            target_ds = problem.datasets[copy_domain]
        elif target_mode == "fresh":
            target_ds = problem.sample_domain(group, config.n_train, rng)
        else:
            raise ConfigError(f"unknown target_mode {target_mode!r}")

        splits = [train_test_split(ds, test_fraction, rng) for ds in problem.datasets]
        target_train, target_test = train_test_split(target_ds, test_fraction, rng)
        standardize = _standardizer([tr for tr, _ in splits] + [target_train])

        sources = [SoftmaxLoss(standardize(tr), n_classes, reg) for tr, _ in splits]
        target_loss = SoftmaxLoss(standardize(target_train), n_classes, reg)
        target_test = standardize(target_test)

        instance = MixtureInstance(sources=tuple(sources), target=target_loss)
        mm_config = MinimaxConfig(
            batch_size=int(config.opt("batch_size", 20)),
            beta=float(config.opt("beta", 0.1)),
            eta=float(config.opt("eta", 0.05)),
            gamma=float(config.opt("gamma", 0.05)),
            reg_weight=float(config.opt("reg_weight", 1.0)),
            steps=config.steps,
            smoothing=float(config.opt("smoothing", 0.01)),
            seed=seed,
            radius=radius,
            record_every=max(config.steps, 1),
        )
        # Every softmax risk equals ln(n_classes) at the origin, which makes the
        # uniform-alpha/zero-w start an exact fixed point of the stochastic
        # updates; a random witness start breaks the tie.
        w0 = rng.standard_normal(target_loss.dim)
        w0 *= float(config.opt("w0_scale", 1.0)) / np.linalg.norm(w0)
        learned = run_minimax(instance, mm_config, w0=w0).final_alpha
        uniform = MixtureWeights.uniform(len(sources))

        gd_config = GdConfig(steps=config.refine_steps)
        origin = ModelParams.origin(target_loss.dim, radius)
        w_learned = gd_solve(origin, learned, sources, gd_config)
        w_uniform = gd_solve(origin, uniform, sources, gd_config)
        w_target = gd_solve(origin, np.ones(1), [target_loss], gd_config)

        group_mass = float(sum(
            learned.values[j]
            for j in range(len(sources))
            if problem.group_ids[j] == group
        ))
        rows.append({
            "seed": seed,
            "target_group": group,
            "acc_learned": _accuracy(target_loss, w_learned, target_test),
            "acc_uniform": _accuracy(target_loss, w_uniform, target_test),
            "acc_target_only": _accuracy(target_loss, w_target, target_test),
            "learned_group_mass": group_mass,
        })
    return rows


def cmd_grouped(config: ExperimentConfig) -> int:
    """Grouped benchmark: three adaptation strategies per group-target and seed."""
    per_seed = _map_seeds(
        partial(_grouped_seed, config), config.seeds, int(config.opt("workers", 1))
    )
    rows = [row for rows in per_seed for row in rows]

    run_hash = experiment_hash(config)
    out = Path(config.out_dir)
    header = ["seed", "target_group", "acc_learned", "acc_uniform", "acc_target_only",
              "learned_group_mass"]
    write_table(out / "accuracy.csv", header,
                [[r[k] for k in header] for r in rows],
                meta={"config_hash": run_hash})

    groups = sorted({r["target_group"] for r in rows})
    by_group = {
        g: {
            key: float(np.mean([r[key] for r in rows if r["target_group"] == g]))
            for key in ("acc_learned", "acc_uniform", "acc_target_only",
                        "learned_group_mass")
        }
        for g in groups
    }
    gaps = [by_group[g]["acc_learned"] - by_group[g]["acc_uniform"] for g in groups]
    write_json(out / "summary.json", {
        "experiment": "grouped",
        "config_hash": run_hash,
        "seeds": list(config.seeds),
        "target_mode": config.opt("target_mode", "fresh"),
        "per_group": {str(g): by_group[g] for g in groups},
        "mean_gap_learned_vs_uniform": float(np.mean(gaps)),
    })
    return 0


def cmd_phase(config: ExperimentConfig) -> int:
    """Solve-vs-learn cost comparison over a grid of target counts M.

    Cost unit is oracle calls: one source-gradient evaluation or one network
    forward each count as one call. Solving M targets costs M * solve_steps * N;
    the learning strategy pays a one-time training bill plus one forward per
    target, which is why its line is nearly flat in M.
    """
    suite = _quadratic_models(config, config.n_sources)
    radius = float(config.opt("radius", DEFAULT_RADIUS))
    seed = config.seeds[0]
    rng = RngStream(seed, 3).generator()
    alphas = rng.dirichlet(np.ones(config.n_sources), size=config.n_train)
    result = train(
        alphas, suite, m=config.width, eta=float(config.opt("eta", 0.5)),
        outer_steps=config.steps, refine_steps=config.refine_steps, seed=seed,
        radius=radius, trace_every=max(config.steps, 1),
    )
    measured_risk = excess_risk(result.net, suite, int(config.opt("test_points", 1024)),
                                seed=seed, radius=radius)

    n, N = config.n_train, config.n_sources
    train_cost = config.steps * n * config.refine_steps * N + config.steps * n
    solve_steps = int(config.opt("solve_steps", 400))
    grid = [int(m) for m in config.opt("grid", [2**k for k in range(21)])]
    if not grid or any(m < 1 for m in grid):
        raise ConfigError("field 'options.grid' must list positive target counts")

    rows, crossover = [], None
    for m_targets in grid:
        solve_cost = m_targets * solve_steps * N
        learn_cost = train_cost + m_targets
        rows.append([m_targets, solve_cost, learn_cost])
        if crossover is None and learn_cost < solve_cost:
            crossover = m_targets

    consts = suite_constants(suite, radius)
    kappa = consts.L / consts.mu
    kappa_star = np.sqrt(N) * consts.G / consts.mu
    # target-count threshold implied by the rates, at the measured excess risk
    theory_m = float("nan")
    if 0.0 < measured_risk < 1.0:
        log_term = kappa * np.log(1.0 / measured_risk)
        if log_term > 1.0:
            theory_m = float(
                (kappa_star**2 * config.dim / measured_risk) ** (1.0 + N / 2.0)
                * log_term / (log_term - 1.0)
            )

    run_hash = experiment_hash(config)
    out = Path(config.out_dir)
    write_table(out / "phase.csv", ["n_targets", "solve_cost", "learn_cost"], rows,
                meta={"config_hash": run_hash, "seed": seed})
    write_json(out / "summary.json", {
        "experiment": "phase",
        "config_hash": run_hash,
        "seed": seed,
        "train_cost": int(train_cost),
        "solve_steps": solve_steps,
        "measured_excess_risk": measured_risk,
        "crossover_targets": crossover,
        "theory_targets": theory_m,
        "kappa": float(kappa),
        "kappa_star": float(kappa_star),
    })
    return 0


_COMMANDS = {
    "mixture": cmd_mixture,
    "coerm": cmd_coerm,
    "wstar": cmd_wstar,
    "online": cmd_online,
    "grouped": cmd_grouped,
    "phase": cmd_phase,
}


def run_experiment(config: ExperimentConfig) -> int:
    """Dispatch a config to its command; returns the exit code."""
    return _COMMANDS[config.kind](config)
