"""Mixture-weight estimation for multi-source adaptation.

Four pillars: a corrected stochastic descent-ascent solver that learns source
mixture weights against a worst-case discrepancy witness (:mod:`mixopt.minimax`),
weighted-ERM solving with cost accounting (:mod:`mixopt.coerm`), a two-layer
network that amortizes the mixture-to-solution map (:mod:`mixopt.wstar_net`),
and a label-efficient online regressor over shrinking simplex balls
(:mod:`mixopt.online`). :mod:`mixopt.domains` supplies datasets and loss
models; :mod:`mixopt.harness` and :mod:`mixopt.cli` run packaged experiments.
"""

from .core import (
    DEFAULT_RADIUS,
    InvalidInputError,
    InvariantError,
    MixtureWeights,
    ModelParams,
    RngStream,
    SmoothAbs,
    project_ball,
    project_simplex,
    smooth_abs,
    smooth_abs_deriv,
)
from .domains import (
    CsvSchema,
    CurvatureConstants,
    Dataset,
    DatasetError,
    LogisticLoss,
    LossModel,
    QuadraticLoss,
    SoftmaxLoss,
    closed_form_wstar,
    estimate_constants,
    load_csv,
    make_grouped_classification,
    make_grouped_problem,
    make_quadratic_suite,
    save_csv,
    standardize_features,
    suite_constants,
)
from .minimax import (
    MinimaxConfig,
    MinimaxResult,
    MinimaxState,
    MixtureInstance,
    StationaryGap,
    stationary_gap,
)
from .coerm import GdConfig, gd_solve, lipschitz_audit, solve_batch
from .wstar_net import TwoLayerNet, excess_risk, forward, init_net, train
from .online import PackingState, RoundOutcome, observe, packing_audit, run_stream
from .harness import ExperimentConfig, load_config, run_experiment

__version__ = "0.1.0"
