"""Federated learning with strategic clients and an incentive-compatible reward rule."""

from .bound import BoundInputs, HypothesisError, geometric_A, loss_bound, truthful_bound
from .config import ConfigError, ExperimentSpec, load_spec, parse_spec
from .labeling import apply_labeling, compute_beta_analytic, compute_beta_empirical
from .mechanism import (
    CostProfile,
    InfeasibleError,
    bound_server_payoff,
    make_assignment,
    min_feasible_D,
    optimal_assignment,
    payoff_hat,
    verify_IR,
    verify_truthfulness,
)
from .model import Dataset, LossModel, estimate_constants, minimize
from .scenarios import run_scenario
from .sim import ClientProfile, ClientStrategy, TrainConfig, run_training

__all__ = [
    "BoundInputs", "ClientProfile", "ClientStrategy", "ConfigError", "CostProfile", "Dataset",
    "ExperimentSpec", "HypothesisError", "InfeasibleError", "LossModel", "TrainConfig",
    "apply_labeling", "bound_server_payoff", "compute_beta_analytic", "compute_beta_empirical",
    "estimate_constants", "geometric_A", "load_spec", "loss_bound", "make_assignment", "min_feasible_D",
    "minimize", "optimal_assignment", "parse_spec", "payoff_hat", "run_scenario", "run_training",
    "truthful_bound", "verify_IR", "verify_truthfulness",
]
