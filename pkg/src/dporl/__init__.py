"""Differentially private offline reinforcement learning: private pessimistic
value iteration for tabular and linear MDPs, privacy accounting, and an
experiment harness."""

from .tabular_pvi import ApviConfig, apvi, bernstein_bonus, dp_apvi
from .linear_pvi import VapviConfig, compute_constants, dp_vapvi, pevi, vapvi
from .mdp_core import (
    Dataset,
    LearnedPolicy,
    LinearMDP,
    Policy,
    TabularMDP,
    exact_policy_value,
    monte_carlo_value,
    occupancy,
    sample_dataset,
    solve_optimal,
    tabularize,
    validate_linear_mdp,
)
from .privacy import PrivacyBudget, PrivacyLedger, compose_zcdp, zcdp_to_approx_dp

__version__ = "0.1.0"

__all__ = [
    "ApviConfig",
    "Dataset",
    "LearnedPolicy",
    "LinearMDP",
    "Policy",
    "PrivacyBudget",
    "PrivacyLedger",
    "TabularMDP",
    "VapviConfig",
    "apvi",
    "bernstein_bonus",
    "compose_zcdp",
    "compute_constants",
    "dp_apvi",
    "dp_vapvi",
    "exact_policy_value",
    "monte_carlo_value",
    "occupancy",
    "pevi",
    "sample_dataset",
    "solve_optimal",
    "tabularize",
    "validate_linear_mdp",
    "vapvi",
    "zcdp_to_approx_dp",
]
