"""Pessimistic value iteration on tabular MDPs with private counts (DP-APVI)
and its non-private counterpart (APVI)."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .count_release import (
    CountTables,
    ReleaseParams,
    consistent_counts,
    empirical_kernel,
    noisy_counts,
    private_kernel,
    raw_counts,
)
from .mdp_core import Dataset, LearnedPolicy, Policy, Seed
from .privacy import PrivacyLedger


@dataclass(frozen=True)
class ApviConfig:
    """Settings for DP-APVI.

    ``C`` is the penalty multiplier for pairs whose private count does not
    exceed the noise bound; ``None`` means ``H + 1`` so such pairs are fully
    suppressed. ``rho = 0`` (Gaussian) or ``eps = 0`` (Laplace) runs without
    noise.
    """

    delta: float = 0.1
    rho: float = 0.0
    eps: float = 0.0
    mechanism: str = "gaussian"
    C1: float = math.sqrt(2.0)
    C2: float = 16.0
    C: float | None = None

    def __post_init__(self):
        if self.C is not None and self.C <= 1:
            raise ValueError("C must exceed 1")
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")

    def penalty_multiplier(self, H: int) -> float:
        return float(H + 1) if self.C is None else self.C

    def release_params(self, H: int, S: int, A: int) -> ReleaseParams:
        return ReleaseParams(H, S, A, self.delta, rho=self.rho, eps=self.eps, mechanism=self.mechanism)


def bernstein_bonus(
    p_row: np.ndarray,
    v_next: np.ndarray,
    n_sa: float,
    E: float,
    iota: float,
    H: int,
    cfg: ApviConfig,
) -> float:
    if n_sa <= E:
        return cfg.penalty_multiplier(H) * H
    S = p_row.size
    mean = p_row @ v_next
    var = max(p_row @ (v_next * v_next) - mean * mean, 0.0)
    return cfg.C1 * math.sqrt(var * iota / (n_sa - E)) + cfg.C2 * S * H * E * iota / n_sa


def pessimistic_backup(
    P: np.ndarray,
    n_sa: np.ndarray,
    reward: np.ndarray,
    E: float,
    iota: float,
    cfg: ApviConfig,
) -> tuple[Policy, np.ndarray, np.ndarray, np.ndarray]:
    """Backward loop shared by DP-APVI and APVI. Returns (policy, q, v, bonus)."""
    H, S, A = n_sa.shape
    q = np.zeros((H, S, A))
    v = np.zeros((H + 1, S))
    bonus = np.zeros((H, S, A))
    actions = np.zeros((H, S), dtype=np.int64)
    for h in range(H - 1, -1, -1):
        q_est = reward[h] + P[h] @ v[h + 1]
        for s in range(S):
            for a in range(A):
                bonus[h, s, a] = bernstein_bonus(P[h, s, a], v[h + 1], n_sa[h, s, a], E, iota, H, cfg)
        q[h] = np.clip(q_est - bonus[h], 0.0, H - h)
        actions[h] = np.argmax(q[h], axis=1)
        v[h] = q[h][np.arange(S), actions[h]]
    return Policy.deterministic(actions, A), q, v, bonus


def _check_inputs(data: Dataset, S: int, A: int, H: int, reward: np.ndarray) -> np.ndarray:
    reward = np.asarray(reward, dtype=float)
    if reward.shape != (H, S, A):
        raise ValueError(f"reward table has shape {reward.shape}, expected {(H, S, A)}")
    if data.horizon != H:
        raise ValueError(f"dataset horizon {data.horizon} != H={H}")
    return reward


def coverage_threshold(H: int, E: float, d_m: float, iota: float) -> float:
    """``max(H^2, E) / d_m * iota``; the learning guarantee needs n above a
    constant multiple of this."""
    return math.inf if d_m <= 0 else max(H**2, E) / d_m * iota


def dp_apvi(
    data: Dataset,
    S: int,
    A: int,
    H: int,
    reward: np.ndarray,
    cfg: ApviConfig,
    seed: Seed = None,
) -> LearnedPolicy:
    reward = _check_inputs(data, S, A, H, reward)
    params = cfg.release_params(H, S, A)
    ledger = PrivacyLedger(params.budget, "zcdp" if cfg.mechanism == "gaussian" else "pure")
    n = raw_counts(data, S, A, H)
    n_prime = noisy_counts(n, params, seed, ledger)
    E = params.E
    n_tilde = consistent_counts(n_prime, E)
    P = private_kernel(n_tilde, E)
    iota = math.log(H * S * A / cfg.delta)
    policy, q, v, bonus = pessimistic_backup(P, n_tilde.n_sa, reward, E, iota, cfg)
    ledger.check_exhausted()
    diagnostics = {
        "E": E,
        "sigma2": params.sigma2 if cfg.mechanism == "gaussian" else None,
        "iota": iota,
        "penalized_pairs": int((n_tilde.n_sa <= E).sum()),
    }
    return LearnedPolicy(policy, q, v, bonus, ledger, diagnostics)


def apvi(data: Dataset, S: int, A: int, H: int, reward: np.ndarray, cfg: ApviConfig | None = None) -> LearnedPolicy:
    """Non-private baseline: empirical kernel from raw counts, no noise terms."""
    cfg = cfg or ApviConfig()
    reward = _check_inputs(data, S, A, H, reward)
    n: CountTables = raw_counts(data, S, A, H)
    P = empirical_kernel(n)
    iota = math.log(H * S * A / cfg.delta)
    policy, q, v, bonus = pessimistic_backup(P, n.n_sa, reward, 0.0, iota, cfg)
    ledger = PrivacyLedger(0.0)
    diagnostics = {"E": 0.0, "sigma2": 0.0, "iota": iota, "penalized_pairs": int((n.n_sa <= 0).sum())}
    return LearnedPolicy(policy, q, v, bonus, ledger, diagnostics)
