"""Variance-aware pessimistic value iteration for linear MDPs with private
sufficient statistics (DP-VAPVI), its noiseless form (VAPVI) and the
unweighted PEVI baseline."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

import numpy as np

from .mdp_core import Dataset, LearnedPolicy, Policy, Seed, TabularMDP, as_rng, occupancy
from .privacy import NoiseMatrixSpec, PrivacyLedger, gaussian_mechanism, symmetric_noise_matrix
from .regression import GramAccumulator, gram, spd_solve

GRAM_SENSITIVITY = 1.0 / math.sqrt(2.0)


@dataclass(frozen=True)
class VapviConfig:
    """Settings shared by DP-VAPVI, VAPVI and PEVI.

    ``pessimism_mode="empirical"`` drops the additive privacy pessimism D;
    ``"theory"`` instantiates it with multiplier ``c_D`` and needs ``kappa``.
    ``variance_weighting=False`` fixes every variance estimate to 1.
    ``pevi_c`` scales the PEVI bonus (defaults to ``C``).
    """

    rho: float = 0.0
    delta: float = 0.1
    lam: float = 1.0
    C: float = 1.0
    c1: float = 1.0
    c2: float = 1.0
    c_D: float = 1.0
    split_data: bool = False
    pessimism_mode: str = "empirical"
    kappa: float | None = None
    variance_weighting: bool = True
    pevi_c: float | None = None

    def __post_init__(self):
        if self.lam <= 0:
            raise ValueError("lam must be positive")
        if self.C <= 0:
            raise ValueError("C must be positive")
        if self.rho < 0:
            raise ValueError("rho must be non-negative")
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        if self.pessimism_mode not in ("theory", "empirical"):
            raise ValueError(f"unknown pessimism mode {self.pessimism_mode!r}")


@dataclass(frozen=True)
class PessimismConstants:
    rho0: float
    L: float
    E: float
    kappa: float | None
    D: float


def compute_constants(H: int, d: int, rho: float, delta: float, kappa: float | None, cfg: VapviConfig) -> PessimismConstants:
    """Per-release budget, noise bounds L and E, and the additive pessimism D."""
    if cfg.pessimism_mode == "theory" and (kappa is None or kappa <= 0):
        raise ValueError(f"theory mode needs a positive feature coverage kappa, got {kappa!r}")
    if rho == 0:
        return PessimismConstants(0.0, 0.0, 0.0, kappa, 0.0)
    rho0 = rho / (5 * H)
    L = 2 * H * math.sqrt(5 * H * d * math.log(10 * H * d / delta) / rho)
    E = math.sqrt(10 * H * d / rho) * (2 + (math.log(5 * cfg.c1 * H / delta) / (cfg.c2 * d)) ** (2 / 3))
    D = 0.0
    if cfg.pessimism_mode == "theory":
        D = cfg.c_D * (H**2 * L / kappa + H**4 * E * math.sqrt(d) / kappa**1.5 + H**3 * math.sqrt(d))
    return PessimismConstants(rho0, L, E, kappa, D)


def sample_size_gates(H: int, d: int, kappa: float, lam: float, delta: float, L: float, E: float) -> dict[str, float]:
    """Episode-count conditions of the learning guarantee, reported as diagnostics only.

    ``M2`` is stated only up to unspecified constants and polylog factors;
    it is evaluated here with all of them set to one.
    """
    log_term = math.log(2 * d * H / delta)
    return {
        "M1": max(2 * lam, 128 * log_term, 128 * H**4 * log_term / kappa**2, math.sqrt(2) * L / math.sqrt(d * kappa)),
        "M2": max(H**12 * d**3 / kappa**5, H**14 * d / kappa**5),
        "M3": max(512 * H**4 * log_term / kappa**2, 4 * lam * H**2 / kappa),
        "M4": max(H**2 * L**2 / (d * kappa), H**6 * E**2 / kappa**2, H**4 * kappa),
    }


def xi_lower_bound(mdp: TabularMDP, values) -> float:
    """Largest standardized Bellman residual over the given value tables.

    For each table V (shape (H+1, S)) and each step, pair and reachable
    outcome (reward in {0, 1} with positive probability, s' in the support),
    evaluates ``|r + V(s') - (r_bar + P V)| / max(1, sqrt(Var_P V))``. The
    quantity in the guarantee is a supremum over all V in [0, H], so this is a
    lower bound on it.
    """
    best = 0.0
    for V in values:
        V = np.asarray(V, dtype=float)
        for h in range(mdp.H):
            nxt = V[h + 1]
            mean = mdp.P[h] @ nxt
            var = np.maximum(mdp.P[h] @ nxt**2 - mean**2, 0.0)
            scale = np.sqrt(np.maximum(1.0, var))
            target = mdp.r[h] + mean
            for reward in (0.0, 1.0):
                possible = (mdp.r[h] > 0) if reward == 1.0 else (mdp.r[h] < 1)
                resid = np.abs(reward + nxt[None, None, :] - target[..., None]) / scale[..., None]
                mask = possible[..., None] & (mdp.P[h] > 0)
                if mask.any():
                    best = max(best, float(resid[mask].max()))
    return best


def feature_coverage(mdp: TabularMDP, phi: np.ndarray, mu: Policy) -> float:
    """kappa = min over steps of the smallest eigenvalue of E_mu[phi phi^T]."""
    occ = occupancy(mdp, mu).d
    kappas = []
    for h in range(mdp.H):
        cov = np.einsum("sa,sai,saj->ij", occ[h], phi, phi)
        kappas.append(np.linalg.eigvalsh(cov)[0])
    return float(min(kappas))


def _step_arrays(data: Dataset, phi: np.ndarray, h: int):
    s, a = data.states[:, h], data.actions[:, h]
    return phi[s, a], s, a, data.states[:, h + 1], data.rewards[:, h]


def _greedy(q_raw: np.ndarray, cap: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    q = np.clip(q_raw, 0.0, cap)
    actions = np.argmax(q, axis=1)
    return q, actions, q[np.arange(q.shape[0]), actions]


def _check(data: Dataset, phi: np.ndarray) -> None:
    phi = np.asarray(phi)
    if phi.ndim != 3:
        raise ValueError(f"phi must have shape (S, A, d), got {phi.shape}")
    data.check_bounds(phi.shape[0], phi.shape[1])


def dp_vapvi(
    data: Dataset,
    data_prime: Dataset,
    phi: np.ndarray,
    cfg: VapviConfig,
    seed: Seed = None,
) -> LearnedPolicy:
    """Learn a greedy policy from ``data`` (regression split) and
    ``data_prime`` (variance split); pass the same dataset twice to skip
    splitting."""
    phi = np.asarray(phi, dtype=float)
    _check(data, phi)
    _check(data_prime, phi)
    if data.count != data_prime.count or data.horizon != data_prime.horizon:
        raise ValueError("both splits must hold the same number of length-H trajectories")
    S, A, d = phi.shape
    H, K = data.horizon, data.count
    consts = compute_constants(H, d, cfg.rho, cfg.delta, cfg.kappa, cfg)
    if K == 0 and consts.D > 0:
        raise ValueError("additive pessimism D/K is undefined for an empty dataset")
    extra = consts.D / K if consts.D else 0.0
    rng = as_rng(seed)
    ledger = PrivacyLedger(cfg.rho)
    rho0, E = consts.rho0, consts.E
    flat_phi = phi.reshape(S * A, d)

    q = np.zeros((H, S, A))
    v = np.zeros((H + 1, S))
    bonus = np.zeros((H, S, A))
    sigma2 = np.ones((H, S, A))
    actions = np.zeros((H, S), dtype=np.int64)
    weights = np.zeros((H, d))
    clamped = 0

    for h in range(H - 1, -1, -1):
        cap = float(H - h)
        # Variance of V_{h+1} from the second split.
        X2, _, _, nxt2, _ = _step_arrays(data_prime, phi, h)
        v_next2 = v[h + 1][nxt2]
        K1 = symmetric_noise_matrix(NoiseMatrixSpec(d, rho0, E), rng)
        ledger.record(f"sigma_gram[{h}]", "gaussian", GRAM_SENSITIVITY, rho0, math.sqrt(1 / (4 * rho0)) if rho0 else 0.0)
        second, s1 = gaussian_mechanism(X2.T @ (v_next2**2), 2.0 * H**2, rho0, rng)
        ledger.record(f"second_moment[{h}]", "gaussian", 2.0 * H**2, rho0, s1)
        first, s2 = gaussian_mechanism(X2.T @ v_next2, 2.0 * H, rho0, rng)
        ledger.record(f"first_moment[{h}]", "gaussian", 2.0 * H, rho0, s2)
        if cfg.variance_weighting:
            sigma_acc = GramAccumulator(gram(X2, None, cfg.lam, K1), second, cfg.lam, cfg.lam)
            beta = spd_solve(sigma_acc, second)
            theta = spd_solve(sigma_acc, first)
            clamped += sigma_acc.clamped
            var = np.clip(flat_phi @ beta, 0.0, cap**2) - np.clip(flat_phi @ theta, 0.0, cap) ** 2
            sigma2[h] = np.maximum(1.0, var).reshape(S, A)

        # Variance-weighted regression on the first split.
        X, s, a, nxt, r = _step_arrays(data, phi, h)
        w_i = sigma2[h][s, a]
        K2 = symmetric_noise_matrix(NoiseMatrixSpec(d, rho0, E), rng)
        ledger.record(f"lambda_gram[{h}]", "gaussian", GRAM_SENSITIVITY, rho0, math.sqrt(1 / (4 * rho0)) if rho0 else 0.0)
        target, s3 = gaussian_mechanism(X.T @ ((r + v[h + 1][nxt]) / w_i), 2.0 * H, rho0, rng)
        ledger.record(f"bellman_moment[{h}]", "gaussian", 2.0 * H, rho0, s3)
        lam_acc = GramAccumulator(gram(X, w_i, cfg.lam, K2), target, cfg.lam, cfg.lam)
        weights[h] = spd_solve(lam_acc, target)
        clamped += lam_acc.clamped

        gamma = cfg.C * math.sqrt(d) * np.sqrt(lam_acc.inverse_quadratic(flat_phi)) + extra
        bonus[h] = gamma.reshape(S, A)
        q[h], actions[h], v[h] = _greedy((flat_phi @ weights[h]).reshape(S, A) - bonus[h], cap)

    ledger.check_exhausted()
    diagnostics = {
        "rho0": rho0,
        "L": consts.L,
        "E": E,
        "D": consts.D,
        "kappa": consts.kappa,
        "clamped_grams": clamped,
        "sigma2": sigma2,
        "weights": weights,
    }
    return LearnedPolicy(Policy.deterministic(actions, A), q, v, bonus, ledger, diagnostics)


def vapvi(data: Dataset, data_prime: Dataset, phi: np.ndarray, cfg: VapviConfig | None = None) -> LearnedPolicy:
    """Noiseless variance-aware PVI: DP-VAPVI with every privacy noise removed."""
    cfg = dataclasses.replace(cfg or VapviConfig(), rho=0.0)
    return dp_vapvi(data, data_prime, phi, cfg, seed=None)


def pevi_beta(d: int, H: int, K: int, delta: float, c: float) -> float:
    """Bonus multiplier ``c * d * H * sqrt(log(2 d K / delta))``; K is floored at 1."""
    return c * d * H * math.sqrt(math.log(2 * d * max(K, 1) / delta))


def pevi(data: Dataset, phi: np.ndarray, cfg: VapviConfig | None = None) -> LearnedPolicy:
    """Pessimistic LSVI with a Hoeffding-style elliptical bonus."""
    cfg = cfg or VapviConfig()
    phi = np.asarray(phi, dtype=float)
    _check(data, phi)
    S, A, d = phi.shape
    H, K = data.horizon, data.count
    beta = pevi_beta(d, H, K, cfg.delta, cfg.C if cfg.pevi_c is None else cfg.pevi_c)
    flat_phi = phi.reshape(S * A, d)
    q = np.zeros((H, S, A))
    v = np.zeros((H + 1, S))
    bonus = np.zeros((H, S, A))
    actions = np.zeros((H, S), dtype=np.int64)
    for h in range(H - 1, -1, -1):
        X, _, _, nxt, r = _step_arrays(data, phi, h)
        b = X.T @ (r + v[h + 1][nxt])
        acc = GramAccumulator(gram(X, None, cfg.lam), b, cfg.lam, cfg.lam)
        w = spd_solve(acc, b)
        bonus[h] = (beta * np.sqrt(acc.inverse_quadratic(flat_phi))).reshape(S, A)
        q[h], actions[h], v[h] = _greedy((flat_phi @ w).reshape(S, A) - bonus[h], float(H - h))
    return LearnedPolicy(Policy.deterministic(actions, A), q, v, bonus, PrivacyLedger(0.0), {"beta": beta})


def split_dataset(data: Dataset) -> tuple[Dataset, Dataset]:
    """First and second halves (equal length; an odd trailing trajectory is dropped)."""
    half = data.count // 2
    return data.subset(slice(0, half)), data.subset(slice(half, 2 * half))
