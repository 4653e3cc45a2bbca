"""Private visitation statistics for tabular offline data.

Pipeline: raw counts -> noisy counts (Gaussian or Laplace, clamped at zero)
-> consistency projection -> private transition kernel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .mdp_core import Dataset, Seed, as_rng
from .privacy import PrivacyLedger, gaussian_mechanism, laplace_mechanism, laplace_scale


@dataclass(frozen=True)
class CountTables:
    """Visitation counts ``n_sa`` (H, S, A) and transition counts ``n_sas`` (H, S, A, S).

    ``stage`` is "raw", "noisy" or "consistent". For the consistent stage
    ``objective`` holds the achieved max-deviation per (h, s, a).
    """

    n_sa: np.ndarray
    n_sas: np.ndarray
    stage: str = "raw"
    objective: np.ndarray | None = None

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.n_sa.shape

    def to_rows(self) -> list[tuple[int, int, int, int, float]]:
        """(h, s, a, s', value) rows; s' = -1 marks the visitation count."""
        rows = []
        H, S, A = self.shape
        for h in range(H):
            for s in range(S):
                for a in range(A):
                    rows.append((h, s, a, -1, float(self.n_sa[h, s, a])))
                    for t in range(S):
                        rows.append((h, s, a, t, float(self.n_sas[h, s, a, t])))
        return rows


@dataclass(frozen=True)
class ReleaseParams:
    """Noise calibration for one count release.

    ``mechanism`` is "gaussian" (budget ``rho``, zCDP) or "laplace" (budget
    ``eps``, pure DP). A zero budget selects noiseless mode.
    """

    H: int
    S: int
    A: int
    delta: float
    rho: float = 0.0
    eps: float = 0.0
    mechanism: str = "gaussian"

    def __post_init__(self):
        if self.mechanism not in ("gaussian", "laplace"):
            raise ValueError(f"unknown mechanism {self.mechanism!r}")
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        if self.rho < 0 or self.eps < 0:
            raise ValueError("budgets must be non-negative")

    @property
    def budget(self) -> float:
        return self.rho if self.mechanism == "gaussian" else self.eps

    @property
    def noiseless(self) -> bool:
        return self.budget == 0

    @property
    def log_term(self) -> float:
        return math.log(4 * self.H * self.S**2 * self.A / self.delta)

    @property
    def sigma2(self) -> float:
        return 0.0 if self.noiseless else 2.0 * self.H / self.rho

    @property
    def laplace_b(self) -> float:
        return laplace_scale(4.0 * self.H, self.eps)

    @property
    def E(self) -> float:
        """Uniform high-probability bound on the count noise (E_rho or E_eps)."""
        if self.noiseless:
            return 0.0
        if self.mechanism == "gaussian":
            return 4.0 * math.sqrt(self.H * self.log_term / self.rho)
        return self.laplace_b * self.log_term


def raw_counts(data: Dataset, S: int, A: int, H: int) -> CountTables:
    if data.horizon != H:
        raise ValueError(f"dataset horizon {data.horizon} != H={H}")
    data.check_bounds(S, A)
    n_sas = np.zeros((H, S, A, S))
    hs = np.broadcast_to(np.arange(H), data.actions.shape)
    np.add.at(n_sas, (hs, data.states[:, :-1], data.actions, data.states[:, 1:]), 1.0)
    return CountTables(n_sas.sum(axis=-1), n_sas, "raw")


def noisy_counts(
    n: CountTables, params: ReleaseParams, seed: Seed, ledger: PrivacyLedger | None = None
) -> CountTables:
    """Add independent noise to every count, then clamp at zero.

    Gaussian mode charges rho/2 to each of the two count families (l2
    sensitivity sqrt(2H) each). Laplace mode releases both families at once
    with l1 sensitivity 4H.
    """
    if params.noiseless:
        return CountTables(n.n_sa.copy(), n.n_sas.copy(), "noisy")
    rng = as_rng(seed)
    H = params.H
    if params.mechanism == "gaussian":
        delta2 = math.sqrt(2.0 * H)
        n_sa, sigma = gaussian_mechanism(n.n_sa, delta2, params.rho / 2, rng)
        n_sas, _ = gaussian_mechanism(n.n_sas, delta2, params.rho / 2, rng)
        if ledger is not None:
            ledger.record("visit_counts", "gaussian", delta2, params.rho / 2, sigma)
            ledger.record("transition_counts", "gaussian", delta2, params.rho / 2, sigma)
    else:
        n_sa = laplace_mechanism(n.n_sa, 4.0 * H, params.eps, rng)
        n_sas = laplace_mechanism(n.n_sas, 4.0 * H, params.eps, rng)
        if ledger is not None:
            ledger.record("all_counts", "laplace", 4.0 * H, params.eps, params.laplace_b)
    return CountTables(np.maximum(n_sa, 0.0), np.maximum(n_sas, 0.0), "noisy")


def project_row(row: np.ndarray, parent: float, half_width: float) -> tuple[np.ndarray, float]:
    """Closest nonnegative child counts (in max-norm) whose sum is within
    ``half_width`` of ``parent``.

    Solves ``min t`` s.t. ``|x - row| <= t``, ``x >= 0``,
    ``|sum(x) - parent| <= half_width``. Returns ``(x, t)``. When the sum has
    to rise every coordinate moves up by ``t``; when it has to fall every
    coordinate moves down by ``t`` unless pinned at zero.
    """
    row = np.asarray(row, dtype=float)
    if row.min(initial=0.0) < 0:
        raise ValueError("noisy child counts must be clamped at zero")
    if half_width < 0:
        raise ValueError("half_width must be non-negative")
    lo, hi = parent - half_width, parent + half_width
    if hi < 0:
        raise ValueError("infeasible projection: parent + half_width < 0")
    total = math.fsum(row)
    S = row.size
    if lo <= total <= hi:
        return row.copy(), 0.0
    if total < lo:
        t = (lo - total) / S
        return row + t, t
    # Sum must fall to hi: find t with sum(max(0, row - t)) == hi.
    v = np.sort(row)[::-1]
    csum = np.cumsum(v)
    t = v[0]
    for k in range(S):
        cand = (csum[k] - hi) / (k + 1)
        nxt = v[k + 1] if k + 1 < S else 0.0
        if cand >= nxt:
            t = cand
            break
    return np.maximum(row - t, 0.0), float(t)


def consistent_counts(n_prime: CountTables, E: float) -> CountTables:
    H, S, A = n_prime.shape
    n_sas = np.empty_like(n_prime.n_sas)
    obj = np.zeros((H, S, A))
    for h in range(H):
        for s in range(S):
            for a in range(A):
                n_sas[h, s, a], obj[h, s, a] = project_row(n_prime.n_sas[h, s, a], n_prime.n_sa[h, s, a], E / 2)
    return CountTables(n_sas.sum(axis=-1), n_sas, "consistent", obj)


def private_kernel(n_tilde: CountTables, E: float) -> np.ndarray:
    """Transition estimate ``n_sas / n_sa`` where ``n_sa > E``; uniform elsewhere."""
    S = n_tilde.n_sas.shape[-1]
    trusted = n_tilde.n_sa > E
    P = np.full(n_tilde.n_sas.shape, 1.0 / S)
    P[trusted] = n_tilde.n_sas[trusted] / n_tilde.n_sa[trusted][:, None]
    return P


def empirical_kernel(n: CountTables) -> np.ndarray:
    """Non-private estimate ``n_sas / n_sa`` where visited; uniform elsewhere."""
    S = n.n_sas.shape[-1]
    P = np.full(n.n_sas.shape, 1.0 / S)
    visited = n.n_sa > 0
    P[visited] = n.n_sas[visited] / n.n_sa[visited][:, None]
    return P
