"""Gaussian and Laplace mechanisms, zCDP composition/conversion, symmetric
noise matrices, and a per-run release ledger.

A budget of exactly 0 means "noiseless mode": every mechanism returns its
input unchanged. This lets the private learners collapse onto their
non-private baselines through a single code path.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Iterable

import numpy as np

from .mdp_core import Seed, as_rng


@dataclass(frozen=True)
class PrivacyBudget:
    kind: str  # "zcdp" | "pure" | "approx"
    rho: float = 0.0
    eps: float = 0.0
    delta: float | None = None

    def __post_init__(self):
        if self.kind not in ("zcdp", "pure", "approx"):
            raise ValueError(f"unknown budget kind {self.kind!r}")
        if self.rho < 0 or self.eps < 0:
            raise ValueError("privacy budgets must be non-negative")
        if self.kind == "approx" and not (self.delta is not None and 0 < self.delta < 1):
            raise ValueError("approximate DP needs delta in (0, 1)")

    @classmethod
    def zcdp(cls, rho: float) -> "PrivacyBudget":
        return cls("zcdp", rho=rho)

    @classmethod
    def pure(cls, eps: float) -> "PrivacyBudget":
        return cls("pure", eps=eps)

    @property
    def noiseless(self) -> bool:
        return (self.rho if self.kind == "zcdp" else self.eps) == 0

    def to_approx_dp(self, delta: float) -> tuple[float, float]:
        if self.kind == "zcdp":
            return zcdp_to_approx_dp(self.rho, delta), delta
        if self.kind == "pure":
            return self.eps, 0.0
        return self.eps, self.delta


def gaussian_sigma(delta2: float, rho: float) -> float:
    """Noise scale giving rho-zCDP for l2-sensitivity ``delta2``."""
    if rho < 0:
        raise ValueError("rho must be non-negative")
    if delta2 <= 0:
        raise ValueError("sensitivity must be positive")
    if rho == 0:
        return 0.0
    sigma = math.sqrt(delta2**2 / (2.0 * rho))
    if not math.isfinite(sigma):
        raise ValueError(f"budget rho={rho!r} is too small: noise scale overflows")
    return sigma


def gaussian_mechanism(x, delta2: float, rho: float, seed: Seed) -> tuple[np.ndarray, float]:
    x = np.asarray(x, dtype=float)
    sigma = gaussian_sigma(delta2, rho)
    if sigma == 0.0:
        return x.copy(), 0.0
    return x + as_rng(seed).normal(0.0, sigma, size=x.shape), sigma


def laplace_scale(delta1: float, eps: float) -> float:
    if eps < 0:
        raise ValueError("eps must be non-negative")
    if delta1 <= 0:
        raise ValueError("sensitivity must be positive")
    return 0.0 if eps == 0 else delta1 / eps


def laplace_mechanism(x, delta1: float, eps: float, seed: Seed) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    b = laplace_scale(delta1, eps)
    if b == 0.0:
        return x.copy()
    return x + as_rng(seed).laplace(0.0, b, size=x.shape)


def compose_zcdp(budgets: Iterable[float]) -> float:
    budgets = list(budgets)
    if any(b < 0 for b in budgets):
        raise ValueError("zCDP budgets must be non-negative")
    return math.fsum(budgets)


def zcdp_to_approx_dp(rho: float, delta: float) -> float:
    """epsilon such that rho-zCDP implies (epsilon, delta)-DP."""
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    if rho < 0:
        raise ValueError("rho must be non-negative")
    return rho + 2.0 * math.sqrt(rho * math.log(1.0 / delta))


@dataclass(frozen=True)
class NoiseMatrixSpec:
    d: int
    rho0: float
    E: float = 0.0

    def __post_init__(self):
        if self.d < 1 or self.rho0 < 0 or self.E < 0:
            raise ValueError(f"invalid noise matrix spec {self}")


def symmetric_noise_matrix(spec: NoiseMatrixSpec, seed: Seed) -> np.ndarray:
    """``(E/2) I + (Z + Z^T)/sqrt(2)`` with ``Z_ij ~ N(0, 1/(4 rho0))``."""
    K = np.eye(spec.d) * (spec.E / 2.0)
    if spec.rho0 == 0:
        return K
    Z = as_rng(seed).normal(0.0, math.sqrt(1.0 / (4.0 * spec.rho0)), size=(spec.d, spec.d))
    with np.errstate(over="ignore", invalid="ignore"):
        N = (Z + Z.T) / math.sqrt(2.0)
    if not np.isfinite(N).all():
        raise ValueError(f"budget rho0={spec.rho0!r} is too small: noise overflows")
    # (Z + Z^T) is symmetric in exact arithmetic; enforce it bitwise.
    N = np.triu(N) + np.triu(N, 1).T
    return K + N


@dataclass
class Release:
    name: str
    mechanism: str
    sensitivity: float
    budget: float
    scale: float


@dataclass
class PrivacyLedger:
    """Declared releases of one run; checks their composition at exit.

    ``kind`` is "zcdp" (budgets are rho values) or "pure" (epsilon values);
    both compose by summation.
    """

    budget: float
    kind: str = "zcdp"
    releases: list[Release] = field(default_factory=list)

    def record(self, name: str, mechanism: str, sensitivity: float, budget: float, scale: float) -> None:
        self.releases.append(Release(name, mechanism, float(sensitivity), float(budget), float(scale)))

    @property
    def total(self) -> float:
        return compose_zcdp(r.budget for r in self.releases)

    def check_exhausted(self, rel_tol: float = 1e-12) -> None:
        if not math.isclose(self.total, self.budget, rel_tol=rel_tol, abs_tol=0.0):
            raise AssertionError(f"releases compose to {self.total!r}, configured {self.kind} budget {self.budget!r}")

    def to_records(self) -> list[dict]:
        return [asdict(r) for r in self.releases]

    def to_json(self) -> str:
        return json.dumps({"kind": self.kind, "budget": self.budget, "total": self.total, "releases": self.to_records()}, indent=2)
