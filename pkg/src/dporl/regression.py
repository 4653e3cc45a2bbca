"""Symmetric positive-definite solves and (noised) variance-weighted ridge
regression for the linear-MDP learners."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

SYMMETRY_TOL = 1e-12


@dataclass
class GramAccumulator:
    """Gram matrix ``M`` with its right-hand side ``b``.

    :meth:`condition` lifts eigenvalues below ``floor`` up to ``floor``; the
    eigendecomposition is cached and reused by :func:`spd_solve`.
    """

    M: np.ndarray
    b: np.ndarray
    lam: float
    floor: float
    clamped: bool = False
    _eig: tuple[np.ndarray, np.ndarray] | None = field(default=None, repr=False)

    def __post_init__(self):
        M = np.asarray(self.M, dtype=float)
        if M.ndim != 2 or M.shape[0] != M.shape[1]:
            raise ValueError(f"Gram matrix must be square, got {M.shape}")
        asym = np.abs(M - M.T).max(initial=0.0)
        if asym > SYMMETRY_TOL * max(1.0, np.abs(M).max(initial=0.0)):
            raise ValueError(f"Gram matrix not symmetric (max asymmetry {asym:.3g})")
        self.M = (M + M.T) / 2.0
        self.b = np.asarray(self.b, dtype=float)

    @property
    def d(self) -> int:
        return self.M.shape[0]

    def condition(self) -> "GramAccumulator":
        if self._eig is not None:
            return self
        w, U = np.linalg.eigh(self.M)
        # eigh on a ridge-regularized matrix can land a few ulps under lambda.
        low = w < self.floor * (1.0 - 1e-9)
        if low.any():
            self.clamped = True
            w = np.maximum(w, self.floor)
            self.M = (U * w) @ U.T
            self.M = (self.M + self.M.T) / 2.0
        self._eig = (w, U)
        return self

    @property
    def min_eigenvalue(self) -> float:
        self.condition()
        return float(self._eig[0].min())

    def inverse_quadratic(self, X: np.ndarray) -> np.ndarray:
        """Row-wise ``x^T M^{-1} x`` for the rows of ``X``."""
        self.condition()
        w, U = self._eig
        Y = X @ U
        return np.einsum("ij,ij->i", Y / w, Y)


def spd_solve(acc: GramAccumulator, rhs: np.ndarray) -> np.ndarray:
    """Solve ``M x = rhs`` after conditioning ``M``; ``rhs`` may be (d,) or (d, k)."""
    acc.condition()
    w, U = acc._eig
    rhs = np.asarray(rhs, dtype=float)
    if rhs.shape[0] != acc.d:
        raise ValueError(f"rhs has leading dimension {rhs.shape[0]}, expected {acc.d}")
    coeff = U.T @ rhs
    coeff = coeff / (w if rhs.ndim == 1 else w[:, None])
    return U @ coeff


def gram(features: np.ndarray, weights: np.ndarray | None, lam: float, noise_mat: np.ndarray | None = None) -> np.ndarray:
    """``sum_i phi_i phi_i^T / w_i + lam I + noise_mat``."""
    features = np.asarray(features, dtype=float)
    d = features.shape[1]
    scaled = features if weights is None else features / np.asarray(weights, dtype=float)[:, None]
    M = scaled.T @ features + lam * np.eye(d)
    if noise_mat is not None:
        M = M + noise_mat
    return M


def weighted_ridge(
    features: np.ndarray,
    targets: np.ndarray,
    weights: np.ndarray | None,
    lam: float,
    noise_vec: np.ndarray | None = None,
    noise_mat: np.ndarray | None = None,
) -> tuple[np.ndarray, GramAccumulator]:
    """Variance-weighted ridge: minimise ``lam|w|^2 + sum (phi_i.w - y_i)^2 / sigma2_i``.

    ``weights`` are the per-sample variances ``sigma2_i`` (``None`` means all
    ones). Noise terms perturb the Gram matrix and the moment vector.
    """
    if lam <= 0:
        raise ValueError("ridge parameter must be positive")
    features = np.asarray(features, dtype=float)
    targets = np.asarray(targets, dtype=float)
    if features.ndim != 2 or targets.shape != (features.shape[0],):
        raise ValueError(f"features {features.shape} and targets {targets.shape} are inconsistent")
    if weights is not None and np.asarray(weights).shape != targets.shape:
        raise ValueError("weights must match targets")
    M = gram(features, weights, lam, noise_mat)
    y = targets if weights is None else targets / np.asarray(weights, dtype=float)
    b = features.T @ y
    if noise_vec is not None:
        b = b + noise_vec
    acc = GramAccumulator(M, b, lam, floor=lam)
    return spd_solve(acc, b), acc
