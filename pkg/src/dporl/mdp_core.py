"""Finite-horizon MDPs: tabular and linear representations, exact and
Monte-Carlo policy evaluation, optimal planning, occupancy measures and
offline dataset generation.

Indexing convention: steps are 0-based (``h = 0 .. H-1``) everywhere in code;
value tables carry an extra terminal row ``V[H] = 0``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING, NamedTuple, Union

import numpy as np

if TYPE_CHECKING:
    from .privacy import PrivacyLedger

Seed = Union[int, np.random.Generator, None]

PROB_TOL = 1e-12


def as_rng(seed: Seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class TabularMDP:
    """Time-inhomogeneous tabular MDP.

    ``P`` has shape (H, S, A, S), ``r`` (H, S, A) holds mean rewards in [0, 1]
    and ``d1`` is the initial state distribution.
    """

    P: np.ndarray
    r: np.ndarray
    d1: np.ndarray

    def __post_init__(self):
        P = np.array(self.P, dtype=float)
        r = np.array(self.r, dtype=float)
        d1 = np.array(self.d1, dtype=float)
        if P.ndim != 4 or P.shape[1] != P.shape[3]:
            raise ValueError(f"P must have shape (H, S, A, S), got {P.shape}")
        if r.shape != P.shape[:3]:
            raise ValueError(f"r has shape {r.shape}, expected {P.shape[:3]}")
        if d1.shape != (P.shape[1],):
            raise ValueError(f"d1 has shape {d1.shape}, expected ({P.shape[1]},)")
        if P.min() < 0 or np.abs(P.sum(axis=-1) - 1).max() > PROB_TOL:
            raise ValueError("transition rows must be probability vectors")
        if r.min() < 0 or r.max() > 1:
            raise ValueError("mean rewards must lie in [0, 1]")
        if d1.min() < 0 or abs(d1.sum() - 1) > PROB_TOL:
            raise ValueError("d1 must be a probability vector")
        object.__setattr__(self, "P", _frozen(P))
        object.__setattr__(self, "r", _frozen(r))
        object.__setattr__(self, "d1", _frozen(d1))

    @property
    def H(self) -> int:
        return self.P.shape[0]

    @property
    def S(self) -> int:
        return self.P.shape[1]

    @property
    def A(self) -> int:
        return self.P.shape[2]


@dataclass(frozen=True)
class LinearMDP:
    """Linear MDP over a finite state-action space.

    ``phi`` (S, A, d) is the known feature map, ``nu`` (H, S, d) the signed
    transition measures and ``theta`` (H, d) the reward weights, so that
    ``P_h(s'|s,a) = <phi(s,a), nu_h(s')>`` and ``r_h(s,a) = <phi(s,a), theta_h>``.
    Only shapes are checked on construction; use :func:`validate_linear_mdp`
    for the probabilistic constraints.
    """

    phi: np.ndarray
    nu: np.ndarray
    theta: np.ndarray
    d1: np.ndarray

    def __post_init__(self):
        phi = np.array(self.phi, dtype=float)
        nu = np.array(self.nu, dtype=float)
        theta = np.array(self.theta, dtype=float)
        d1 = np.array(self.d1, dtype=float)
        if phi.ndim != 3:
            raise ValueError(f"phi must have shape (S, A, d), got {phi.shape}")
        S, _, d = phi.shape
        if nu.ndim != 3 or nu.shape[1:] != (S, d):
            raise ValueError(f"nu has shape {nu.shape}, expected (H, {S}, {d})")
        if theta.shape != (nu.shape[0], d):
            raise ValueError(f"theta has shape {theta.shape}, expected ({nu.shape[0]}, {d})")
        if d1.shape != (S,):
            raise ValueError(f"d1 has shape {d1.shape}, expected ({S},)")
        for name, arr in (("phi", phi), ("nu", nu), ("theta", theta), ("d1", d1)):
            object.__setattr__(self, name, _frozen(arr))

    @property
    def H(self) -> int:
        return self.nu.shape[0]

    @property
    def S(self) -> int:
        return self.phi.shape[0]

    @property
    def A(self) -> int:
        return self.phi.shape[1]

    @property
    def d(self) -> int:
        return self.phi.shape[2]

    def transition_tensor(self) -> np.ndarray:
        """Raw inner products <phi(s,a), nu_h(s')>, shape (H, S, A, S)."""
        return np.einsum("sak,htk->hsat", self.phi, self.nu)

    def reward_table(self) -> np.ndarray:
        return np.einsum("sak,hk->hsa", self.phi, self.theta)


@dataclass(frozen=True)
class Policy:
    """Per-step action distributions ``probs[h, s, a]``.

    Deterministic policies also keep their action table in ``actions``.
    """

    probs: np.ndarray
    actions: np.ndarray | None = None

    def __post_init__(self):
        probs = np.array(self.probs, dtype=float)
        if probs.ndim != 3:
            raise ValueError(f"policy table must have shape (H, S, A), got {probs.shape}")
        if probs.min() < 0 or np.abs(probs.sum(axis=-1) - 1).max() > PROB_TOL:
            raise ValueError("policy rows must be probability vectors")
        object.__setattr__(self, "probs", _frozen(probs))
        if self.actions is not None:
            actions = np.array(self.actions, dtype=np.int64)
            object.__setattr__(self, "actions", _frozen(actions))

    @classmethod
    def deterministic(cls, actions, n_actions: int) -> "Policy":
        actions = np.asarray(actions, dtype=np.int64)
        if actions.ndim != 2:
            raise ValueError("action table must have shape (H, S)")
        if actions.min(initial=0) < 0 or actions.max(initial=0) >= n_actions:
            raise ValueError("action index out of range")
        probs = np.zeros(actions.shape + (n_actions,))
        np.put_along_axis(probs, actions[..., None], 1.0, axis=-1)
        return cls(probs, actions)

    @classmethod
    def uniform(cls, H: int, S: int, A: int) -> "Policy":
        return cls(np.full((H, S, A), 1.0 / A))

    @property
    def is_deterministic(self) -> bool:
        return self.actions is not None

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.probs.shape


@dataclass(frozen=True)
class Dataset:
    """``count`` trajectories of length H.

    ``states`` has shape (n, H+1) (the last column holds s_{H+1}), ``actions``
    and ``rewards`` have shape (n, H).
    """

    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray

    def __post_init__(self):
        states = np.array(self.states, dtype=np.int64)
        actions = np.array(self.actions, dtype=np.int64)
        rewards = np.array(self.rewards, dtype=float)
        if states.ndim != 2 or actions.ndim != 2:
            raise ValueError("states and actions must be 2-d arrays")
        n, H = actions.shape
        if states.shape != (n, H + 1) or rewards.shape != (n, H):
            raise ValueError(
                f"inconsistent shapes: states {states.shape}, actions {actions.shape}, "
                f"rewards {rewards.shape}"
            )
        if rewards.size and (rewards.min() < 0 or rewards.max() > 1):
            raise ValueError("observed rewards must lie in [0, 1]")
        if states.size and states.min() < 0 or actions.size and actions.min() < 0:
            raise ValueError("negative state or action index")
        for name, arr in (("states", states), ("actions", actions), ("rewards", rewards)):
            object.__setattr__(self, name, _frozen(arr))

    @classmethod
    def empty(cls, H: int) -> "Dataset":
        return cls(np.zeros((0, H + 1)), np.zeros((0, H)), np.zeros((0, H)))

    @property
    def count(self) -> int:
        return self.actions.shape[0]

    @property
    def horizon(self) -> int:
        return self.actions.shape[1]

    def check_bounds(self, S: int, A: int) -> None:
        if self.states.size and self.states.max() >= S:
            raise ValueError(f"state index {self.states.max()} out of range for S={S}")
        if self.actions.size and self.actions.max() >= A:
            raise ValueError(f"action index {self.actions.max()} out of range for A={A}")

    def subset(self, idx) -> "Dataset":
        return Dataset(self.states[idx], self.actions[idx], self.rewards[idx])


@dataclass(frozen=True)
class OccupancyTable:
    """Marginal state-action occupancy ``d[h, s, a]``."""

    d: np.ndarray

    def min_positive(self) -> float:
        """Smallest strictly positive occupancy over all steps (d_m bar)."""
        pos = self.d[self.d > 0]
        return float(pos.min()) if pos.size else 0.0

    def trackable_sets(self) -> list[np.ndarray]:
        """Boolean (S, A) masks of the pairs with positive occupancy, per step."""
        return [self.d[h] > 0 for h in range(self.d.shape[0])]


@dataclass
class Violation:
    kind: str
    index: tuple
    magnitude: float


@dataclass
class ValidationReport:
    violations: list[Violation] = field(default_factory=list)

    def __bool__(self) -> bool:
        return not self.violations

    @property
    def ok(self) -> bool:
        return not self.violations

    def worst(self, kind: str | None = None) -> float:
        mags = [v.magnitude for v in self.violations if kind is None or v.kind == kind]
        return max(mags, default=0.0)

    def kinds(self) -> set[str]:
        return {v.kind for v in self.violations}


@dataclass
class LearnedPolicy:
    """Greedy policy plus the tables that produced it.

    ``q`` holds the clipped pessimistic Q-values (H, S, A), ``v`` the value
    estimates (H+1, S) with ``v[H] = 0`` and ``bonus`` the penalties.
    """

    policy: Policy
    q: np.ndarray
    v: np.ndarray
    bonus: np.ndarray
    ledger: "PrivacyLedger | None" = None
    diagnostics: dict = field(default_factory=dict)


class PolicyValue(NamedTuple):
    v: float
    V: np.ndarray
    Q: np.ndarray


class OptimalSolution(NamedTuple):
    policy: Policy
    v: float
    V: np.ndarray


def validate_linear_mdp(lin: LinearMDP, tol: float = PROB_TOL) -> ValidationReport:
    """List every violated linear-MDP constraint with its magnitude.

    Reports negative transition entries (``negative_probability`` at
    (h, s, a, s')), row sums away from one (``row_sum`` at (h, s, a)) and
    rewards outside [0, 1] (``reward_range`` at (h, s, a)).
    """
    report = ValidationReport()
    P = lin.transition_tensor()
    for idx in zip(*np.nonzero(P < -tol)):
        report.violations.append(Violation("negative_probability", tuple(map(int, idx)), float(-P[idx])))
    row_err = np.abs(P.sum(axis=-1) - 1.0)
    for idx in zip(*np.nonzero(row_err > tol)):
        report.violations.append(Violation("row_sum", tuple(map(int, idx)), float(row_err[idx])))
    r = lin.reward_table()
    excess = np.maximum(r - 1.0, -r)
    for idx in zip(*np.nonzero(excess > tol)):
        report.violations.append(Violation("reward_range", tuple(map(int, idx)), float(excess[idx])))
    d1_err = abs(lin.d1.sum() - 1.0)
    if lin.d1.min() < -tol or d1_err > tol:
        report.violations.append(Violation("initial_distribution", (), float(max(d1_err, -lin.d1.min()))))
    return report


def tabularize(lin: LinearMDP) -> TabularMDP:
    """Expand a linear MDP into its explicit tabular form."""
    report = validate_linear_mdp(lin)
    if not report.ok:
        first = report.violations[0]
        raise ValueError(
            f"linear MDP violates {len(report.violations)} constraint(s); "
            f"first: {first.kind} at {first.index} by {first.magnitude:.3g}"
        )
    P = np.clip(lin.transition_tensor(), 0.0, None)
    P /= P.sum(axis=-1, keepdims=True)
    r = np.clip(lin.reward_table(), 0.0, 1.0)
    return TabularMDP(P, r, lin.d1)


def _check_policy(mdp: TabularMDP, pi: Policy) -> None:
    if pi.shape != (mdp.H, mdp.S, mdp.A):
        raise ValueError(f"policy shape {pi.shape} does not match MDP {(mdp.H, mdp.S, mdp.A)}")


def exact_policy_value(mdp: TabularMDP, pi: Policy) -> PolicyValue:
    _check_policy(mdp, pi)
    H, S, A = mdp.H, mdp.S, mdp.A
    V = np.zeros((H + 1, S))
    Q = np.zeros((H, S, A))
    for h in range(H - 1, -1, -1):
        Q[h] = mdp.r[h] + mdp.P[h] @ V[h + 1]
        V[h] = np.einsum("sa,sa->s", Q[h], pi.probs[h])
    return PolicyValue(float(mdp.d1 @ V[0]), V, Q)


def solve_optimal(mdp: TabularMDP) -> OptimalSolution:
    """Backward induction; ties go to the lowest action index."""
    H, S = mdp.H, mdp.S
    V = np.zeros((H + 1, S))
    actions = np.zeros((H, S), dtype=np.int64)
    for h in range(H - 1, -1, -1):
        Q = mdp.r[h] + mdp.P[h] @ V[h + 1]
        actions[h] = np.argmax(Q, axis=1)
        V[h] = Q[np.arange(S), actions[h]]
    return OptimalSolution(Policy.deterministic(actions, mdp.A), float(mdp.d1 @ V[0]), V)


def occupancy(mdp: TabularMDP, pi: Policy) -> OccupancyTable:
    _check_policy(mdp, pi)
    d = np.zeros((mdp.H, mdp.S, mdp.A))
    state_dist = mdp.d1.copy()
    for h in range(mdp.H):
        d[h] = state_dist[:, None] * pi.probs[h]
        state_dist = np.einsum("sa,sat->t", d[h], mdp.P[h])
    return OccupancyTable(d)


def _sample_categorical(rng: np.random.Generator, probs: np.ndarray) -> np.ndarray:
    """One draw per row of ``probs`` (shape (n, k)) by inverse CDF."""
    cdf = np.cumsum(probs, axis=-1)
    u = rng.random(probs.shape[0])
    idx = (u[:, None] >= cdf).sum(axis=-1)
    return np.minimum(idx, probs.shape[-1] - 1)


def _rollout(mdp: TabularMDP, pi: Policy, count: int, rng: np.random.Generator):
    H = mdp.H
    states = np.zeros((count, H + 1), dtype=np.int64)
    actions = np.zeros((count, H), dtype=np.int64)
    rewards = np.zeros((count, H))
    states[:, 0] = _sample_categorical(rng, np.broadcast_to(mdp.d1, (count, mdp.S)))
    for h in range(H):
        s = states[:, h]
        a = _sample_categorical(rng, pi.probs[h, s])
        actions[:, h] = a
        rewards[:, h] = (rng.random(count) < mdp.r[h, s, a]).astype(float)
        states[:, h + 1] = _sample_categorical(rng, mdp.P[h, s, a])
    return states, actions, rewards


def sample_dataset(mdp: TabularMDP, mu: Policy, count: int, seed: Seed) -> Dataset:
    """Roll out ``count`` i.i.d. trajectories of the behavior policy ``mu``.

    Rewards are Bernoulli with the MDP's mean reward.
    """
    if count < 0:
        raise ValueError("count must be non-negative")
    _check_policy(mdp, mu)
    return Dataset(*_rollout(mdp, mu, count, as_rng(seed)))


def monte_carlo_value(mdp: TabularMDP, pi: Policy, rollouts: int, seed: Seed) -> tuple[float, float]:
    """Sample-mean return over ``rollouts`` episodes and its standard error."""
    if rollouts < 1:
        raise ValueError("rollouts must be >= 1")
    _check_policy(mdp, pi)
    _, _, rewards = _rollout(mdp, pi, rollouts, as_rng(seed))
    returns = rewards.sum(axis=1)
    stderr = float(returns.std(ddof=1) / np.sqrt(rollouts)) if rollouts > 1 else 0.0
    return float(returns.mean()), stderr


def random_tabular_mdp(S: int, A: int, H: int, seed: Seed) -> TabularMDP:
    """Dirichlet(1) transitions, uniform mean rewards and initial distribution."""
    rng = as_rng(seed)
    P = rng.dirichlet(np.ones(S), size=(H, S, A))
    r = rng.random((H, S, A))
    d1 = rng.dirichlet(np.ones(S))
    return TabularMDP(P, r, d1)


def random_policy(H: int, S: int, A: int, seed: Seed) -> Policy:
    rng = as_rng(seed)
    return Policy(rng.dirichlet(np.ones(A), size=(H, S)))


def epsilon_greedy(pi: Policy, eps: float) -> Policy:
    """Mix a policy with the uniform policy: ``(1-eps)*pi + eps/A``."""
    A = pi.shape[2]
    return Policy((1.0 - eps) * pi.probs + eps / A)
