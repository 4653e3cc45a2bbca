"""Experiment construction and orchestration: the synthetic linear MDP with
two states and 100 actions, random tabular environments, privacy/size
sweeps scored against the exact optimal value, CSV and SVG output."""

from __future__ import annotations

import csv
import dataclasses
import logging
import math
import time
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .tabular_pvi import ApviConfig, apvi, dp_apvi
from .linear_pvi import VapviConfig, dp_vapvi, feature_coverage, pevi, sample_size_gates, split_dataset, vapvi
from .tabular_pvi import coverage_threshold
from .fileio import load_mdp
from .mdp_core import (
    LearnedPolicy,
    LinearMDP,
    Policy,
    TabularMDP,
    as_rng,
    epsilon_greedy,
    exact_policy_value,
    random_tabular_mdp,
    sample_dataset,
    occupancy,
    solve_optimal,
    tabularize,
)

log = logging.getLogger(__name__)

CSV_HEADER = ["alg", "env", "H", "K", "rho", "seed", "subopt", "runtime_ms"]
DEFAULT_K_GRID = (5, 10, 25, 50, 100, 250, 500, 1000)
DEFAULT_RHO_GRID = (0.1, 1.0, 10.0)
PRIVATE_ALGS = ("dp-vapvi", "dp-apvi")
ALGORITHMS = ("vapvi", "dp-vapvi", "pevi", "apvi", "dp-apvi")


def _binary8(a: int) -> np.ndarray:
    return np.array([(a >> (7 - i)) & 1 for i in range(8)], dtype=float)


def appendix_f_features(S: int = 2, A: int = 100) -> np.ndarray:
    """phi(s, a) = (8-bit binary code of a, delta(s,a), 1 - delta(s,a)), where
    delta(s,a) = 1 iff [s == 0] == [a == 0]."""
    phi = np.zeros((S, A, 10))
    for s in range(S):
        for a in range(A):
            same = float((s == 0) == (a == 0))
            phi[s, a, :8] = _binary8(a)
            phi[s, a, 8:] = (same, 1.0 - same)
    return phi


def build_appendix_f_mdp(H: int, seed) -> LinearMDP:
    """Two states, 100 actions, d = 10; transitions and rewards depend on
    per-step uniform draws alpha_{h,1}, alpha_{h,2}, r_h."""
    if H < 1:
        raise ValueError("H must be >= 1")
    rng = as_rng(seed)
    alpha = rng.uniform(size=(H, 2))
    r = rng.uniform(size=H)
    nu = np.zeros((H, 2, 10))
    nu[:, 0, 8:] = alpha
    nu[:, 1, 8:] = 1.0 - alpha
    theta = np.stack(
        [r / 8, 0 * r, r / 8, 0.5 - r / 2, r / 8, 0 * r, r / 8, 0 * r, r / 2, 0.5 - r / 2], axis=1
    )
    return LinearMDP(appendix_f_features(), nu, theta, np.array([0.5, 0.5]))


def behavior_policy_appendix_f(p: float = 0.6, H: int = 20, S: int = 2, A: int = 100) -> Policy:
    """Action 0 with probability p, every other action with (1-p)/(A-1)."""
    if not 0 < p < 1:
        raise ValueError("p must lie in (0, 1)")
    row = np.full(A, (1.0 - p) / (A - 1))
    row[0] = p
    return Policy(np.broadcast_to(row, (H, S, A)).copy())


@dataclass
class Environment:
    name: str
    mdp: TabularMDP
    phi: np.ndarray
    behavior: Policy
    v_star: float = field(init=False)

    def __post_init__(self):
        self.v_star = solve_optimal(self.mdp).v
        self._kappa: float | None = None
        self._warned = False

    @property
    def H(self) -> int:
        return self.mdp.H

    @property
    def kappa(self) -> float:
        """Feature coverage of the behavior policy (computed once)."""
        if self._kappa is None:
            self._kappa = feature_coverage(self.mdp, self.phi, self.behavior)
        return self._kappa


def one_hot_features(S: int, A: int) -> np.ndarray:
    return np.eye(S * A).reshape(S, A, S * A)


def make_environment(spec: dict) -> Environment:
    """Build an environment from ``{"kind": "appendix_f" | "random_tabular" | "file", ...}``.

    Tabular environments use one-hot features for the linear learners and an
    epsilon-greedy (0.3) version of the optimal policy as behavior policy.
    """
    kind = spec.get("kind", "appendix_f")
    seed = spec.get("seed", 0)
    if kind == "appendix_f":
        H = spec.get("H", 20)
        lin = build_appendix_f_mdp(H, seed)
        return Environment(f"appendix_f(H={H},seed={seed})", tabularize(lin), lin.phi, behavior_policy_appendix_f(spec.get("p", 0.6), H))
    if kind == "random_tabular":
        S, A, H = spec.get("S", 3), spec.get("A", 2), spec.get("H", 5)
        mdp = random_tabular_mdp(S, A, H, seed)
        mu = epsilon_greedy(solve_optimal(mdp).policy, spec.get("eps", 0.3))
        return Environment(f"random_tabular(S={S},A={A},H={H},seed={seed})", mdp, one_hot_features(S, A), mu)
    if kind == "file":
        mdp = load_mdp(spec["path"])
        if isinstance(mdp, LinearMDP):
            phi, mdp = mdp.phi, tabularize(mdp)
        else:
            phi = one_hot_features(mdp.S, mdp.A)
        return Environment(Path(spec["path"]).stem, mdp, phi, Policy.uniform(mdp.H, mdp.S, mdp.A))
    raise ValueError(f"unknown environment kind {kind!r}")


def derive_seed(*keys: int) -> int:
    """Mix integer keys into a 63-bit seed (numpy SeedSequence hashing)."""
    return int(np.random.SeedSequence([int(k) for k in keys]).generate_state(1, np.uint64)[0] >> 1)


def alg_key(alg: str) -> int:
    return zlib.crc32(alg.encode())


@dataclass
class ExperimentConfig:
    env: dict = field(default_factory=lambda: {"kind": "appendix_f", "H": 20, "seed": 0})
    algorithms: list[str] = field(default_factory=lambda: ["pevi", "vapvi", "dp-vapvi"])
    K_grid: list[int] = field(default_factory=lambda: list(DEFAULT_K_GRID))
    rho_grid: list[float] = field(default_factory=lambda: list(DEFAULT_RHO_GRID))
    seeds: int = 5
    master_seed: int = 0
    vapvi: dict = field(default_factory=dict)
    apvi: dict = field(default_factory=dict)
    timing: bool = False
    jobs: int = 1
    csv_path: str | None = None
    svg_path: str | None = None

    def __post_init__(self):
        if not self.K_grid or not self.algorithms:
            raise ValueError("grids must be non-empty")
        if self.seeds < 1:
            raise ValueError("seeds must be >= 1")
        unknown = set(self.algorithms) - set(ALGORITHMS)
        if unknown:
            raise ValueError(f"unknown algorithms {sorted(unknown)}")
        if any(a in PRIVATE_ALGS for a in self.algorithms) and not self.rho_grid:
            raise ValueError("private algorithms need a non-empty rho grid")

    @classmethod
    def from_dict(cls, obj: dict) -> "ExperimentConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(obj) - names
        if unknown:
            raise ValueError(f"unknown config keys {sorted(unknown)}")
        return cls(**obj)


@dataclass
class ResultRow:
    alg: str
    env: str
    H: int
    K: int
    rho: float
    seed: int
    subopt: float
    runtime_ms: float
    error: str | None = None


def _warn_coverage(env: Environment, lam: float) -> None:
    if lam >= env.kappa and not env._warned:
        env._warned = True
        log.warning("ridge parameter %g is not below the feature coverage %.3g", lam, env.kappa)


def run_learner(alg: str, env: Environment, K: int, rho: float, data_seed: int, noise_seed: int, cfg: ExperimentConfig) -> LearnedPolicy:
    """Sample a dataset, run one learner and attach environment-side diagnostics."""
    data = sample_dataset(env.mdp, env.behavior, K, data_seed)
    S, A, H = env.mdp.S, env.mdp.A, env.H
    if alg in ("vapvi", "dp-vapvi", "pevi"):
        vcfg = VapviConfig(**cfg.vapvi)
        kappa = env.kappa
        _warn_coverage(env, vcfg.lam)
        if vcfg.pessimism_mode == "theory" and vcfg.kappa is None:
            vcfg = dataclasses.replace(vcfg, kappa=kappa)
        if alg == "pevi":
            learned = pevi(data, env.phi, vcfg)
        else:
            first, second = split_dataset(data) if vcfg.split_data else (data, data)
            if alg == "vapvi":
                learned = vapvi(first, second, env.phi, vcfg)
            else:
                learned = dp_vapvi(first, second, env.phi, dataclasses.replace(vcfg, rho=rho), noise_seed)
        learned.diagnostics["kappa_env"] = kappa
        if kappa > 0:
            L, E = learned.diagnostics.get("L", 0.0), learned.diagnostics.get("E", 0.0)
            learned.diagnostics.update(sample_size_gates(H, env.phi.shape[2], kappa, vcfg.lam, vcfg.delta, L, E))
        return learned
    acfg = ApviConfig(**cfg.apvi)
    if alg == "apvi":
        learned = apvi(data, S, A, H, env.mdp.r, acfg)
    else:
        learned = dp_apvi(data, S, A, H, env.mdp.r, dataclasses.replace(acfg, rho=rho), noise_seed)
    d_m = occupancy(env.mdp, env.behavior).min_positive()
    learned.diagnostics["d_m"] = d_m
    learned.diagnostics["coverage_threshold"] = coverage_threshold(H, learned.diagnostics["E"], d_m, learned.diagnostics["iota"])
    return learned


def suboptimality(env: Environment, learned: LearnedPolicy) -> float:
    return env.v_star - exact_policy_value(env.mdp, learned.policy).v


def _cells(cfg: ExperimentConfig):
    for alg in cfg.algorithms:
        rhos = cfg.rho_grid if alg in PRIVATE_ALGS else [math.inf]
        for rho in rhos:
            for K in cfg.K_grid:
                for rep in range(cfg.seeds):
                    yield alg, float(rho), int(K), rep


def _run_cell(args) -> ResultRow:
    cfg, env, alg, rho, K, rep = args
    # Data depends only on (master, K, rep) so all algorithms see the same datasets.
    data_seed = derive_seed(cfg.master_seed, K, rep)
    noise_seed = derive_seed(cfg.master_seed, alg_key(alg), K, rep, int(rho * 1000) if math.isfinite(rho) else 0)
    start = time.perf_counter()
    try:
        learned = run_learner(alg, env, K, rho, data_seed, noise_seed, cfg)
        gap = suboptimality(env, learned)
        error = None
    except Exception as exc:  # recorded per cell; the sweep continues
        log.warning("cell %s K=%d rho=%s rep=%d failed: %s", alg, K, rho, rep, exc)
        gap, error = math.nan, f"{type(exc).__name__}: {exc}"
    runtime = (time.perf_counter() - start) * 1000.0 if cfg.timing else 0.0
    return ResultRow(alg, env.name, env.H, K, rho, rep, gap, runtime, error)


def _row_key(row: ResultRow):
    return (row.alg, row.rho, row.K, row.seed)


def run_sweep(cfg: ExperimentConfig) -> list[ResultRow]:
    env = make_environment(cfg.env)
    if any(alg in ("vapvi", "dp-vapvi", "pevi") for alg in cfg.algorithms):
        # warn here so worker processes inherit the flag
        _warn_coverage(env, VapviConfig(**cfg.vapvi).lam)
    tasks = [(cfg, env, *cell) for cell in _cells(cfg)]
    if cfg.jobs > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            rows = list(pool.map(_run_cell, tasks, chunksize=max(1, len(tasks) // (4 * cfg.jobs))))
    else:
        rows = [_run_cell(t) for t in tasks]
    return sorted(rows, key=_row_key)


def mean_subopt(rows: list[ResultRow]) -> dict[tuple[str, float, int], float]:
    """Mean suboptimality per (alg, rho, K) over the successful repetitions."""
    groups: dict[tuple[str, float, int], list[float]] = {}
    for row in rows:
        if row.error is None:
            groups.setdefault((row.alg, row.rho, row.K), []).append(row.subopt)
    return {k: float(np.mean(v)) for k, v in groups.items()}


def _fmt(x: float) -> str:
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return f"{x:.6g}"


def write_csv(rows: list[ResultRow], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for r in rows:
            writer.writerow([r.alg, r.env, r.H, r.K, _fmt(r.rho), r.seed, _fmt(r.subopt), _fmt(r.runtime_ms)])


def read_csv(path) -> list[ResultRow]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != CSV_HEADER:
            raise ValueError(f"unexpected CSV header {reader.fieldnames}")
        rows = []
        for rec in reader:
            subopt = float(rec["subopt"])
            rows.append(
                ResultRow(
                    rec["alg"], rec["env"], int(rec["H"]), int(rec["K"]), float(rec["rho"]), int(rec["seed"]),
                    subopt, float(rec["runtime_ms"]), None if math.isfinite(subopt) else "failed",
                )
            )
    return rows


def series_label(alg: str, rho: float) -> str:
    return alg if math.isinf(rho) else f"{alg} (rho={rho:g})"


PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"]


def write_svg(rows: list[ResultRow], path, title: str = "") -> None:
    """Mean suboptimality against K (log scale), one polyline per (alg, rho)."""
    means = mean_subopt(rows)
    if not means:
        raise ValueError("no successful rows to plot")
    series: dict[tuple[str, float], list[tuple[int, float]]] = {}
    for (alg, rho, K), m in sorted(means.items()):
        series.setdefault((alg, rho), []).append((K, m))
    Ks = sorted({K for _, _, K in means})
    ys = list(means.values())
    width, height, left, right, top, bottom = 640, 420, 70, 170, 30, 50
    pw, ph = width - left - right, height - top - bottom
    kmin, kmax = math.log(max(Ks[0], 1)), math.log(max(Ks[-1], 1))
    ymax = max(max(ys), 1e-12) * 1.05

    def px(K):
        return left + (0.5 if kmax == kmin else (math.log(max(K, 1)) - kmin) / (kmax - kmin)) * pw

    def py(y):
        return top + ph - max(y, 0.0) / ymax * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        '<rect width="100%" height="100%" fill="white"/>',
        f'<line x1="{left}" y1="{top + ph}" x2="{left + pw}" y2="{top + ph}" stroke="black"/>',
        f'<line x1="{left}" y1="{top}" x2="{left}" y2="{top + ph}" stroke="black"/>',
        f'<text x="{left + pw / 2}" y="{height - 10}" text-anchor="middle" font-size="13">number of episodes K</text>',
        f'<text x="18" y="{top + ph / 2}" text-anchor="middle" font-size="13" '
        f'transform="rotate(-90 18 {top + ph / 2})">suboptimality v* - v(pi)</text>',
    ]
    if title:
        out.append(f'<text x="{left + pw / 2}" y="18" text-anchor="middle" font-size="13">{title}</text>')
    for K in Ks:
        out.append(f'<text x="{px(K):.1f}" y="{top + ph + 16}" text-anchor="middle" font-size="10">{K}</text>')
    for frac in (0.0, 0.5, 1.0):
        y = ymax * frac
        out.append(f'<text x="{left - 6}" y="{py(y) + 4:.1f}" text-anchor="end" font-size="10">{y:.3g}</text>')
    for i, ((alg, rho), pts) in enumerate(series.items()):
        color = PALETTE[i % len(PALETTE)]
        coords = " ".join(f"{px(K):.2f},{py(m):.2f}" for K, m in pts)
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="2" points="{coords}"/>')
        ly = top + 14 + 18 * i
        out.append(f'<line x1="{left + pw + 10}" y1="{ly - 4}" x2="{left + pw + 30}" y2="{ly - 4}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{left + pw + 35}" y="{ly}" font-size="11">{series_label(alg, rho)}</text>')
    out.append("</svg>")
    Path(path).write_text("\n".join(out) + "\n")


def emit_outputs(rows: list[ResultRow], csv_path=None, svg_path=None) -> None:
    if not rows:
        raise ValueError("no rows to emit")
    if csv_path:
        write_csv(rows, csv_path)
    if svg_path:
        write_svg(rows, svg_path)
