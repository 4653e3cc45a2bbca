"""Command-line entry point: ``dporl {gen-env,run,sweep,plot}``."""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys

import numpy as np

from . import harness
from .fileio import save_mdp
from .mdp_core import random_tabular_mdp


def _env_spec(args) -> dict:
    if getattr(args, "env_file", None):
        return {"kind": "file", "path": args.env_file}
    seed = args.env_seed or 0
    if args.env == "appendix-f":
        return {"kind": "appendix_f", "H": args.H, "seed": seed, "p": args.p}
    return {"kind": "random_tabular", "S": args.S, "A": args.A, "H": args.H, "seed": seed}


def _add_env_args(p: argparse.ArgumentParser, with_file: bool = True) -> None:
    p.add_argument("--env", choices=["appendix-f", "random-tabular"], default="appendix-f")
    if with_file:
        p.add_argument("--env-file", help="environment JSON written by gen-env")
    p.add_argument("--H", type=int, default=20)
    p.add_argument("--S", type=int, default=3, help="states (random-tabular only)")
    p.add_argument("--A", type=int, default=2, help="actions (random-tabular only)")
    p.add_argument("--p", type=float, default=0.6, help="behavior probability of action 0 (appendix-f)")
    p.add_argument("--env-seed", type=int, default=None, help="environment seed (default 0; gen-env falls back to --seed)")


def _add_learner_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--delta", type=float, default=0.1)
    p.add_argument("--lam", type=float, default=1.0, help="ridge parameter (linear learners)")
    p.add_argument("--C", type=float, default=None, help="bonus multiplier (linear) / penalty multiplier (tabular)")
    p.add_argument("--c1", type=float, default=1.0)
    p.add_argument("--c2", type=float, default=1.0)
    p.add_argument("--c-D", dest="c_D", type=float, default=1.0)
    p.add_argument("--pevi-c", type=float, default=None)
    p.add_argument("--split-data", action="store_true")
    p.add_argument("--pessimism-mode", choices=["empirical", "theory"], default="empirical")
    p.add_argument("--C1", type=float, default=math.sqrt(2.0))
    p.add_argument("--C2", type=float, default=16.0)
    p.add_argument("--mechanism", choices=["gaussian", "laplace"], default="gaussian")


def _learner_dicts(args) -> tuple[dict, dict]:
    vapvi = {
        "delta": args.delta, "lam": args.lam, "c1": args.c1, "c2": args.c2, "c_D": args.c_D,
        "split_data": args.split_data, "pessimism_mode": args.pessimism_mode, "pevi_c": args.pevi_c,
    }
    if args.C is not None:
        vapvi["C"] = args.C
    apvi = {"delta": args.delta, "C1": args.C1, "C2": args.C2, "mechanism": args.mechanism, "C": args.C}
    return vapvi, apvi


def cmd_gen_env(args) -> int:
    if not args.out:
        raise SystemExit("gen-env needs --out")
    seed = args.seed if args.env_seed is None else args.env_seed
    if args.env == "appendix-f":
        mdp = harness.build_appendix_f_mdp(args.H, seed)
    else:
        mdp = random_tabular_mdp(args.S, args.A, args.H, seed)
    save_mdp(mdp, args.out)
    print(f"wrote {args.out}")
    return 0


def cmd_run(args) -> int:
    vapvi, apvi = _learner_dicts(args)
    cfg = harness.ExperimentConfig(
        env=_env_spec(args), algorithms=[args.alg], K_grid=[args.K], rho_grid=[args.rho],
        seeds=1, master_seed=args.seed, vapvi=vapvi, apvi=apvi,
    )
    env = harness.make_environment(cfg.env)
    rho = args.rho if args.alg in harness.PRIVATE_ALGS else math.inf
    if args.alg == "dp-apvi" and args.mechanism == "laplace":
        cfg.apvi["eps"], rho = args.rho, 0.0
    data_seed = harness.derive_seed(args.seed, args.K, 0)
    noise_seed = harness.derive_seed(args.seed, harness.alg_key(args.alg), args.K, 0)
    learned = harness.run_learner(args.alg, env, args.K, rho, data_seed, noise_seed, cfg)
    scalar_diag = {k: v for k, v in learned.diagnostics.items() if not isinstance(v, np.ndarray)}
    report = {
        "alg": args.alg, "env": env.name, "H": env.H, "K": args.K,
        "rho": "inf" if math.isinf(rho) else rho, "v_star": env.v_star,
        "subopt": harness.suboptimality(env, learned),
        "policy": learned.policy.actions.tolist(), "diagnostics": scalar_diag,
        "ledger": json.loads(learned.ledger.to_json()) if learned.ledger else None,
    }
    text = json.dumps(report, indent=2, default=float)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)
    return 0


def cmd_sweep(args) -> int:
    if args.config:
        with open(args.config) as fh:
            cfg = harness.ExperimentConfig.from_dict(json.load(fh))
        if args.jobs is not None:
            cfg.jobs = args.jobs
    else:
        vapvi, apvi = _learner_dicts(args)
        cfg = harness.ExperimentConfig(
            env=_env_spec(args), algorithms=args.algs, K_grid=args.K_grid, rho_grid=args.rho_grid,
            seeds=args.seeds, master_seed=args.seed, vapvi=vapvi, apvi=apvi,
            timing=args.timing, jobs=args.jobs or 1,
        )
    rows = harness.run_sweep(cfg)
    csv_path = args.out or cfg.csv_path or "results.csv"
    harness.emit_outputs(rows, csv_path, args.svg or cfg.svg_path)
    failed = sum(r.error is not None for r in rows)
    print(f"wrote {len(rows)} rows to {csv_path}" + (f" ({failed} failed cells)" if failed else ""))
    return 0


def cmd_plot(args) -> int:
    if not args.out:
        raise SystemExit("plot needs --out")
    harness.write_svg(harness.read_csv(args.csv), args.out, title=args.title)
    print(f"wrote {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="master seed")
    common.add_argument("--out", help="output path")
    common.add_argument("--jobs", type=int, default=None, help="worker processes for sweeps")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="dporl", description="Differentially private offline RL experiments.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-env", parents=[common], help="write an environment file")
    _add_env_args(p, with_file=False)
    p.set_defaults(func=cmd_gen_env)

    p = sub.add_parser("run", parents=[common], help="run one learner on one dataset")
    _add_env_args(p)
    _add_learner_args(p)
    p.add_argument("--alg", choices=harness.ALGORITHMS, required=True)
    p.add_argument("--K", type=int, default=1000, help="number of trajectories")
    p.add_argument("--rho", type=float, default=1.0, help="zCDP budget (epsilon with --mechanism laplace)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", parents=[common], help="run a K x rho x seed grid and write CSV (and SVG)")
    _add_env_args(p)
    _add_learner_args(p)
    p.add_argument("--config", help="JSON file with ExperimentConfig fields")
    p.add_argument("--algs", nargs="+", default=["pevi", "vapvi", "dp-vapvi"], choices=harness.ALGORITHMS)
    p.add_argument("--K-grid", type=int, nargs="+", default=list(harness.DEFAULT_K_GRID))
    p.add_argument("--rho-grid", type=float, nargs="+", default=list(harness.DEFAULT_RHO_GRID))
    p.add_argument("--seeds", type=int, default=5, help="repetitions per cell")
    p.add_argument("--timing", action="store_true", help="record wall-clock runtime (breaks byte-determinism)")
    p.add_argument("--svg", help="SVG path")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("plot", parents=[common], help="render a sweep CSV as SVG")
    p.add_argument("--csv", required=True)
    p.add_argument("--title", default="")
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s"
    )
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
