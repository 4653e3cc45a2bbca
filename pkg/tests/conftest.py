import os
import sys

import pytest

from dporl.harness import DEFAULT_K_GRID, ExperimentConfig, mean_subopt, run_sweep

SWEEP_RHOS = (1.0, 10.0)


@pytest.fixture(scope="session")
def appendix_f_means():
    """Mean suboptimality per (alg, rho, K) on the H = 20 synthetic linear MDP,
    5 seeds, empirical pessimism, default K grid."""
    cfg = ExperimentConfig(
        env={"kind": "appendix_f", "H": 20, "seed": 0},
        algorithms=["vapvi", "dp-vapvi", "pevi"],
        K_grid=list(DEFAULT_K_GRID),
        rho_grid=list(SWEEP_RHOS),
        seeds=5,
        master_seed=0,
        vapvi={"pessimism_mode": "empirical"},
        jobs=min(8, os.cpu_count() or 1),
    )
    rows = run_sweep(cfg)
    assert all(r.error is None for r in rows)
    return mean_subopt(rows)


def pytest_terminal_summary(terminalreporter):
    acceptance = sys.modules.get("test_acceptance")
    if acceptance is not None and acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in acceptance.RESULTS.values():
            terminalreporter.write_line(line)
