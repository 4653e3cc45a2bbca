import math
import re

import numpy as np
import pytest

from dporl.harness import (
    CSV_HEADER,
    ExperimentConfig,
    ResultRow,
    appendix_f_features,
    behavior_policy_appendix_f,
    build_appendix_f_mdp,
    derive_seed,
    emit_outputs,
    make_environment,
    read_csv,
    run_learner,
    run_sweep,
    write_csv,
    write_svg,
)
from dporl.mdp_core import sample_dataset, solve_optimal, tabularize, validate_linear_mdp


def small_config(**kw):
    base = dict(
        env={"kind": "appendix_f", "H": 5, "seed": 0},
        algorithms=["vapvi", "dp-vapvi", "pevi"],
        K_grid=[5, 50],
        rho_grid=[1.0],
        seeds=2,
    )
    base.update(kw)
    return ExperimentConfig(**base)


def test_feature_layout():
    phi = appendix_f_features()
    assert phi.shape == (2, 100, 10)
    assert tuple(phi[0, 0, 8:]) == (1.0, 0.0)
    assert tuple(phi[1, 0, 8:]) == (0.0, 1.0)
    assert tuple(phi[0, 7, 8:]) == (0.0, 1.0)
    assert tuple(phi[1, 7, 8:]) == (1.0, 0.0)
    assert phi[0, 5, :8].sum() == 2
    assert int("".join(str(int(b)) for b in phi[0, 5, :8]), 2) == 5


@pytest.mark.parametrize("seed", [0, 1, 123])
def test_environment_is_valid(seed):
    lin = build_appendix_f_mdp(20, seed)
    assert validate_linear_mdp(lin).ok
    np.testing.assert_array_equal(lin.d1, [0.5, 0.5])
    r = lin.theta[:, 0] * 8
    np.testing.assert_allclose(lin.theta[:, 3], 0.5 - r / 2)
    np.testing.assert_allclose(lin.nu[:, 0, 8:] + lin.nu[:, 1, 8:], 1.0)


def test_reference_optimal_value():
    mdp = tabularize(build_appendix_f_mdp(20, 0))
    assert solve_optimal(mdp).v == pytest.approx(14.1509, abs=1e-4)


def test_behavior_policy():
    mu = behavior_policy_appendix_f(0.6, 4)
    assert mu.probs[2, 1, 0] == 0.6
    np.testing.assert_allclose(mu.probs[:, :, 1:], 0.4 / 99)
    assert (np.abs(mu.probs.sum(axis=-1) - 1) <= 1e-15).all()
    with pytest.raises(ValueError):
        behavior_policy_appendix_f(1.0)


def test_behavior_action_frequency():
    env = make_environment({"kind": "appendix_f", "H": 1})
    data = sample_dataset(env.mdp, env.behavior, 100_000, 5)
    freq = (data.actions[:, 0] == 0).mean()
    assert abs(freq - 0.6) <= 3 * math.sqrt(0.6 * 0.4 / 100_000)


def test_vapvi_single_cell_trend():
    cfg = small_config(env={"kind": "appendix_f", "H": 20, "seed": 0}, algorithms=["vapvi"], K_grid=[5, 1000], seeds=1)
    rows = {r.K: r.subopt for r in run_sweep(cfg)}
    assert rows[1000] < rows[5]


def test_sweep_rows_valid_and_deterministic(tmp_path):
    cfg = small_config()
    rows = run_sweep(cfg)
    assert len(rows) == (2 + 1) * 2 * 2
    assert all(r.error is None and r.subopt >= -1e-9 and math.isfinite(r.subopt) for r in rows)
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    write_csv(rows, a)
    write_csv(run_sweep(cfg), b)
    assert a.read_bytes() == b.read_bytes()


def test_parallel_sweep_matches_serial(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    write_csv(run_sweep(small_config(jobs=1)), a)
    write_csv(run_sweep(small_config(jobs=3)), b)
    assert a.read_bytes() == b.read_bytes()


def test_datasets_shared_across_algorithms():
    assert derive_seed(0, 50, 1) == derive_seed(0, 50, 1)
    assert derive_seed(0, 50, 1) != derive_seed(0, 50, 2)


def test_random_tabular_sweep():
    cfg = ExperimentConfig(
        env={"kind": "random_tabular", "S": 3, "A": 2, "H": 3, "seed": 1},
        algorithms=["apvi", "dp-apvi"],
        K_grid=[20],
        rho_grid=[1.0],
        seeds=1,
    )
    rows = run_sweep(cfg)
    assert [r.alg for r in rows] == ["apvi", "dp-apvi"]
    assert all(r.subopt >= -1e-9 for r in rows)


def test_failing_cell_recorded():
    cfg = small_config(algorithms=["vapvi"], vapvi={"pessimism_mode": "theory", "kappa": -1.0}, seeds=1, K_grid=[5])
    (row,) = run_sweep(cfg)
    assert row.error is not None and math.isnan(row.subopt)


def test_config_validation():
    with pytest.raises(ValueError):
        ExperimentConfig(K_grid=[])
    with pytest.raises(ValueError):
        ExperimentConfig(seeds=0)
    with pytest.raises(ValueError):
        ExperimentConfig(algorithms=["nope"])
    with pytest.raises(ValueError):
        ExperimentConfig.from_dict({"bogus": 1})


def test_single_row_csv(tmp_path):
    path = tmp_path / "one.csv"
    write_csv([ResultRow("vapvi", "env", 20, 5, math.inf, 0, 1.234567891, 0.0)], path)
    lines = path.read_text().splitlines()
    assert lines == [",".join(CSV_HEADER), "vapvi,env,20,5,inf,0,1.23457,0"]


def test_csv_round_trip(tmp_path):
    rows = run_sweep(small_config(seeds=1))
    path = tmp_path / "r.csv"
    write_csv(rows, path)
    back = read_csv(path)
    assert [(r.alg, r.K, r.rho, r.seed) for r in back] == [(r.alg, r.K, r.rho, r.seed) for r in rows]
    for x, y in zip(back, rows):
        assert x.subopt == pytest.approx(y.subopt, rel=1e-5, abs=1e-9)


def test_svg_one_polyline_per_series(tmp_path):
    rows = run_sweep(small_config(rho_grid=[1.0, 10.0], seeds=1))
    path = tmp_path / "p.svg"
    write_svg(rows, path)
    text = path.read_text()
    assert len(re.findall(r"<polyline\b", text)) == 4  # vapvi, pevi, dp-vapvi x 2 budgets
    assert "number of episodes K" in text and "suboptimality" in text


def test_emit_outputs_errors(tmp_path):
    with pytest.raises(ValueError):
        emit_outputs([], tmp_path / "x.csv")
    row = ResultRow("vapvi", "env", 2, 5, math.inf, 0, 0.5, 0.0)
    with pytest.raises(OSError):
        emit_outputs([row], tmp_path / "missing" / "x.csv")


def test_tabular_diagnostics_surface_coverage():
    env = make_environment({"kind": "random_tabular", "S": 3, "A": 2, "H": 3, "seed": 0})
    out = run_learner("dp-apvi", env, 100, 1.0, 1, 2, ExperimentConfig())
    assert out.diagnostics["d_m"] > 0
    assert out.diagnostics["coverage_threshold"] > 0
