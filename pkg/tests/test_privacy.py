import math

import numpy as np
import pytest

from dporl.privacy import (
    NoiseMatrixSpec,
    PrivacyBudget,
    PrivacyLedger,
    compose_zcdp,
    gaussian_mechanism,
    gaussian_sigma,
    laplace_mechanism,
    laplace_scale,
    symmetric_noise_matrix,
    zcdp_to_approx_dp,
)


def test_count_release_variance():
    # each count family is released at half the total budget
    H, rho = 2, 1.0
    assert gaussian_sigma(math.sqrt(2 * H), rho / 2) ** 2 == pytest.approx(2 * H / rho)
    assert gaussian_sigma(math.sqrt(2 * H), rho / 2) ** 2 == pytest.approx(4.0)
    assert gaussian_sigma(math.sqrt(2 * H), rho) ** 2 == pytest.approx(H / rho)


def test_vanishing_budget_rejected():
    with pytest.raises(ValueError):
        gaussian_sigma(1.0, 5e-324)
    with pytest.raises(ValueError):
        symmetric_noise_matrix(NoiseMatrixSpec(2, 5e-324), 0)


def test_mechanisms_pass_through_at_zero_budget():
    x = np.arange(6.0)
    out, sigma = gaussian_mechanism(x, 1.0, 0.0, 0)
    assert sigma == 0.0 and (out == x).all()
    assert (laplace_mechanism(x, 3.0, 0.0, 0) == x).all()


def test_gaussian_empirical_variance():
    # sigma = 1 needs delta2^2 / (2 rho) = 1
    out, sigma = gaussian_mechanism(np.zeros(100_000), math.sqrt(2.0), 1.0, 0)
    assert sigma == pytest.approx(1.0)
    assert abs(out.var() - 1.0) <= 0.05


def test_laplace_scale_for_counts():
    assert laplace_scale(4 * 3, 2.0) == pytest.approx(6.0)


def test_laplace_mean_absolute_noise():
    out = laplace_mechanism(np.zeros(100_000), 1.0, 1.0, 0)
    assert abs(np.abs(out).mean() - 1.0) <= 0.05


def test_composition():
    rho = 0.7
    assert compose_zcdp([rho / 2, rho / 2]) == pytest.approx(rho)
    H = 20
    assert compose_zcdp([rho / (5 * H)] * (5 * H)) == pytest.approx(rho, rel=1e-15)
    assert compose_zcdp([]) == 0.0
    with pytest.raises(ValueError):
        compose_zcdp([-1.0])


def test_conversion_values():
    assert zcdp_to_approx_dp(1.0, math.exp(-1)) == 3.0
    assert zcdp_to_approx_dp(0.0, 0.3) == 0.0
    assert PrivacyBudget.zcdp(1.0).to_approx_dp(math.exp(-1)) == (3.0, math.exp(-1))


def test_conversion_monotone():
    rhos = np.linspace(0.01, 5, 30)
    deltas = np.linspace(1e-6, 0.9, 30)
    eps_rho = [zcdp_to_approx_dp(r, 0.1) for r in rhos]
    eps_delta = [zcdp_to_approx_dp(1.0, d) for d in deltas]
    assert all(a < b for a, b in zip(eps_rho, eps_rho[1:]))
    assert all(a > b for a, b in zip(eps_delta, eps_delta[1:]))


def test_conversion_rejects_bad_delta():
    with pytest.raises(ValueError):
        zcdp_to_approx_dp(1.0, 1.0)


def test_noise_matrix_zero():
    assert (symmetric_noise_matrix(NoiseMatrixSpec(4, 0.0, 0.0), 1) == 0).all()
    np.testing.assert_array_equal(symmetric_noise_matrix(NoiseMatrixSpec(3, 0.0, 2.0), 1), np.eye(3))


@pytest.mark.parametrize("seed", range(20))
def test_noise_matrix_exactly_symmetric(seed):
    K = symmetric_noise_matrix(NoiseMatrixSpec(7, 0.37, 1.3), seed)
    assert (K - K.T == 0).all()


def test_noise_matrix_moments():
    rho0, E, d = 0.5, 3.0, 3
    rng = np.random.default_rng(0)
    draws = np.stack([symmetric_noise_matrix(NoiseMatrixSpec(d, rho0, E), rng) for _ in range(10_000)])
    off = draws[:, 0, 1]
    diag = draws[:, 1, 1]
    assert abs(off.var() / (1 / (4 * rho0)) - 1) <= 0.05
    assert abs(diag.var() / (1 / (2 * rho0)) - 1) <= 0.05
    # diagonal mean is the shift E/2
    assert abs(diag.mean() - E / 2) <= 3 * math.sqrt(1 / (2 * rho0) / 10_000)


def test_ledger_exhaustion():
    ledger = PrivacyLedger(1.0)
    ledger.record("a", "gaussian", 1.0, 0.5, 1.0)
    with pytest.raises(AssertionError):
        ledger.check_exhausted()
    ledger.record("b", "gaussian", 1.0, 0.5, 1.0)
    ledger.check_exhausted()
    assert [r["name"] for r in ledger.to_records()] == ["a", "b"]
    assert '"total": 1.0' in ledger.to_json()


def test_budget_validation():
    with pytest.raises(ValueError):
        PrivacyBudget.zcdp(-1.0)
    with pytest.raises(ValueError):
        PrivacyBudget("approx", eps=1.0)
    assert PrivacyBudget.pure(0.0).noiseless
