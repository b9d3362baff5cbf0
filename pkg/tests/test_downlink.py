import numpy as np
import pytest

from earl.downlink import (
    InfeasibleActivationError,
    activation_mask,
    check_activation,
    evaluate,
    fractional_power_allocation,
    mmse_precoder,
    precode,
)
from earl.scenario import ConfigurationError


def test_activation_vector_validation(small_scenario):
    L, N = small_scenario.n_ru, small_scenario.n_ant
    ok = check_activation(np.full(L, N), L, N)
    assert ok.dtype.kind == "i"
    with pytest.raises(ConfigurationError):
        check_activation(np.full(L, N + 1), L, N)
    with pytest.raises(ConfigurationError):
        check_activation(np.array([-1] * L), L, N)
    with pytest.raises(ConfigurationError):
        check_activation(np.full(L + 1, N), L, N)


def test_activation_mask_prefix_rule():
    mask = activation_mask(np.array([2, 0, 1]), n_ant=2)
    assert mask.tolist() == [1.0, 1.0, 0.0, 0.0, 1.0, 0.0]


def test_precoder_zero_on_masked_antennas(small_scenario, small_channels):
    n = np.array([2, 1, 0, 2])
    sol = precode(small_channels, n, small_scenario)
    mask = activation_mask(n, small_scenario.n_ant)
    assert np.abs(sol.W[:, mask == 0.0, :]).max() == 0.0
    assert np.abs(sol.W[:, mask == 1.0, :]).min() > 0.0


def test_precoder_matches_reduced_system(small_scenario, small_channels):
    n = np.array([2, 0, 1, 2])
    mask = activation_mask(n, small_scenario.n_ant)
    act = np.flatnonzero(mask)
    p = small_scenario.pilot_power_w
    s2 = small_scenario.noise_power_w
    W = mmse_precoder(small_channels.H_hat[0], small_channels.C, mask, p, s2)
    # independent reduction: solve the dense system on active rows only
    Hh = small_channels.H_hat[0][act]
    Cd = np.zeros((len(act), len(act)), dtype=complex)
    LN = small_scenario.n_ru * small_scenario.n_ant
    Cfull = np.zeros((LN, LN), dtype=complex)
    Nn = small_scenario.n_ant
    for k in range(small_scenario.n_ue):
        for l in range(small_scenario.n_ru):
            Cfull[l * Nn:(l + 1) * Nn, l * Nn:(l + 1) * Nn] += small_channels.C[k, l]
    Cd = Cfull[np.ix_(act, act)]
    A = p * (Hh @ Hh.conj().T) + p * Cd + s2 * np.eye(len(act))
    Wref = p * np.linalg.solve(A, Hh)
    assert np.allclose(W[act], Wref, rtol=1e-10, atol=0)


def test_fractional_allocation_shares_budget():
    beta = np.array([[1e-10, 2e-10], [5e-11, 1e-11]])
    omega = np.array([0.6, 0.7])
    rho = fractional_power_allocation(beta, omega, 0.2, -0.5, 0.5)
    assert rho.shape == (2,)
    assert (rho > 0).all()
    # worst-case RU load: sum_k omega_k * rho_k <= rho_max by construction
    assert float((omega * rho).sum()) <= 0.2 + 1e-12


def test_fractional_allocation_rejects_degenerate_stats():
    with pytest.raises(InfeasibleActivationError):
        fractional_power_allocation(np.ones((2, 2)), np.array([0.0, 1.0]), 0.2, -0.5, 0.5)


def test_per_ru_radiated_power_within_budget(small_scenario, small_channels):
    sol = precode(small_channels, np.array([2, 2, 2, 2]), small_scenario)
    assert sol.rho_ru.shape == (small_scenario.n_ru,)
    assert sol.rho_ru.max() <= small_scenario.rho_max_w + 1e-12
    assert sol.rho.sum() == pytest.approx(sol.rho_ru.sum(), rel=1e-12)


def test_evaluation_produces_consistent_rates(small_scenario, small_channels):
    full = np.full(small_scenario.n_ru, small_scenario.n_ant)
    res = evaluate(small_channels, full, small_scenario, se_min=1.0)
    assert res.se.shape == (small_scenario.n_ue,)
    assert (res.se > 0).all()
    assert np.allclose(
        res.se, small_scenario.prelog * np.log2(1.0 + res.sinr)
    )
    assert res.r_vio == float(np.mean(res.se < 1.0))
    assert res.power.p_total_w > 0


def test_fewer_antennas_never_helps(small_scenario, small_channels):
    full = evaluate(small_channels, np.array([2, 2, 2, 2]), small_scenario, 1.0)
    half = evaluate(small_channels, np.array([1, 1, 1, 1]), small_scenario, 1.0)
    assert half.se.sum() < full.se.sum()
    assert half.power.p_total_w < full.power.p_total_w


def test_all_zero_activation_is_total_outage(small_scenario, small_channels):
    res = evaluate(small_channels, np.zeros(4, dtype=int), small_scenario, 1.0)
    assert np.all(res.se == 0.0)
    assert res.r_vio == 1.0
    assert res.power.p_ru_radio_w == 0.0
