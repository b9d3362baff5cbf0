import numpy as np
import pytest

from earl.channel import (
    assign_pilots,
    draw_true_channels,
    dump_channel_set,
    generate_channel_set,
    load_channel_set,
    mmse_estimate,
)
from earl.scenario import Scenario, build_deployment


def test_orthogonal_pilots_when_they_fit():
    beta = np.random.default_rng(0).uniform(1e-14, 1e-9, size=(5, 4))
    pilots = assign_pilots(beta, tau_p=6)
    assert sorted(pilots.tolist()) == [0, 1, 2, 3, 4]


def test_pilot_reuse_prefers_lightly_loaded_pilot():
    # extra UEs join the pilot whose current members have the least summed
    # gain, so everyone piles onto quiet UE 1 until its load catches up
    beta = np.array(
        [
            [2e-9, 1e-12],
            [1e-13, 1e-13],
            [1e-10, 1e-10],
            [1e-10, 1e-10],
        ]
    )
    pilots = assign_pilots(beta, tau_p=2)
    assert pilots.tolist() == [0, 1, 1, 1]


def test_pilot_assignment_fills_all_pilots_first():
    beta = np.random.default_rng(1).uniform(1e-14, 1e-9, size=(7, 3))
    pilots = assign_pilots(beta, tau_p=4)
    assert set(pilots[:4].tolist()) == {0, 1, 2, 3}
    assert pilots.max() < 4


def test_true_channel_covariance_scales_with_r():
    rng_R = 2e-10 * np.eye(3)
    R = np.broadcast_to(rng_R, (1, 1, 3, 3))
    H = draw_true_channels(R, 20000, seed=5)
    emp = np.einsum("sn,sm->nm", H[:, :, 0], H[:, :, 0].conj()) / 20000
    assert np.linalg.norm(emp - rng_R) / np.linalg.norm(rng_R) < 0.05


def test_estimate_plus_error_covariance_recovers_r(small_scenario, small_channels):
    total = small_channels.B + small_channels.C
    err = np.abs(total - small_channels.R).max(axis=(-2, -1))
    scale = np.abs(small_channels.R).max(axis=(-2, -1))
    assert (err <= 1e-9 * scale).all()


def test_estimates_have_expected_shapes(small_scenario, small_channels):
    S = small_channels.n_realizations
    LN = small_scenario.n_ru * small_scenario.n_ant
    K = small_scenario.n_ue
    assert small_channels.H.shape == (S, LN, K)
    assert small_channels.H_hat.shape == (S, LN, K)
    assert small_channels.B.shape == (K, small_scenario.n_ru, small_scenario.n_ant, small_scenario.n_ant)


def test_estimation_noise_is_reproducible(small_scenario):
    dep = build_deployment(small_scenario, seed=31)
    a = generate_channel_set(small_scenario, dep, 8, 77)
    b = generate_channel_set(small_scenario, dep, 8, 77)
    c = generate_channel_set(small_scenario, dep, 8, 78)
    assert np.array_equal(a.H, b.H)
    assert np.array_equal(a.H_hat, b.H_hat)
    assert not np.array_equal(a.H_hat, c.H_hat)


def test_mmse_estimate_shrinks_toward_prior():
    # with zero pilot power the estimate must be exactly zero (pure prior)
    R = np.broadcast_to(1e-10 * np.eye(2), (1, 1, 2, 2))
    H = draw_true_channels(R, 4, seed=0)
    H_hat, B, C = mmse_estimate(R, np.array([0]), 0.0, 4, 1e-13, H, seed=1)
    assert np.abs(H_hat).max() == 0.0
    assert np.allclose(C[0, 0], R[0, 0])
    assert np.abs(B).max() == 0.0


def test_channel_set_roundtrip(tmp_path, small_channels):
    path = tmp_path / "set.bin"
    dump_channel_set(small_channels, path)
    back = load_channel_set(path)
    assert np.array_equal(back.pilot_index, small_channels.pilot_index)
    assert np.allclose(back.beta, small_channels.beta)
    # arrays are stored complex64: exact at that precision
    assert np.array_equal(back.H, small_channels.H.astype(np.complex64))
    assert np.array_equal(back.H_hat, small_channels.H_hat.astype(np.complex64))


def test_roundtrip_rejects_foreign_file(tmp_path):
    path = tmp_path / "junk.bin"
    path.write_bytes(b"not a channel file")
    with pytest.raises(ValueError):
        load_channel_set(path)
