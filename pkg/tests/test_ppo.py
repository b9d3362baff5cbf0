import numpy as np
import pytest

from earl.ppo import (
    AdamState,
    PolicyParams,
    TrainConfig,
    action_log_prob,
    adam_step,
    argmax_actions,
    compute_gae,
    forward,
    init_policy,
    kl_divergence,
    load_checkpoint,
    log_softmax,
    loss_and_grad,
    policy_forward,
    ppo_update,
    sample_actions,
    save_checkpoint,
    train,
)
from earl.rlenv import AntennaEnv
from earl.scenario import Scenario


def tiny_params(seed=0, obs_dim=6, n_ru=3, hidden=(8, 8)):
    return init_policy(obs_dim, n_ru, hidden, seed=seed)


def tiny_batch(params, rng, B=12):
    obs = rng.standard_normal((B, params.obs_dim))
    actions = rng.integers(0, 3, size=(B, params.n_ru))
    logits, values, _ = forward(params, obs)
    logp = action_log_prob(logits, actions)
    adv = rng.standard_normal(B)
    ret = values + rng.standard_normal(B)
    return obs, actions, logp, adv, ret


def test_forward_shapes_and_initial_uniformity():
    params = tiny_params()
    obs = np.random.default_rng(0).standard_normal((5, 6))
    logits, values, hs = forward(params, obs)
    assert logits.shape == (5, 3, 3)
    assert values.shape == (5,)
    # zero-initialized heads: exactly uniform policy and zero value
    assert np.abs(logits).max() == 0.0
    assert np.abs(values).max() == 0.0
    probs = np.exp(log_softmax(logits))
    assert np.allclose(probs, 1.0 / 3.0)


def test_log_softmax_normalizes():
    rng = np.random.default_rng(1)
    logits = rng.standard_normal((4, 2, 3)) * 9
    lp = log_softmax(logits)
    assert np.allclose(np.exp(lp).sum(axis=-1), 1.0)
    # invariant to per-head shifts
    lp2 = log_softmax(logits + 100.0)
    assert np.allclose(lp, lp2)


def test_action_log_prob_matches_manual():
    rng = np.random.default_rng(2)
    logits = rng.standard_normal((4, 2, 3))
    actions = rng.integers(0, 3, size=(4, 2))
    lp = action_log_prob(logits, actions)
    ref = log_softmax(logits)
    manual = np.array(
        [sum(ref[b, l, actions[b, l]] for l in range(2)) for b in range(4)]
    )
    assert np.allclose(lp, manual)


def test_sampling_follows_distribution():
    rng = np.random.default_rng(3)
    logits = np.zeros((1, 1, 3))
    logits[0, 0] = np.log([0.7, 0.2, 0.1])
    draws = np.array([sample_actions(rng, logits)[0] for _ in range(4000)])
    freq = np.bincount(draws, minlength=3) / 4000
    assert np.abs(freq - [0.7, 0.2, 0.1]).max() < 0.04
    assert argmax_actions(logits).tolist() == [0]


def test_policy_forward_single_observation():
    params = tiny_params()
    probs, value = policy_forward(params, np.zeros(6))
    assert probs.shape == (3, 3)
    assert np.allclose(probs.sum(axis=1), 1.0)
    assert value == 0.0


def test_gae_matches_definition_by_double_sum():
    rng = np.random.default_rng(4)
    T, gamma, lam = 9, 0.97, 0.9
    rewards = rng.standard_normal(T)
    values = rng.standard_normal(T)
    bootstrap = 0.37
    adv, ret = compute_gae(rewards, values, gamma, lam, bootstrap)
    vext = np.append(values, bootstrap)
    delta = rewards + gamma * vext[1:] - values
    for t in range(T):
        brute = sum((gamma * lam) ** (j - t) * delta[j] for j in range(t, T))
        assert abs(adv[t] - brute) < 1e-12
    assert np.allclose(ret, adv + values)


def test_gradients_match_finite_differences():
    cfg = TrainConfig()
    params = tiny_params(seed=5)
    # move off the zero-head point so every layer sees nonzero gradients
    warm = np.random.default_rng(6)
    for key in params.layers:
        params.layers[key] = params.layers[key] + 0.05 * warm.standard_normal(
            params.layers[key].shape
        )
    obs, actions, logp, adv, ret = tiny_batch(params, np.random.default_rng(7))
    logp = logp + 0.05 * np.random.default_rng(8).standard_normal(logp.shape)
    _, grads, _ = loss_and_grad(params, obs, actions, logp, adv, ret, cfg)
    rng = np.random.default_rng(9)
    h = 1e-6
    for key, arr in params.layers.items():
        flat = arr.ravel()
        for idx in rng.choice(flat.size, size=min(4, flat.size), replace=False):
            orig = flat[idx]
            flat[idx] = orig + h
            up, _, _ = loss_and_grad(params, obs, actions, logp, adv, ret, cfg)
            flat[idx] = orig - h
            dn, _, _ = loss_and_grad(params, obs, actions, logp, adv, ret, cfg)
            flat[idx] = orig
            fd = (up - dn) / (2 * h)
            an = grads[key].ravel()[idx]
            assert abs(fd - an) <= 1e-4 * max(1.0, abs(fd)), key


def test_loss_at_unity_ratio():
    cfg = TrainConfig()
    params = tiny_params(seed=10)
    obs, actions, logp, adv, ret = tiny_batch(params, np.random.default_rng(11))
    loss, _, diag = loss_and_grad(params, obs, actions, logp, adv, ret, cfg)
    # old_logp computed from the same params: ratio is exactly 1 everywhere
    assert diag["policy_loss"] == pytest.approx(-adv.mean(), rel=1e-12)
    assert diag["clip_frac"] == 0.0
    assert kl_divergence(params, obs, actions, logp) == pytest.approx(0.0, abs=1e-12)


def test_adam_step_matches_reference():
    params = tiny_params(seed=12)
    cfg = TrainConfig(learning_rate=1e-3)
    state = AdamState.for_params(params)
    grads = {k: np.ones_like(v) for k, v in params.layers.items()}
    before = {k: v.copy() for k, v in params.layers.items()}
    adam_step(params, grads, state, cfg)
    # first step with unit gradients: update = -lr * 1 / (1 + eps) elementwise
    expected = 1e-3 / (1.0 + 1e-8)
    for k in params.layers:
        delta = params.layers[k] - before[k]
        assert np.allclose(delta, -expected, rtol=1e-10)
    assert state.t == 1


def test_ppo_update_improves_surrogate_and_reports_kl():
    cfg = TrainConfig(learning_rate=3e-3, minibatch_size=8, update_epochs=4)
    params = tiny_params(seed=13)
    rng = np.random.default_rng(14)
    obs, actions, logp, adv, ret = tiny_batch(params, rng, B=32)
    batch = {
        "obs": obs,
        "actions": actions,
        "logp": logp,
        "advantages": adv,
        "returns": ret,
    }
    diag = ppo_update(params, batch, cfg, AdamState.for_params(params), rng)
    assert 1 <= diag["epochs"] <= 4
    assert np.isfinite(diag["kl"])
    assert not diag.get("aborted", False)


def test_ppo_update_aborts_on_nonfinite_loss():
    cfg = TrainConfig(minibatch_size=8)
    params = tiny_params(seed=15)
    rng = np.random.default_rng(16)
    obs, actions, logp, adv, ret = tiny_batch(params, rng, B=16)
    before = {k: v.copy() for k, v in params.layers.items()}
    batch = {
        "obs": obs,
        "actions": actions,
        "logp": logp,
        "advantages": np.full(16, np.nan),
        "returns": ret,
    }
    diag = ppo_update(params, batch, cfg, AdamState.for_params(params), rng)
    assert diag["aborted"]
    for k, v in params.layers.items():
        assert np.array_equal(v, before[k])


def test_checkpoint_roundtrip(tmp_path):
    params = tiny_params(seed=17)
    rng = np.random.default_rng(18)
    for k in params.layers:
        params.layers[k] = params.layers[k] + rng.standard_normal(params.layers[k].shape)
    path = tmp_path / "pol.bin"
    save_checkpoint(params, path)
    back = load_checkpoint(path)
    assert back.obs_dim == params.obs_dim
    assert back.n_ru == params.n_ru
    assert back.hidden == params.hidden
    for k in params.layers:
        assert np.array_equal(back.layers[k], params.layers[k].astype(np.float32))


def test_checkpoint_rejects_foreign_file(tmp_path):
    path = tmp_path / "junk.bin"
    path.write_bytes(b"\x00" * 64)
    with pytest.raises(ValueError):
        load_checkpoint(path)


def test_training_micro_run_learns_something(tmp_path):
    scn = Scenario(n_ru=1, n_ant=2, n_ue=1, area_side_m=100.0)
    env = AntennaEnv(scn, se_min=0.5, n_realizations=10)
    cfg = TrainConfig(batch_size=32, minibatch_size=16, learning_rate=1e-3)
    curve_path = tmp_path / "curve.csv"
    params, curve = train(env, cfg, total_steps=96, seed=0, curve_path=curve_path)
    assert len(curve) == 3
    assert curve_path.exists()
    header = curve_path.read_text().splitlines()[0]
    assert header == "epoch,mean_reward,mean_violation,lambda,kl"
    for v in params.layers.values():
        assert np.isfinite(v).all()
