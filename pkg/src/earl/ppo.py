"""Proximal policy optimization with exact, hand-written backpropagation.

The policy is a tanh MLP trunk shared by one independent 3-way softmax
head per O-RU (decrement / hold / increment) and a scalar value head.
Everything runs in float64 numpy: forward pass, clipped-surrogate loss,
entropy bonus, value regression, and the analytic gradients, which makes
the whole computation finite-difference checkable layer by layer.
"""
from __future__ import annotations

import csv
import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .scenario import ConfigurationError
from .rlenv import update_lambda

N_CHOICES = 3  # per-RU action alphabet {-1, 0, +1}


class TrainingDivergence(RuntimeError):
    """Raised when training collapses (mean reward below the abort floor)."""


@dataclass
class TrainConfig:
    """Hyperparameters of the PPO trainer."""

    learning_rate: float = 1e-4
    gamma: float = 0.999
    gae_lambda: float = 0.97
    clip_eps: float = 0.2
    batch_size: int = 256          # environment steps per policy update
    update_epochs: int = 10        # passes over the batch, gated by target_kl
    minibatch_size: int = 64
    target_kl: float = 0.025
    entropy_coef: float = 0.01
    value_coef: float = 0.5
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    hidden: tuple[int, ...] = (256, 256, 256)
    lambda0: float = 0.3           # initial violation weight
    eta: float = 0.05              # dual step size per batch
    r_star: float = 0.05           # violation target
    plateau_window: int = 10       # epochs of flat mean reward before stopping
    plateau_tol: float = 1e-3
    divergence_floor: float = -10.0


@dataclass
class PolicyParams:
    """MLP weights keyed by name: trunk W{i}/b{i}, policy Wp/bp, value Wv/bv."""

    obs_dim: int
    n_ru: int
    hidden: tuple[int, ...]
    layers: dict[str, np.ndarray] = field(default_factory=dict)

    def copy(self) -> "PolicyParams":
        return PolicyParams(
            obs_dim=self.obs_dim,
            n_ru=self.n_ru,
            hidden=tuple(self.hidden),
            layers={k: v.copy() for k, v in self.layers.items()},
        )


def init_policy(
    obs_dim: int, n_ru: int, hidden: tuple[int, ...] = (256, 256, 256), seed: int = 0
) -> PolicyParams:
    """Glorot-normal trunk; zero heads so the initial policy is uniform and
    the initial value estimate is 0."""
    rng = np.random.default_rng(seed)
    layers: dict[str, np.ndarray] = {}
    fan_in = obs_dim
    for i, width in enumerate(hidden):
        scale = math.sqrt(2.0 / (fan_in + width))
        layers[f"W{i}"] = rng.standard_normal((fan_in, width)) * scale
        layers[f"b{i}"] = np.zeros(width)
        fan_in = width
    layers["Wp"] = np.zeros((fan_in, n_ru * N_CHOICES))
    layers["bp"] = np.zeros(n_ru * N_CHOICES)
    layers["Wv"] = np.zeros((fan_in, 1))
    layers["bv"] = np.zeros(1)
    return PolicyParams(obs_dim=obs_dim, n_ru=n_ru, hidden=tuple(hidden), layers=layers)


def forward(params: PolicyParams, obs: np.ndarray):
    """Batched forward pass.

    obs is (B, obs_dim).  Returns (logits (B, L, 3), values (B,), cache),
    where cache holds the post-activation features needed by backward().
    """
    obs = np.atleast_2d(np.asarray(obs, dtype=float))
    hs = [obs]
    h = obs
    for i in range(len(params.hidden)):
        h = np.tanh(h @ params.layers[f"W{i}"] + params.layers[f"b{i}"])
        hs.append(h)
    logits = (h @ params.layers["Wp"] + params.layers["bp"]).reshape(
        -1, params.n_ru, N_CHOICES
    )
    values = (h @ params.layers["Wv"] + params.layers["bv"]).ravel()
    return logits, values, hs


def backward(params: PolicyParams, hs: list[np.ndarray], dlogits, dvalues):
    """Gradients of a scalar loss given dL/dlogits and dL/dvalues."""
    grads = {}
    B = hs[0].shape[0]
    dz_p = dlogits.reshape(B, params.n_ru * N_CHOICES)
    h_last = hs[-1]
    grads["Wp"] = h_last.T @ dz_p
    grads["bp"] = dz_p.sum(axis=0)
    dv = np.asarray(dvalues, dtype=float).reshape(B, 1)
    grads["Wv"] = h_last.T @ dv
    grads["bv"] = dv.sum(axis=0)
    dh = dz_p @ params.layers["Wp"].T + dv @ params.layers["Wv"].T
    for i in reversed(range(len(params.hidden))):
        dz = dh * (1.0 - hs[i + 1] ** 2)  # tanh'
        grads[f"W{i}"] = hs[i].T @ dz
        grads[f"b{i}"] = dz.sum(axis=0)
        dh = dz @ params.layers[f"W{i}"].T
    return grads


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def action_log_prob(logits: np.ndarray, actions: np.ndarray) -> np.ndarray:
    """(B,) joint log-probability of per-RU action indices (B, L) in 0..2."""
    logp = log_softmax(logits)
    B, L, _ = logits.shape
    picked = logp[np.arange(B)[:, None], np.arange(L)[None, :], actions]
    return picked.sum(axis=1)


def policy_forward(params: PolicyParams, observation: np.ndarray):
    """Single-observation inference: ((L, 3) action probabilities, value)."""
    logits, values, _ = forward(params, observation)
    probs = np.exp(log_softmax(logits[0]))
    return probs, float(values[0])


def sample_actions(rng: np.random.Generator, logits: np.ndarray) -> np.ndarray:
    """(L,) action indices sampled from one observation's (1, L, 3) logits."""
    probs = np.exp(log_softmax(logits))[0]
    u = rng.random(probs.shape[0])
    return (u[:, None] > probs.cumsum(axis=1)).sum(axis=1)


def argmax_actions(logits: np.ndarray) -> np.ndarray:
    return logits[0].argmax(axis=1)


def compute_gae(
    rewards: np.ndarray,
    values: np.ndarray,
    gamma: float,
    lam: float,
    bootstrap: float = 0.0,
) -> tuple[np.ndarray, np.ndarray]:
    """Generalized advantage estimation over one episode.

    Returns (advantages, returns) with returns = advantages + values; the
    bootstrap value stands in for V(s_T) after the final step.
    """
    rewards = np.asarray(rewards, dtype=float)
    values = np.asarray(values, dtype=float)
    T = rewards.shape[0]
    adv = np.empty(T)
    nxt = bootstrap
    acc = 0.0
    for t in range(T - 1, -1, -1):
        delta = rewards[t] + gamma * nxt - values[t]
        acc = delta + gamma * lam * acc
        adv[t] = acc
        nxt = values[t]
    return adv, adv + values


def loss_and_grad(
    params: PolicyParams,
    obs: np.ndarray,
    actions: np.ndarray,
    old_logp: np.ndarray,
    advantages: np.ndarray,
    returns: np.ndarray,
    cfg: TrainConfig,
):
    """Clipped-surrogate PPO loss with entropy bonus and value regression.

    Returns (loss, grads, diagnostics).  Gradients are exact derivatives of
    the returned scalar with respect to every parameter array.
    """
    B = obs.shape[0]
    logits, values, hs = forward(params, obs)
    logp_all = log_softmax(logits)
    probs = np.exp(logp_all)
    idx_b = np.arange(B)[:, None]
    idx_l = np.arange(params.n_ru)[None, :]
    new_logp = logp_all[idx_b, idx_l, actions].sum(axis=1)

    ratio = np.exp(new_logp - old_logp)
    surr1 = ratio * advantages
    surr2 = np.clip(ratio, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps) * advantages
    policy_loss = -np.minimum(surr1, surr2).mean()

    value_err = values - returns
    value_loss = 0.5 * (value_err**2).mean()

    ent_per_head = -(probs * logp_all).sum(axis=-1)  # (B, L)
    entropy = ent_per_head.sum(axis=1).mean()

    loss = policy_loss + cfg.value_coef * value_loss - cfg.entropy_coef * entropy

    # d(policy_loss)/d new_logp: zero where the clipped branch is active
    active = (surr1 <= surr2).astype(float)
    dlogp = -(advantages * ratio * active) / B

    onehot = np.zeros_like(probs)
    onehot[idx_b, idx_l, actions] = 1.0
    dlogits = dlogp[:, None, None] * (onehot - probs)
    # entropy bonus: d(-c_e * mean sum_l H_l)/dlogits
    dlogits += cfg.entropy_coef / B * probs * (logp_all + ent_per_head[:, :, None])
    dvalues = cfg.value_coef * value_err / B

    grads = backward(params, hs, dlogits, dvalues)
    diag = {
        "policy_loss": float(policy_loss),
        "value_loss": float(value_loss),
        "entropy": float(entropy),
        "clip_frac": float((surr2 < surr1).mean()),
    }
    return float(loss), grads, diag


def kl_divergence(params: PolicyParams, obs, actions, old_logp) -> float:
    """Estimated KL(old || new) over the batch from stored log-probabilities."""
    logits, _, _ = forward(params, obs)
    new_logp = action_log_prob(logits, actions)
    return float(np.mean(old_logp - new_logp))


@dataclass
class AdamState:
    """First/second moment accumulators for every parameter array."""

    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0

    @classmethod
    def for_params(cls, params: PolicyParams) -> "AdamState":
        return cls(
            m={k: np.zeros_like(a) for k, a in params.layers.items()},
            v={k: np.zeros_like(a) for k, a in params.layers.items()},
        )


def adam_step(params: PolicyParams, grads: dict, state: AdamState, cfg: TrainConfig):
    state.t += 1
    b1, b2 = cfg.adam_beta1, cfg.adam_beta2
    corr1 = 1.0 - b1**state.t
    corr2 = 1.0 - b2**state.t
    for k, g in grads.items():
        state.m[k] = b1 * state.m[k] + (1.0 - b1) * g
        state.v[k] = b2 * state.v[k] + (1.0 - b2) * g**2
        m_hat = state.m[k] / corr1
        v_hat = state.v[k] / corr2
        params.layers[k] -= cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.adam_eps)


def ppo_update(
    params: PolicyParams,
    batch: dict[str, np.ndarray],
    cfg: TrainConfig,
    adam: AdamState,
    rng: np.random.Generator,
) -> dict:
    """Run up to cfg.update_epochs minibatch passes, stopping once the
    estimated KL to the pre-update policy exceeds cfg.target_kl.

    A non-finite loss aborts the update and restores the parameters that
    entered it.
    """
    obs, actions = batch["obs"], batch["actions"]
    old_logp, returns = batch["logp"], batch["returns"]
    adv = batch["advantages"]
    adv = (adv - adv.mean()) / (adv.std() + 1e-8)
    B = obs.shape[0]
    snapshot = params.copy()
    diag: dict = {"kl": 0.0, "epochs": 0, "aborted": False}
    for epoch in range(cfg.update_epochs):
        order = rng.permutation(B)
        for start in range(0, B, cfg.minibatch_size):
            mb = order[start : start + cfg.minibatch_size]
            loss, grads, mb_diag = loss_and_grad(
                params, obs[mb], actions[mb], old_logp[mb], adv[mb], returns[mb], cfg
            )
            if not np.isfinite(loss):
                params.layers = snapshot.layers
                diag["aborted"] = True
                return diag
            adam_step(params, grads, adam, cfg)
            diag.update(mb_diag)
        diag["epochs"] = epoch + 1
        diag["kl"] = kl_divergence(params, obs, actions, old_logp)
        if diag["kl"] > cfg.target_kl:
            break
    return diag


def _collect_batch(env, params, cfg, episode_counter, ep_rng, action_rng):
    """Roll episodes until cfg.batch_size steps are gathered.

    Episodes alternate the open/close reset mode.  Per-episode seeds come
    from the trainer's seed stream, so collection is reproducible.
    """
    n_steps = 0
    obs_buf, act_buf, logp_buf, adv_buf, ret_buf = [], [], [], [], []
    vio, rewards_all = [], []
    episodes = 0
    while n_steps < cfg.batch_size:
        mode = "open" if episode_counter[0] % 2 == 0 else "close"
        seed = int(ep_rng.integers(0, 2**63 - 1))
        episode_counter[0] += 1
        obs = env.reset(mode=mode, episode_seed=seed)
        ep_obs, ep_act, ep_logp, ep_rew, ep_val = [], [], [], [], []
        done = False
        while not done:
            logits, values, _ = forward(params, obs[None, :])
            a = sample_actions(action_rng, logits)
            logp = float(action_log_prob(logits, a[None, :])[0])
            nxt, terms, done, info = env.step(a - 1)
            ep_obs.append(obs)
            ep_act.append(a)
            ep_logp.append(logp)
            ep_rew.append(terms.total)
            ep_val.append(float(values[0]))
            vio.append(info["r_vio"])
            obs = nxt
        adv, ret = compute_gae(
            np.array(ep_rew), np.array(ep_val), cfg.gamma, cfg.gae_lambda, bootstrap=0.0
        )
        obs_buf += ep_obs
        act_buf += ep_act
        logp_buf += ep_logp
        adv_buf.append(adv)
        ret_buf.append(ret)
        rewards_all += ep_rew
        episodes += 1
        n_steps += len(ep_rew)
    return {
        "obs": np.array(obs_buf),
        "actions": np.array(act_buf, dtype=int),
        "logp": np.array(logp_buf),
        "advantages": np.concatenate(adv_buf),
        "returns": np.concatenate(ret_buf),
        "mean_reward": float(np.mean(rewards_all)),
        "mean_violation": float(np.mean(vio)),
        "episodes": episodes,
    }


def train(
    env,
    cfg: TrainConfig,
    total_steps: int,
    seed: int = 0,
    params: PolicyParams | None = None,
    curve_path: str | Path | None = None,
    verbose: bool = False,
) -> tuple[PolicyParams, list[dict]]:
    """Train a policy on env for up to total_steps environment steps.

    Stops early when the per-step mean reward is flat (range below
    cfg.plateau_tol over cfg.plateau_window consecutive batches).  Raises
    TrainingDivergence if the mean reward falls below the abort floor.
    Returns the final parameters and the per-batch training curve.
    """
    ss = np.random.SeedSequence(seed)
    init_s, ep_s, act_s, shuf_s = [int(s.generate_state(1)[0]) for s in ss.spawn(4)]
    if params is None:
        params = init_policy(env.observation_size, env.n_actions, cfg.hidden, seed=init_s)
    ep_rng = np.random.default_rng(ep_s)
    action_rng = np.random.default_rng(act_s)
    shuffle_rng = np.random.default_rng(shuf_s)
    adam = AdamState.for_params(params)
    env.lam = cfg.lambda0
    curve: list[dict] = []
    episode_counter = [0]
    n_batches = max(1, total_steps // cfg.batch_size)
    recent: list[float] = []
    for batch_idx in range(n_batches):
        batch = _collect_batch(env, params, cfg, episode_counter, ep_rng, action_rng)
        diag = ppo_update(params, batch, cfg, adam, shuffle_rng)
        env.lam = update_lambda(env.lam, batch["mean_violation"], cfg.eta, cfg.r_star)
        row = {
            "epoch": batch_idx,
            "mean_reward": batch["mean_reward"],
            "mean_violation": batch["mean_violation"],
            "lambda": env.lam,
            "kl": diag["kl"],
        }
        curve.append(row)
        if verbose:
            print(
                f"batch {batch_idx:4d} reward {row['mean_reward']:+.4f} "
                f"violation {row['mean_violation']:.3f} lambda {row['lambda']:.3f} "
                f"kl {row['kl']:.4f} epochs {diag['epochs']}"
            )
        if batch["mean_reward"] < cfg.divergence_floor:
            if curve_path is not None:
                write_training_curve(curve, curve_path)
            raise TrainingDivergence(
                f"mean reward {batch['mean_reward']:.3f} below "
                f"{cfg.divergence_floor}; last diagnostics: {diag}"
            )
        recent.append(batch["mean_reward"])
        if len(recent) > cfg.plateau_window:
            recent.pop(0)
        if len(recent) == cfg.plateau_window and max(recent) - min(recent) < cfg.plateau_tol:
            break
    if curve_path is not None:
        write_training_curve(curve, curve_path)
    return params, curve


CURVE_FIELDS = ("epoch", "mean_reward", "mean_violation", "lambda", "kl")


def write_training_curve(curve: list[dict], path: str | Path):
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(CURVE_FIELDS))
        writer.writeheader()
        for row in curve:
            writer.writerow({k: row[k] for k in CURVE_FIELDS})


def evaluate_policy(
    env,
    params: PolicyParams | None,
    episodes: int,
    seed: int = 0,
    stochastic: bool = False,
) -> dict:
    """Mean episodic return of a policy on seeded held-out episodes.

    params=None plays uniform-random actions.  Episodes alternate open and
    close resets.  Also reports the mean final-configuration violation.
    """
    ss = np.random.SeedSequence(seed)
    ep_rng, act_rng = [np.random.default_rng(int(s.generate_state(1)[0])) for s in ss.spawn(2)]
    returns, final_vio = [], []
    for ep in range(episodes):
        mode = "open" if ep % 2 == 0 else "close"
        obs = env.reset(mode=mode, episode_seed=int(ep_rng.integers(0, 2**63 - 1)))
        total = 0.0
        done = False
        info = {"r_vio": env.r_vio}
        while not done:
            if params is None:
                a = act_rng.integers(0, N_CHOICES, env.n_actions)
            else:
                logits, _, _ = forward(params, obs[None, :])
                a = sample_actions(act_rng, logits) if stochastic else argmax_actions(logits)
            obs, terms, done, info = env.step(a - 1)
            total += terms.total
        returns.append(total)
        final_vio.append(info["r_vio"])
    return {
        "mean_return": float(np.mean(returns)),
        "returns": returns,
        "mean_final_violation": float(np.mean(final_vio)),
    }


_CKPT_MAGIC = b"EARLPOL\x01"
_CKPT_VERSION = 1


def save_checkpoint(params: PolicyParams, path: str | Path):
    """Write a policy checkpoint: versioned header, layer shapes, then
    row-major float32 weights."""
    header = {
        "obs_dim": params.obs_dim,
        "n_ru": params.n_ru,
        "hidden": list(params.hidden),
        "keys": list(params.layers.keys()),
    }
    blob = json.dumps(header).encode()
    with open(path, "wb") as fh:
        fh.write(_CKPT_MAGIC)
        fh.write(struct.pack("<II", _CKPT_VERSION, len(blob)))
        fh.write(blob)
        for key in header["keys"]:
            arr = params.layers[key]
            fh.write(struct.pack("<I", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(arr.astype("<f4").tobytes(order="C"))


def load_checkpoint(path: str | Path) -> PolicyParams:
    raw = Path(path).read_bytes()
    if raw[: len(_CKPT_MAGIC)] != _CKPT_MAGIC:
        raise ConfigurationError(f"{path}: not a policy checkpoint")
    off = len(_CKPT_MAGIC)
    version, blob_len = struct.unpack_from("<II", raw, off)
    if version != _CKPT_VERSION:
        raise ConfigurationError(f"{path}: unsupported checkpoint version {version}")
    off += 8
    header = json.loads(raw[off : off + blob_len].decode())
    off += blob_len
    layers = {}
    for key in header["keys"]:
        (ndim,) = struct.unpack_from("<I", raw, off)
        off += 4
        shape = struct.unpack_from(f"<{ndim}I", raw, off)
        off += 4 * ndim
        count = int(np.prod(shape))
        arr = np.frombuffer(raw, dtype="<f4", count=count, offset=off)
        off += arr.nbytes
        layers[key] = arr.reshape(shape).astype(float)
    return PolicyParams(
        obs_dim=header["obs_dim"],
        n_ru=header["n_ru"],
        hidden=tuple(header["hidden"]),
        layers=layers,
    )
