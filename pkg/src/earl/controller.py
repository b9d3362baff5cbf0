"""Inference-time activation control: policy rollouts plus greedy refinement.

The controller rolls the trained policy twice on the same gain matrix, once
from the fully-open and once from the fully-closed activation, simulates
both final configurations on a shared realization batch, keeps the
candidate with the lowest violation ratio (power breaks ties), and can
refine it by greedily removing antennas RU by RU while the violation ratio
does not increase.

Rollouts use gains only: the power feature of the observation comes from
the power model with zero radiated load, and the violation feature keeps
its reset value, so no channel simulation happens inside the rollout loop.
"""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .channel import ChannelRealizationSet
from .downlink import EvaluationResult, check_activation, evaluate
from .powermodel import total_power
from .ppo import PolicyParams, argmax_actions, forward, sample_actions
from .rlenv import normalize_gains_db, pack_observation
from .scenario import Scenario


@dataclass
class Candidate:
    """One evaluated activation vector."""

    n: np.ndarray
    p_total_w: float
    r_vio: float


def simulate(
    n: np.ndarray,
    chset: ChannelRealizationSet,
    scenario: Scenario,
    se_min: float,
    cache: dict | None = None,
) -> tuple[float, float]:
    """(total watt, violation ratio) of n on the shared realization batch.

    A cache dict maps tuple(n) to the full EvaluationResult so repeated
    queries during refinement are free.
    """
    result = simulate_full(n, chset, scenario, se_min, cache)
    return result.power.p_total_w, result.r_vio


def simulate_full(
    n: np.ndarray,
    chset: ChannelRealizationSet,
    scenario: Scenario,
    se_min: float,
    cache: dict | None = None,
) -> EvaluationResult:
    key = tuple(int(v) for v in np.asarray(n, dtype=int))
    if cache is not None and key in cache:
        return cache[key]
    result = evaluate(chset, np.asarray(n, dtype=int), scenario, se_min)
    if cache is not None:
        cache[key] = result
    return result


def rollout(
    policy: PolicyParams,
    phi: np.ndarray,
    mode: str,
    horizon: int,
    scenario: Scenario,
    se_min: float,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Roll the policy for `horizon` steps from the mode's initial activation.

    phi is the (K, L) gain matrix.  Actions are argmax choices unless an rng
    is supplied for stochastic rollouts.  Returns the final activation.
    """
    scn = scenario
    phi_feat = normalize_gains_db(phi)
    full = np.full(scn.n_ru, scn.n_ant)
    p_ref = total_power(scn, full, None, se_min).p_total_w
    if mode == "open":
        n = full.copy()
        vio_feat = 0.0
    elif mode == "close":
        n = np.zeros(scn.n_ru, dtype=int)
        vio_feat = 1.0
    else:
        raise ValueError("mode must be 'open' or 'close'")
    for _ in range(horizon):
        p_norm = min(1.0, total_power(scn, n, None, se_min).p_total_w / p_ref)
        obs = pack_observation(phi_feat, n, scn.n_ant, p_norm, vio_feat)
        logits, _, _ = forward(policy, obs[None, :])
        a = argmax_actions(logits) if rng is None else sample_actions(rng, logits)
        n = np.clip(n + (a - 1), 0, scn.n_ant)
    return n


def select(candidates: list[Candidate]) -> Candidate:
    """Lowest violation ratio wins; power breaks ties."""
    if not candidates:
        raise ValueError("no candidates to select from")
    return min(candidates, key=lambda c: (c.r_vio, c.p_total_w))


def greedy_refine(
    n: np.ndarray,
    chset: ChannelRealizationSet,
    scenario: Scenario,
    se_min: float,
    cache: dict | None = None,
) -> Candidate:
    """Single-sweep antenna removal on the shared realization batch.

    Visits RUs in index order; each RU's count is decremented while the
    re-simulated violation ratio does not exceed the current one.  The
    first rejected decrement moves the sweep to the next RU.
    """
    n = check_activation(n, scenario.n_ru, scenario.n_ant).copy()
    cache = {} if cache is None else cache
    power, r_vio = simulate(n, chset, scenario, se_min, cache)
    for l in range(scenario.n_ru):
        while n[l] > 0:
            trial = n.copy()
            trial[l] -= 1
            trial_power, trial_vio = simulate(trial, chset, scenario, se_min, cache)
            if trial_vio > r_vio:
                break
            n, power, r_vio = trial, trial_power, trial_vio
    return Candidate(n=n, p_total_w=power, r_vio=r_vio)


def earl_infer(
    policy: PolicyParams,
    phi: np.ndarray,
    chset: ChannelRealizationSet,
    scenario: Scenario,
    se_min: float,
    refine: bool = True,
    horizon: int | None = None,
    cache: dict | None = None,
) -> tuple[Candidate, float]:
    """Full inference pass: dual rollouts, selection, optional refinement.

    Returns the chosen Candidate and the controller wall time in seconds
    (rollouts, simulations, and refinement; channel generation excluded).
    """
    horizon = 2 * scenario.n_ant if horizon is None else horizon
    cache = {} if cache is None else cache
    t0 = time.perf_counter()
    candidates = []
    for mode in ("open", "close"):
        n = rollout(policy, phi, mode, horizon, scenario, se_min)
        power, r_vio = simulate(n, chset, scenario, se_min, cache)
        candidates.append(Candidate(n=n, p_total_w=power, r_vio=r_vio))
    chosen = select(candidates)
    if refine:
        chosen = greedy_refine(chosen.n, chset, scenario, se_min, cache)
    return chosen, time.perf_counter() - t0
