"""Episodic environment for learning antenna activation policies.

Each episode draws a fresh UE drop and a paired channel realization batch,
then lets the agent adjust the activation vector with per-RU increments in
{-1, 0, +1} for a fixed horizon.  Rewards trade antenna usage against the
SE-violation ratio under a Lagrangian weight that the trainer adapts
between batches.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .channel import generate_channel_set
from .downlink import evaluate
from .scenario import Scenario, build_deployment

RESET_MODES = ("open", "close")
CLIP_PENALTY = 0.05      # per action component pushed outside [0, N]
SHUTDOWN_PENALTY = 1.0   # for reaching the all-zero activation


@dataclass
class RewardTerms:
    """Additive reward decomposition for one step."""

    antenna: float        # -sum(n) / (L*N)
    violation: float      # -lambda * r_vio
    invalid: float        # -(clip and shutdown penalties)

    @property
    def total(self) -> float:
        return self.antenna + self.violation + self.invalid


def normalize_gains_db(beta: np.ndarray) -> np.ndarray:
    """Min-max scale dB gains to [0, 1]; constant input maps to zeros."""
    beta_db = 10.0 * np.log10(np.asarray(beta, dtype=float))
    lo, hi = beta_db.min(), beta_db.max()
    if hi - lo <= 0:
        return np.zeros_like(beta_db)
    return (beta_db - lo) / (hi - lo)


def pack_observation(
    phi_feat: np.ndarray, n: np.ndarray, n_ant: int, p_norm: float, r_vio: float
) -> np.ndarray:
    """Flat observation [vec(phi), n/N, p_norm, r_vio] of length L*K + L + 2."""
    return np.concatenate(
        [phi_feat.ravel(), np.asarray(n, dtype=float) / n_ant, [p_norm, r_vio]]
    )


def observation_size(n_ru: int, n_ue: int) -> int:
    return n_ru * n_ue + n_ru + 2


def update_lambda(lam: float, mean_violation: float, eta: float, r_star: float) -> float:
    """Dual ascent on the violation constraint: lam <- max(0, lam + eta*(V - V*))."""
    return max(0.0, lam + eta * (mean_violation - r_star))


class AntennaEnv:
    """Fixed-horizon activation-control environment.

    One episode works on a single deployment and realization batch; the
    power-normalization reference is that episode's full-on consumption.
    The Lagrangian weight `lam` is an attribute so the trainer can anneal
    it between batches without touching episodes in flight.
    """

    def __init__(
        self,
        scenario: Scenario,
        se_min: float,
        n_realizations: int = 100,
        horizon: int | None = None,
        lam: float = 0.3,
    ):
        self.scenario = scenario
        self.se_min = se_min
        self.n_realizations = n_realizations
        self.horizon = 2 * scenario.n_ant if horizon is None else horizon
        self.lam = lam
        self.chset = None
        self.trace: list[dict] = []

    @property
    def observation_size(self) -> int:
        return observation_size(self.scenario.n_ru, self.scenario.n_ue)

    @property
    def n_actions(self) -> int:
        return self.scenario.n_ru

    def _evaluate(self, n: np.ndarray):
        key = tuple(int(v) for v in n)
        hit = self._cache.get(key)
        if hit is None:
            hit = evaluate(self.chset, n, self.scenario, self.se_min)
            self._cache[key] = hit
        return hit

    def reset(self, mode: str = "open", episode_seed: int = 0) -> np.ndarray:
        if mode not in RESET_MODES:
            raise ValueError(f"reset mode must be one of {RESET_MODES}")
        scn = self.scenario
        ss = np.random.SeedSequence(episode_seed)
        dep_seed, ch_seed = [int(s.generate_state(1)[0]) for s in ss.spawn(2)]
        deployment = build_deployment(scn, seed=dep_seed)
        self.chset = generate_channel_set(scn, deployment, self.n_realizations, ch_seed)
        self._cache = {}
        self.phi_feat = normalize_gains_db(self.chset.beta)
        full = np.full(scn.n_ru, scn.n_ant)
        self.p_max = self._evaluate(full).power.p_total_w
        self.n = full.copy() if mode == "open" else np.zeros(scn.n_ru, dtype=int)
        self.t = 0
        self.mode = mode
        res = self._evaluate(self.n)
        self.r_vio = res.r_vio
        self.p_norm = min(1.0, res.power.p_total_w / self.p_max)
        return self._observation()

    def _observation(self) -> np.ndarray:
        return pack_observation(
            self.phi_feat, self.n, self.scenario.n_ant, self.p_norm, self.r_vio
        )

    def step(self, action: np.ndarray) -> tuple[np.ndarray, RewardTerms, bool, dict]:
        """Apply per-RU increments in {-1, 0, +1}; returns (obs, terms, done, info)."""
        if self.chset is None:
            raise RuntimeError("call reset() before step()")
        scn = self.scenario
        action = np.asarray(action, dtype=int)
        if action.shape != (scn.n_ru,) or np.abs(action).max() > 1:
            raise ValueError("action must be (L,) with entries in {-1, 0, 1}")
        raw = self.n + action
        new_n = np.clip(raw, 0, scn.n_ant)
        clipped = int((raw != new_n).sum())
        invalid = CLIP_PENALTY * clipped
        if new_n.sum() == 0:
            invalid += SHUTDOWN_PENALTY
        res = self._evaluate(new_n)
        self.n = new_n
        self.r_vio = res.r_vio
        self.p_norm = min(1.0, res.power.p_total_w / self.p_max)
        terms = RewardTerms(
            antenna=-float(new_n.sum()) / scn.total_antennas,
            violation=-self.lam * res.r_vio,
            invalid=-invalid,
        )
        self.t += 1
        done = self.t >= self.horizon
        info = {
            "n": new_n.copy(),
            "r_vio": res.r_vio,
            "p_total_w": res.power.p_total_w,
            "clipped": clipped,
            "se": res.se,
        }
        self.trace.append(
            {
                "t": self.t,
                "mode": self.mode,
                "action": " ".join(map(str, action)),
                "n": " ".join(map(str, new_n)),
                "reward": terms.total,
                "zeta": invalid,
                "r_vio": res.r_vio,
                "p_norm": self.p_norm,
            }
        )
        return self._observation(), terms, done, info

    def dump_trace(self, path: str | Path):
        """Write the accumulated per-step trace as CSV."""
        if not self.trace:
            return
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(self.trace[0]))
            writer.writeheader()
            writer.writerows(self.trace)

    def clear_trace(self):
        self.trace.clear()
